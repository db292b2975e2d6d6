"""Zero-shot CT super-resolution with an unrolled super-resolution/deblur network."""

import os

# the TBB layer shipped with some numba wheels is too old and warns on import
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"
