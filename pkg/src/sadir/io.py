"""On-disk formats: raw tensors, training checkpoints, 16-bit PGM and MTF CSV.

Raw tensor layout (``.ctr``)::

    8 bytes   magic  b"CTRAW01\\n"
    4 bytes   header length, little-endian unsigned
    n bytes   UTF-8 JSON header
    rest      row-major little-endian float64 payload

Checkpoints use the same container with magic ``b"CTCKP01\\n"``.  Their
payload is the flat parameter vector (``net.param_names`` order) followed by
the loss history.  Python's JSON writer emits the shortest repr of every float,
so header values such as angles also round-trip bit-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Geometry, Grid, Image, Sinogram
from .metrics import MtfCurve
from .net import NetParams, param_names
from .train import TrainConfig

RAW_MAGIC = b"CTRAW01\n"
CKPT_MAGIC = b"CTCKP01\n"
CHECKPOINT_VERSION = 1
_LEN = struct.Struct("<I")
_F64 = np.dtype("<f8")


class FormatError(ValueError):
    """Base class for unreadable input files."""

    code = "format"


class BadMagicError(FormatError):
    code = "bad_magic"


class VersionMismatchError(FormatError):
    code = "version_mismatch"


class TruncatedPayloadError(FormatError):
    code = "truncated_payload"


class HeaderError(FormatError):
    code = "bad_header"


# --- container ------------------------------------------------------------------


def _write_container(path, magic: bytes, header: dict, payload: np.ndarray):
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(magic)
        f.write(_LEN.pack(len(head)))
        f.write(head)
        f.write(np.ascontiguousarray(payload, dtype=_F64).tobytes())


def _read_container(path, magic: bytes):
    blob = Path(path).read_bytes()
    if blob[: len(magic) - 3] == magic[:-3] and blob[: len(magic)] != magic and len(blob) >= len(magic):
        found = blob[len(magic) - 3 : len(magic) - 1].decode("ascii", "replace")
        raise VersionMismatchError(f"{path}: format version {found!r}, expected {magic[-3:-1].decode()!r}")
    if blob[: len(magic)] != magic:
        raise BadMagicError(f"{path}: not a {magic[:-1].decode()} file")
    pos = len(magic)
    if len(blob) < pos + _LEN.size:
        raise TruncatedPayloadError(f"{path}: truncated header length")
    (n,) = _LEN.unpack_from(blob, pos)
    pos += _LEN.size
    if len(blob) < pos + n:
        raise TruncatedPayloadError(f"{path}: truncated header")
    try:
        header = json.loads(blob[pos : pos + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderError(f"{path}: unreadable header ({exc})") from None
    if not isinstance(header, dict):
        raise HeaderError(f"{path}: header is not a JSON object")
    return header, blob[pos + n :]


def _payload(path, body: bytes, count: int) -> np.ndarray:
    need = 8 * count
    if len(body) < need:
        raise TruncatedPayloadError(f"{path}: truncated payload ({len(body)} of {need} bytes)")
    if len(body) > need:
        raise HeaderError(f"{path}: {len(body) - need} trailing bytes after payload")
    return np.frombuffer(body, dtype=_F64).astype(np.float64)


# --- raw tensors ----------------------------------------------------------------


def save_image(img: Image, path):
    header = {"dtype": "f64", "shape": list(img.data.shape), "kind": "image", "pixel_size": img.pixel_size,
              "units": "mm^-1"}
    _write_container(path, RAW_MAGIC, header, img.data)


def save_sinogram(sino: Sinogram, path, geom: Geometry | None = None):
    """``geom`` (recommended) is stored alongside so later steps need no separate geometry file."""
    header = {"dtype": "f64", "shape": list(sino.data.shape), "kind": "sinogram", "det_spacing": sino.det_spacing,
              "units": "mm^-1 * mm"}
    if geom is not None:
        if geom.shape != sino.data.shape or geom.det_spacing != sino.det_spacing:
            raise ValueError("geometry does not describe this sinogram")
        header["angles"] = list(geom.angles)
        header["det_center_offset"] = geom.det_center_offset
    _write_container(path, RAW_MAGIC, header, sino.data)


def load_raw(path):
    """Returns ``(header, array)``."""
    header, body = _read_container(path, RAW_MAGIC)
    if header.get("dtype") != "f64":
        raise HeaderError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    shape = header.get("shape")
    if not (isinstance(shape, list) and len(shape) == 2 and all(isinstance(s, int) and s > 0 for s in shape)):
        raise HeaderError(f"{path}: bad shape {shape!r}")
    if header.get("kind") not in ("image", "sinogram"):
        raise HeaderError(f"{path}: unknown kind {header.get('kind')!r}")
    data = _payload(path, body, shape[0] * shape[1]).reshape(shape)
    return header, data


def load_image(path) -> Image:
    header, data = load_raw(path)
    if header["kind"] != "image":
        raise HeaderError(f"{path}: expected an image, found a {header['kind']}")
    try:
        return Image(data, float(header["pixel_size"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"{path}: {exc}") from None


def load_sinogram(path):
    """Returns ``(Sinogram, Geometry or None)``."""
    header, data = load_raw(path)
    if header["kind"] != "sinogram":
        raise HeaderError(f"{path}: expected a sinogram, found an {header['kind']}")
    try:
        sino = Sinogram(data, float(header["det_spacing"]))
        geom = None
        if "angles" in header:
            geom = Geometry(tuple(header["angles"]), data.shape[1], sino.det_spacing,
                            float(header.get("det_center_offset", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"{path}: {exc}") from None
    if geom is not None and geom.shape != data.shape:
        raise HeaderError(f"{path}: {geom.n_views} angles for {data.shape[0]} views")
    return sino, geom


# --- checkpoints ----------------------------------------------------------------


@dataclass
class Checkpoint:
    params: NetParams
    config: TrainConfig
    losses: list
    grid: Grid
    version: int = CHECKPOINT_VERSION


def save_checkpoint(ckpt: Checkpoint, path):
    theta = ckpt.params.to_vector()
    losses = np.asarray(ckpt.losses, dtype=np.float64)
    header = {
        "version": ckpt.version,
        "config": ckpt.config.to_dict(),
        "n_blocks": len(ckpt.params.blocks),
        "n_params": int(theta.size),
        "n_losses": int(losses.size),
        "grid": {"n": ckpt.grid.n, "pixel_size": ckpt.grid.pixel_size},
        "param_order": "per block: lambda1 lambda2 lambda3, c1..c3 taps, b1..b3 taps row-major, "
                       "channels 0..3 each g1 g2 g3 row-major then gamma mu log_delta",
    }
    _write_container(path, CKPT_MAGIC, header, np.concatenate([theta, losses]))


def load_checkpoint(path) -> Checkpoint:
    header, body = _read_container(path, CKPT_MAGIC)
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(f"{path}: checkpoint version {header.get('version')!r}, "
                                   f"expected {CHECKPOINT_VERSION}")
    try:
        n_blocks = int(header["n_blocks"])
        n_params = int(header["n_params"])
        n_losses = int(header["n_losses"])
        config = TrainConfig.from_dict(header["config"])
        grid = Grid(int(header["grid"]["n"]), float(header["grid"]["pixel_size"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise HeaderError(f"{path}: {exc}") from None
    if n_params != len(param_names(n_blocks)):
        raise HeaderError(f"{path}: {n_params} parameters do not fit {n_blocks} blocks")
    values = _payload(path, body, n_params + n_losses)
    params = NetParams.from_vector(values[:n_params].copy(), n_blocks)
    return Checkpoint(params, config, values[n_params:].tolist(), grid, header["version"])


# --- exports --------------------------------------------------------------------


def window_to_u16(data: np.ndarray, window) -> np.ndarray:
    """Linear map of ``[lo, hi]`` onto ``[0, 65535]`` with clipping, rounding half up."""
    lo, hi = (float(w) for w in window)
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError(f"invalid display window [{lo}, {hi}]")
    scaled = (np.asarray(data, dtype=np.float64) - lo) / (hi - lo) * 65535.0
    return np.floor(np.clip(scaled, 0.0, 65535.0) + 0.5).astype(np.uint16)


def export_pgm16(img: Image, window, path):
    data = getattr(img, "data", img)
    levels = window_to_u16(data, window)
    rows, cols = levels.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{cols} {rows}\n65535\n".encode("ascii"))
        f.write(levels.astype(">u2").tobytes())


def read_pgm16(path) -> np.ndarray:
    """Reader for files written by :func:`export_pgm16` (no comment lines)."""
    blob = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        fields.append(blob[start:pos])
    if fields[0] != b"P5" or fields[3] != b"65535":
        raise FormatError(f"{path}: not a 16-bit binary PGM")
    cols, rows = int(fields[1]), int(fields[2])
    body = blob[pos + 1 :]
    if len(body) < 2 * rows * cols:
        raise TruncatedPayloadError(f"{path}: truncated PGM payload")
    return np.frombuffer(body[: 2 * rows * cols], dtype=">u2").reshape(rows, cols).astype(np.uint16)


def write_mtf_csv(curve: MtfCurve, path):
    with open(path, "w", encoding="ascii") as f:
        f.write("frequency_per_mm,mtf\n")
        f.write(curve.to_csv())
