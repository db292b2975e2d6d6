"""Command-line driver: phantom -> project -> train -> reconstruct -> eval.

Exit status is 0 on success, 1 for usage errors, 2 for unreadable or invalid
input and 3 for numerical failure.  Failures print a single line to stderr::

    sadir: error=<kind> exit=<status> message=<text>
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import __version__
from .conv import conv1d
from .geometry import Geometry, Grid, Image, Sinogram
from .io import (Checkpoint, FormatError, export_pgm16, load_checkpoint, load_image, load_sinogram, save_checkpoint,
                 save_image, save_sinogram, write_mtf_csv)
from .metrics import bicubic_upscale2, mtf_at, mtf_edge, nearest_upscale2, rmse, ssim
from .net import init_params
from .phantoms import PhantomSpec, generate
from .resample import downsample_array
from .tomo import fbp_array, project_array
from .train import NumericalError, TrainConfig, build_zsl_pair, reconstruct, train

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(data, dict):
        raise InputError(f"{path}: expected a JSON object")
    return data


def _write_json(path, data: dict):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def _geometry_from_json(path) -> Geometry:
    g = _read_json(path)
    try:
        return Geometry.parallel(int(g["n_views"]), int(g["n_det"]), float(g["det_spacing"]),
                                 float(g.get("arc", np.pi)), float(g.get("det_center_offset", 0.0)))
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc}") from None


def _grid_from_json(path) -> Grid:
    g = _read_json(path)
    try:
        return Grid(int(g["n"]), float(g["pixel_size"]))
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc}") from None


def _sinogram_with_geometry(args):
    sino, geom = load_sinogram(args.sino)
    if getattr(args, "geom", None):
        geom = _geometry_from_json(args.geom)
    if geom is None:
        raise InputError(f"{args.sino}: no geometry stored; pass --geom")
    if geom.shape != sino.data.shape:
        raise InputError(f"geometry {geom.shape} does not match sinogram {sino.data.shape}")
    return sino, geom


def _native_grid(geom: Geometry) -> Grid:
    """Grid whose pixels match the detector pitch and whose width spans the detector."""
    return Grid(geom.n_det, geom.det_spacing)


def _grid_arg(args, geom: Geometry) -> Grid:
    return _grid_from_json(args.grid) if getattr(args, "grid", None) else _native_grid(geom)


# --- subcommands ----------------------------------------------------------------


def cmd_phantom(args):
    cfg = _read_json(args.spec)
    try:
        spec = PhantomSpec(cfg["kind"], int(cfg.get("n", 256)), float(cfg.get("pixel_size", 0.5)),
                           dict(cfg.get("params", {})))
    except KeyError as exc:
        raise InputError(f"{args.spec}: missing field {exc}") from None
    save_image(generate(spec), args.out)


def cmd_project(args):
    img = load_image(args.img)
    geom = _geometry_from_json(args.geom)
    save_sinogram(Sinogram(project_array(img.data, geom, img.pixel_size), geom.det_spacing), args.out, geom)


def cmd_bin(args):
    sino, geom = _sinogram_with_geometry(args)
    kernel = [float(v) for v in args.kernel]
    coarse = downsample_array(conv1d(sino.data, kernel))
    lower = geom.lower()
    save_sinogram(Sinogram(coarse, lower.det_spacing), args.out, lower)


def cmd_fbp(args):
    sino, geom = _sinogram_with_geometry(args)
    grid = _grid_arg(args, geom)
    save_image(Image(fbp_array(sino.data, geom, grid.n, grid.pixel_size), grid.pixel_size), args.out)


def cmd_simulate_lr(args):
    sino, geom = _sinogram_with_geometry(args)
    grid = _grid_arg(args, geom)
    y_l, x_ref = build_zsl_pair(sino, geom, grid, args.noise_std, args.seed)
    save_sinogram(y_l, args.out, geom.lower())
    if args.ref_out:
        save_image(x_ref, args.ref_out)


def cmd_train(args):
    sino, geom = _sinogram_with_geometry(args)
    grid = _grid_arg(args, geom)
    cfg = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    overrides = {k: v for k, v in (("seed", args.seed), ("epochs", args.epochs), ("learning_rate", args.lr))
                 if v is not None}
    cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides})
    params, losses = train(sino, geom, grid, cfg)
    save_checkpoint(Checkpoint(params, cfg, losses, grid), args.out)


def cmd_init(args):
    cfg = TrainConfig.from_dict(_read_json(args.config)) if args.config else TrainConfig()
    overrides = {"epochs": 0} if args.seed is None else {"epochs": 0, "seed": args.seed}
    cfg = TrainConfig.from_dict({**cfg.to_dict(), **overrides})
    params = init_params(cfg.seed, cfg.init_std, cfg.n_blocks, cfg.lambda_init)
    save_checkpoint(Checkpoint(params, cfg, [], _grid_from_json(args.grid)), args.out)


def cmd_reconstruct(args):
    sino, geom = _sinogram_with_geometry(args)
    ckpt = load_checkpoint(args.ckpt)
    grid = _grid_from_json(args.grid) if args.grid else _native_grid(geom).doubled()
    save_image(reconstruct(sino, ckpt.params, geom, grid), args.out)


def _mtf_pair(img: Image, roi, axis):
    curve = mtf_edge(img, roi, axis)
    return curve, mtf_at(curve, 0.5), mtf_at(curve, 0.1)


def cmd_eval(args):
    t0 = time.perf_counter()
    test, ref = load_image(args.test), load_image(args.ref)
    if test.data.shape != ref.data.shape:
        raise InputError(f"test image {test.data.shape} and reference {ref.data.shape} differ in size")
    report = {"rmse": rmse(test, ref), "ssim": ssim(test, ref), "mtf50": None, "mtf10": None}
    if args.roi:
        _, report["mtf50"], report["mtf10"] = _mtf_pair(test, tuple(args.roi), args.edge_axis)
    measured = time.perf_counter() - t0
    report["runtime_seconds"] = measured if args.runtime_seconds is None else args.runtime_seconds
    _write_json(args.report, report)


def cmd_mtf(args):
    img = load_image(args.img)
    curve, m50, m10 = _mtf_pair(img, tuple(args.roi), args.edge_axis)
    write_mtf_csv(curve, args.report)
    print(json.dumps({"mtf50": m50, "mtf10": m10}))


def cmd_baseline(args):
    sino, geom = _sinogram_with_geometry(args)
    grid = _grid_arg(args, geom)
    low = Image(fbp_array(sino.data, geom, grid.n, grid.pixel_size), grid.pixel_size)
    up = nearest_upscale2(low) if args.method == "nearest" else bicubic_upscale2(low)
    save_image(up, args.out)


def cmd_export_pgm(args):
    export_pgm16(load_image(args.img), args.window, args.out)


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sadir", description="Zero-shot CT super-resolution toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        s = sub.add_parser(name, help=help_text, description=help_text)
        s.set_defaults(func=func)
        s.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        return s

    def sino_args(s, grid=True):
        s.add_argument("--sino", required=True, help="sinogram .ctr file")
        s.add_argument("--geom", help="geometry JSON; overrides the geometry stored in the sinogram")
        if grid:
            s.add_argument("--grid", help="grid JSON {n, pixel_size}; default matches the detector")

    s = add("phantom", cmd_phantom, "render a phantom from a JSON spec")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)

    s = add("project", cmd_project, "forward-project an image")
    s.add_argument("--img", required=True)
    s.add_argument("--geom", required=True, help="JSON {n_views, n_det, det_spacing, arc?, det_center_offset?}")
    s.add_argument("--out", required=True)

    s = add("bin-detector", cmd_bin, "blur and 2x bin the detector (simulated coarse acquisition)")
    sino_args(s, grid=False)
    s.add_argument("--kernel", nargs=3, type=float, default=[0.25, 0.5, 0.25], metavar="K")
    s.add_argument("--out", required=True)

    s = add("fbp", cmd_fbp, "filtered back-projection")
    sino_args(s)
    s.add_argument("--out", required=True)

    s = add("simulate-lr", cmd_simulate_lr, "build the zero-shot training sinogram from an acquired one")
    sino_args(s)
    s.add_argument("--noise-std", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ref-out", help="also write the training target image")
    s.add_argument("--out", required=True)

    s = add("init", cmd_init, "write an untrained checkpoint")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--grid", required=True)
    s.add_argument("--out", required=True)

    s = add("train", cmd_train, "zero-shot training on one acquired sinogram")
    sino_args(s)
    s.add_argument("--config", help="JSON with TrainConfig fields")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--out", required=True)

    s = add("reconstruct", cmd_reconstruct, "apply a trained checkpoint at twice the detector resolution")
    sino_args(s)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--out", required=True)

    s = add("eval", cmd_eval, "compare an image with a reference")
    s.add_argument("--test", required=True)
    s.add_argument("--ref", required=True)
    s.add_argument("--roi", nargs=4, type=int, metavar=("R0", "R1", "C0", "C1"), help="edge ROI for MTF")
    s.add_argument("--edge-axis", choices=("vertical", "horizontal"), default="vertical")
    s.add_argument("--runtime-seconds", type=float,
                   help="record this runtime (for example of training) instead of the measured eval time")
    s.add_argument("--report", required=True)

    s = add("mtf", cmd_mtf, "edge-method MTF of an ROI, written as CSV")
    s.add_argument("--img", required=True)
    s.add_argument("--roi", nargs=4, type=int, required=True, metavar=("R0", "R1", "C0", "C1"))
    s.add_argument("--edge-axis", choices=("vertical", "horizontal"), default="vertical")
    s.add_argument("--report", required=True)

    s = add("baseline-bicubic", cmd_baseline, "FBP at detector resolution followed by 2x interpolation")
    sino_args(s)
    s.add_argument("--method", choices=("bicubic", "nearest"), default="bicubic")
    s.add_argument("--out", required=True)

    s = add("export-pgm", cmd_export_pgm, "write a windowed 16-bit PGM")
    s.add_argument("--img", required=True)
    s.add_argument("--window", nargs=2, type=float, required=True, metavar=("LO", "HI"))
    s.add_argument("--out", required=True)
    return p


def _fail(kind: str, status: int, message) -> int:
    text = " ".join(str(message).split())
    print(f"sadir: error={kind} exit={status} message={text}", file=sys.stderr)
    return status


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except NumericalError as exc:
        return _fail("numeric", EXIT_NUMERIC, exc)
    except FormatError as exc:
        return _fail(exc.code, EXIT_INPUT, exc)
    except InputError as exc:
        return _fail("input", EXIT_INPUT, exc)
    except OSError as exc:
        return _fail("io", EXIT_INPUT, f"{exc.filename}: {exc.strerror}")
    except (ValueError, TypeError) as exc:
        return _fail("input", EXIT_INPUT, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
