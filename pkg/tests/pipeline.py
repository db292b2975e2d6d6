"""Shared driver that runs the command-line workflow end to end in a directory."""

import json

from sadir.cli import main

TOY_PHANTOM = {"kind": "bar_pattern", "n": 128, "pixel_size": 1.0,
               "params": {"freqs": [0.1, 0.15, 0.2, 0.25, 0.3]}}
TOY_GEOMETRY = {"n_views": 90, "n_det": 256, "det_spacing": 0.5}
# vertical edge of the insert in the 256 x 256 reconstruction
TOY_ROI = ["176", "208", "82", "122"]


def run_pipeline(workdir, seed=0, epochs=2, lr=1e-3):
    """Phantom -> fine sinogram -> binned sinogram -> train -> reconstruct -> eval.

    Returns the exit status of every step, keyed by subcommand.
    """
    (workdir / "phantom.json").write_text(json.dumps(TOY_PHANTOM))
    (workdir / "geom.json").write_text(json.dumps(TOY_GEOMETRY))
    w = str(workdir)
    steps = [
        ("phantom", ["phantom", "--spec", f"{w}/phantom.json", "--out", f"{w}/phantom.ctr"]),
        ("project", ["project", "--img", f"{w}/phantom.ctr", "--geom", f"{w}/geom.json", "--out", f"{w}/hr.ctr"]),
        ("bin-detector", ["bin-detector", "--sino", f"{w}/hr.ctr", "--out", f"{w}/acquired.ctr"]),
        ("fbp", ["fbp", "--sino", f"{w}/hr.ctr", "--out", f"{w}/reference.ctr"]),
        ("simulate-lr", ["simulate-lr", "--sino", f"{w}/acquired.ctr", "--out", f"{w}/train_lr.ctr",
                         "--ref-out", f"{w}/train_ref.ctr"]),
        ("train", ["train", "--sino", f"{w}/acquired.ctr", "--seed", str(seed), "--epochs", str(epochs),
                   "--lr", str(lr), "--out", f"{w}/model.ckpt"]),
        ("reconstruct", ["reconstruct", "--sino", f"{w}/acquired.ctr", "--ckpt", f"{w}/model.ckpt",
                         "--out", f"{w}/sadir.ctr"]),
        ("baseline-bicubic", ["baseline-bicubic", "--sino", f"{w}/acquired.ctr", "--out", f"{w}/bicubic.ctr"]),
        ("eval", ["eval", "--test", f"{w}/sadir.ctr", "--ref", f"{w}/reference.ctr", "--roi", *TOY_ROI,
                  "--runtime-seconds", "0", "--report", f"{w}/metrics.json"]),
        ("mtf", ["mtf", "--img", f"{w}/sadir.ctr", "--roi", *TOY_ROI, "--report", f"{w}/mtf.csv"]),
        ("export-pgm", ["export-pgm", "--img", f"{w}/sadir.ctr", "--window", "0", "0.08",
                        "--out", f"{w}/sadir.pgm"]),
    ]
    status = {}
    for name, argv in steps:
        status[name] = main(argv)
        if status[name] != 0:
            break
    return status


ARTIFACTS = ["phantom.ctr", "hr.ctr", "acquired.ctr", "reference.ctr", "train_lr.ctr", "train_ref.ctr",
             "model.ckpt", "sadir.ctr", "bicubic.ctr", "metrics.json", "mtf.csv", "sadir.pgm"]
