"""Command-line front end: ``ssfad {detect,eval,synth,sweep}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from typing import List, Optional, Sequence

from . import __version__
from .baselines import grx_map, lrx_map
from .core import HyperCube, load_cube, load_map, load_mask, save_cube, save_map, save_mask
from .evaluation import auc, roc_auc, roc_curve, separability_stats, write_roc_csv, write_stats_csv
from .fusion import AVERAGE, fuse, fuse_adaptive
from .spatial import SpatialParams, spatial_map
from .spectral import COVARIANCE_MODES, SALIENCY_INPUTS, TEST_VECTOR_MODES, SpectralParams, spectral_map
from .synth import generate_scene, load_scene_spec, parse_anomaly, scene_spec_from_fields
from .windowing import DualWindowSpec

log = logging.getLogger("ssfad")

METHODS = ("ssfad", "ssfad-spectral", "ssfad-spatial", "grx", "lrx")


class CliError(Exception):
    pass


# --------------------------------------------------------------------------
# Detection
# --------------------------------------------------------------------------

def run_detector(cube: HyperCube, method: str, wout: int = 5, win: int = 3, omega: Optional[int] = None,
                 fusion: str = "adaptive", ridge: float = 1e-6, test_vector: str = "centered",
                 saliency_input: str = "original", cov_mode: str = "centered",
                 threads: Optional[int] = None):
    """Run one detector; returns ``(map, weights)`` with weights only for ``ssfad``."""
    window = DualWindowSpec(wout, win)
    if method == "grx":
        return grx_map(cube, ridge), None
    if method == "lrx":
        return lrx_map(cube, window, ridge, threads), None

    spectral = SpectralParams(window=window, ridge=ridge, test_vector_mode=test_vector,
                              saliency_input=saliency_input, covariance_mode=cov_mode)
    spatial = SpatialParams(omega if omega is not None else win)
    if method == "ssfad-spectral":
        return spectral_map(cube, spectral, threads), None
    if method == "ssfad-spatial":
        return spatial_map(cube, spatial), None
    r1 = spectral_map(cube, spectral, threads)
    r2 = spatial_map(cube, spatial)
    if fusion == "average":
        return fuse(r1, r2, AVERAGE), AVERAGE
    return fuse_adaptive(r1, r2)


def _detector_kwargs(args) -> dict:
    return dict(method=args.method, omega=args.omega, fusion=args.fusion, ridge=args.ridge,
                test_vector=args.test_vector, saliency_input=args.saliency_input,
                cov_mode=args.cov_mode, threads=args.threads)


def cmd_detect(args) -> int:
    cube = load_cube(args.cube)
    dmap, weights = run_detector(cube, wout=args.wout, win=args.win, **_detector_kwargs(args))
    save_map(dmap, args.out, preview=args.preview)
    if weights is not None:
        print(f"a={weights.a:.6f} b={weights.b:.6f}")
    log.info("wrote %s", args.out)
    return 0


# --------------------------------------------------------------------------
# Evaluation
# --------------------------------------------------------------------------

def format_auc(value: float) -> str:
    return f"{100.0 * value:.3f}"


def cmd_eval(args) -> int:
    dmap = load_map(args.map)
    mask = load_mask(args.mask, expected_shape=dmap.shape)
    curve = roc_curve(dmap, mask)
    if args.roc_out:
        write_roc_csv(curve, args.roc_out)
    if args.stats_out:
        write_stats_csv(separability_stats(dmap, mask), args.stats_out)
    print(format_auc(auc(curve)))
    return 0


# --------------------------------------------------------------------------
# Synthesis
# --------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.spec:
        spec = load_scene_spec(args.spec)
    else:
        if args.seed is None:
            raise CliError("--seed is required (there is no implicit seed)")
        missing = [name for name in ("height", "width", "bands") if getattr(args, name) is None]
        if missing:
            raise CliError("missing scene flags: " + ", ".join("--" + m for m in missing))
        fields = dict(seed=args.seed, height=str(args.height), width=str(args.width), bands=str(args.bands),
                      n_classes=str(args.n_classes), noise_sigma=str(args.noise_sigma))
        spec = scene_spec_from_fields(fields, [parse_anomaly(a) for a in args.anomaly])
    cube, mask = generate_scene(spec)
    prefix = args.out_prefix
    save_cube(cube, f"{prefix}.hdr")
    save_mask(mask, f"{prefix}_mask.pgm")
    print(f"{prefix}.hdr {prefix}_mask.pgm anomalies={mask.n_anomalies}")
    return 0


# --------------------------------------------------------------------------
# Sweep
# --------------------------------------------------------------------------

def parse_range(text: str) -> List[int]:
    """``start:stop:step`` (inclusive stop) or a single integer."""
    parts = text.split(":")
    try:
        values = [int(p) for p in parts]
    except ValueError:
        raise CliError(f"bad range {text!r}; expected start:stop[:step]") from None
    if len(values) == 1:
        return values
    if len(values) not in (2, 3):
        raise CliError(f"bad range {text!r}; expected start:stop[:step]")
    start, stop = values[0], values[1]
    step = values[2] if len(values) == 3 else 1
    if step <= 0:
        raise CliError(f"range step must be positive in {text!r}")
    return list(range(start, stop + 1, step))


def sweep_pairs(wouts: Sequence[int], wins: Sequence[int]):
    pairs = []
    for wout in wouts:
        for win in wins:
            if wout > win and wout >= 3 and win >= 1 and wout % 2 == 1 and win % 2 == 1:
                pairs.append((wout, win))
    return pairs


def cmd_sweep(args) -> int:
    pairs = sweep_pairs(parse_range(args.wout), parse_range(args.win))
    if not pairs:
        raise CliError("no valid (wout, win) pairs in the requested ranges")
    cube = load_cube(args.cube)
    mask = load_mask(args.mask, expected_shape=(cube.height, cube.width))
    kwargs = _detector_kwargs(args)
    rows = []
    for wout, win in pairs:
        dmap, _ = run_detector(cube, wout=wout, win=win, **kwargs)
        value = roc_auc(dmap, mask)
        rows.append((wout, win, value))
        log.info("wout=%d win=%d auc=%s", wout, win, format_auc(value))
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["wout", "win", "auc"])
        for wout, win, value in rows:
            writer.writerow([wout, win, repr(value)])
    best = max(rows, key=lambda r: r[2])
    print(f"best wout={best[0]} win={best[1]} auc={format_auc(best[2])}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _add_detector_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--method", choices=METHODS, default="ssfad")
    p.add_argument("--omega", type=int, default=None, help="spatial patch size (default: --win)")
    p.add_argument("--fusion", choices=("adaptive", "average"), default="adaptive")
    p.add_argument("--ridge", type=float, default=1e-6, help="covariance ridge relative to trace/B")
    p.add_argument("--test-vector", choices=TEST_VECTOR_MODES, default="centered")
    p.add_argument("--saliency-input", choices=SALIENCY_INPUTS, default="original")
    p.add_argument("--cov-mode", choices=COVARIANCE_MODES, default="centered")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ssfad", description="Spectral-spatial fusion anomaly detection")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="compute a detection map")
    p.add_argument("--cube", required=True, help="cube header")
    p.add_argument("--wout", type=int, default=5)
    p.add_argument("--win", type=int, default=3)
    _add_detector_flags(p)
    p.add_argument("--out", required=True, help="output map header")
    p.add_argument("--preview", default=None, help="optional PGM preview path")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="ROC/AUC and separability of a map")
    p.add_argument("--map", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--roc-out", default=None)
    p.add_argument("--stats-out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--spec", default=None, help="key=value scene file (overrides flags)")
    p.add_argument("--seed", default=None)
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--bands", type=int)
    p.add_argument("--n-classes", type=int, default=3)
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--anomaly", action="append", default=[], metavar="ROW,COL,SIZE,CONTRAST")
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="AUC over a grid of window sizes")
    p.add_argument("--cube", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--wout", default="5:25:2")
    p.add_argument("--win", default="3:15:2")
    _add_detector_flags(p)
    p.add_argument("--out", required=True, help="CSV of wout,win,auc")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, ArithmeticError) as exc:
        print(f"ssfad {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
