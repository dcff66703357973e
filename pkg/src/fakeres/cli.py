"""Command-line front end: ``fakeres <command> [options]``.

Exit codes: 0 success, 2 usage, 3 bad input or file format, 4 numerical
check failed, 5 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as volio
from .analysis import fbr, kmeans_segment, segment_stats
from .errors import EmptySegmentError, FakeresError, InputError, NumericalError
from .experiments import (
    run_bound_suite,
    run_experiment1,
    run_experiment2_surrogate,
)
from .fakenodes import FILL_MODES, FakeStackConfig, fake_resample
from .grid import GridSpec, SegmentationMask, VolumeGrid
from .kernels import KERNELS, kernel_by_name
from .phantom import (
    IEC_SPHERE_DIAMETERS,
    SHEPP_LOGAN_VALUES,
    load_phantom_table,
    make_two_compartment,
    rasterize_phantom,
    shepp_logan,
)
from .resample import ResamplePlan, resample_volume

log = logging.getLogger("fakeres")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4, 5
DEFAULT_SEED = 20240101


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _grid_size(text):
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("grid size must be at least 2")
    return v


def _fake_config(args) -> FakeStackConfig:
    return FakeStackConfig(
        smoothing_sigma=args.sigma,
        smoothing_iterations=args.iterations,
        background_fill=args.fill,
    )


def _add_fake_options(p):
    p.add_argument("--sigma", type=float, default=1.0, help="smoothing sigma in low-resolution voxels")
    p.add_argument("--iterations", type=_positive_int, default=3, help="blur-and-reimpose passes")
    p.add_argument("--fill", choices=FILL_MODES, default="segment-mean", help="initial value of free nodes")


def _write_report(report, out_dir, stem="report"):
    paths = report.write(out_dir, stem)
    sys.stdout.write(report.to_text())
    for k, v in sorted(report.timings.items()):
        print(f"time {k}: {v:.3f} s", file=sys.stderr)
    print("wrote " + ", ".join(str(p) for p in paths), file=sys.stderr)
    return EXIT_OK


# -- commands --------------------------------------------------------------------


def cmd_phantom(args):
    spec = GridSpec.cube(args.size, *args.domain) if args.domain else None
    if args.kind == "shepp":
        if args.table:
            phantom = load_phantom_table(args.table)
        else:
            phantom = shepp_logan()
        spec = spec or GridSpec(phantom.domain, (args.size,) * 3)
        volume, mask = rasterize_phantom(phantom, spec)
    else:
        spec = spec or GridSpec.cube(args.size, -100.0, 100.0)
        radii = tuple(d / 2 for d in (args.diameters or IEC_SPHERE_DIAMETERS))
        volume, mask = make_two_compartment(spec, radii, args.hot, args.cold)
    ext = ".nii.gz" if args.gzip else ".nii"
    vol_path = Path(f"{args.output}_vol{ext}")
    mask_path = Path(f"{args.output}_mask{ext}")
    volio.write_volume(volume, vol_path)
    volio.write_volume(mask, mask_path)
    print(f"wrote {vol_path} and {mask_path} ({spec.shape[0]}x{spec.shape[1]}x{spec.shape[2]}, "
          f"{mask.label_count} labels)")
    return EXIT_OK


def cmd_resample(args):
    volume = volio.read_volume(args.input)
    if isinstance(volume, SegmentationMask):
        volume = VolumeGrid(volume.spec, volume.labels.astype(float))
    high = volio.read_volume(args.mask_high) if args.mask_high else None
    if high is not None and not isinstance(high, SegmentationMask):
        high = SegmentationMask(high.spec, high.values)
    if high is not None:
        target = high.spec
    elif args.target_size:
        sizes = args.target_size * 3 if len(args.target_size) == 1 else args.target_size
        target = GridSpec(volume.spec.domain, tuple(sizes))
    else:
        target = volume.spec
    kernel = kernel_by_name(args.kernel, volume.spec.spacing[0])
    if args.mode == "plain":
        out = resample_volume(volume, ResamplePlan(volume.spec, target, kernel), threads=args.threads)
    else:
        low = None
        if args.low_mask:
            low = volio.read_volume(args.low_mask)
            if not isinstance(low, SegmentationMask):
                low = SegmentationMask(low.spec, low.values)
        out, stack = fake_resample(
            volume, high, kernel, _fake_config(args), skip_empty=args.skip_empty,
            threads=args.threads, return_stack=True, low_mask=low,
        )
        if args.emit_stack:
            volio.write_volume(stack.stacked(), args.emit_stack)
            print(f"wrote {args.emit_stack} (labels {', '.join(map(str, stack.labels))})")
    volio.write_volume(out, args.output)
    print(f"wrote {args.output} ({'x'.join(map(str, out.shape))}, mode {args.mode})")
    return EXIT_OK


def cmd_stats(args):
    volume = volio.read_volume(args.volume)
    mask = volio.read_volume(args.mask)
    if not isinstance(mask, SegmentationMask):
        mask = SegmentationMask(mask.spec, mask.values)
    if isinstance(volume, SegmentationMask):
        volume = VolumeGrid(volume.spec, volume.labels.astype(float))
    refs = None
    if args.shepp_references:
        refs = np.asarray(SHEPP_LOGAN_VALUES)
        # a coarse mask can miss the top label entirely; keep all six rows
        if mask.label_count < refs.size:
            mask = SegmentationMask(mask.spec, mask.labels, refs.size)
    elif args.references:
        refs = np.asarray(args.references, dtype=float)
    stats = segment_stats(volume, mask, refs)
    rows = stats.rows()
    result = {"segments": rows}
    if (args.hot is None) != (args.cold is None):
        raise InputError("--hot and --cold go together")
    if args.hot is not None:
        result["fbr"] = fbr(volume, mask, args.hot, args.cold)

    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\r\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.csv:
        Path(args.csv).write_text(buf.getvalue(), newline="")
    if args.json:
        Path(args.json).write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    cols = list(rows[0])
    print("  ".join(f"{c:>12}" for c in cols))
    for r in rows:
        print("  ".join(f"{r[c]:>12.6g}" if isinstance(r[c], float) else f"{r[c]:>12}" for c in cols))
    if "fbr" in result:
        print(f"fbr: {result['fbr']:.6g}")
    return EXIT_OK


def cmd_kmeans(args):
    volume = volio.read_volume(args.volume)
    if isinstance(volume, SegmentationMask):
        volume = VolumeGrid(volume.spec, volume.labels.astype(float))
    mask = kmeans_segment(volume, args.k, seed=args.seed)
    volio.write_volume(mask, args.output)
    counts = mask.counts()
    print(f"wrote {args.output}; voxels per cluster: {', '.join(map(str, counts))}")
    return EXIT_OK


def cmd_verify_bounds(args):
    report = run_bound_suite(args.size, tuple(args.step_sizes), args.probes, args.seed, args.kernel)
    if args.output:
        report.write(args.output, "bounds")
    sys.stdout.write(report.to_text())
    if not report.passed:
        raise NumericalError("error bound check failed: " + ", ".join(k for k, v in report.checks.items() if not v))
    return EXIT_OK


def cmd_experiment1(args):
    report = run_experiment1(
        args.size_lo, args.size_hi, args.kernel, _fake_config(args),
        low_mask=args.low_mask, threads=args.threads,
    )
    report.config["seed"] = args.seed
    return _write_report(report, args.output)


def cmd_experiment2(args):
    report = run_experiment2_surrogate(
        args.size_lo, args.size_hi, args.blur_fwhm, args.trials, args.seed,
        noise=args.noise, hot=args.hot, cold=args.cold, segmentation=args.segmentation,
        config=_fake_config(args), threads=args.threads,
    )
    return _write_report(report, args.output)


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=_positive_int, default=None,
                        help="worker threads (default: $FAKERES_THREADS, else 1)")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default %(default)s)")
    common.add_argument("-v", "--verbose", action="store_true")

    # common options live on the subcommands only: argparse lets subparser
    # defaults overwrite values parsed at the top level
    parser = argparse.ArgumentParser(
        prog="fakeres",
        description="Segment-aware oversampling of volumetric images.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("phantom", parents=[common], help="rasterise a phantom to volume + mask files")
    p.add_argument("--kind", choices=("shepp", "two-compartment"), default="shepp")
    p.add_argument("--size", type=_grid_size, required=True, help="nodes per axis")
    p.add_argument("-o", "--output", required=True, help="output prefix; writes PREFIX_vol and PREFIX_mask")
    p.add_argument("--domain", type=float, nargs=2, metavar=("LO", "HI"), help="cube domain")
    p.add_argument("--table", help="ellipsoid table file (shepp kind)")
    p.add_argument("--hot", type=float, default=4.0, help="sphere activity (two-compartment)")
    p.add_argument("--cold", type=float, default=1.0, help="background activity (two-compartment)")
    p.add_argument("--diameters", type=float, nargs="+", help="sphere diameters (two-compartment)")
    p.add_argument("--gzip", action="store_true", help="write .nii.gz")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("resample", parents=[common], help="oversample a volume, plain or segment-aware")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--mode", choices=("plain", "fake"), default="plain")
    p.add_argument("--mask-high", help="high-resolution segmentation (required for fake mode)")
    p.add_argument("--low-mask", help="segmentation on the input grid (fake mode; default: downsampled)")
    p.add_argument("--target-size", type=_grid_size, nargs="+", help="target nodes per axis (1 or 3 values)")
    p.add_argument("--kernel", choices=sorted(KERNELS), default="trilinear")
    p.add_argument("--skip-empty", action="store_true", help="tolerate segments absent at low resolution")
    p.add_argument("--emit-stack", metavar="PATH", help="also write the stacked per-segment image")
    _add_fake_options(p)
    p.set_defaults(func=cmd_resample)

    p = sub.add_parser("stats", parents=[common], help="per-segment statistics and FBr")
    p.add_argument("volume")
    p.add_argument("mask")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--references", type=float, nargs="+", help="reference value per label")
    g.add_argument("--shepp-references", action="store_true", help="use the Shepp-Logan label values")
    p.add_argument("--hot", type=int, help="hot label for FBr")
    p.add_argument("--cold", type=int, help="cold label for FBr")
    p.add_argument("--csv", help="write the table as CSV")
    p.add_argument("--json", help="write the table as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("kmeans", parents=[common], help="intensity k-means segmentation")
    p.add_argument("volume")
    p.add_argument("-k", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_kmeans)

    p = sub.add_parser("verify-bounds", parents=[common], help="check interpolation error bounds")
    p.add_argument("--size", type=_grid_size, default=32)
    p.add_argument("--step-sizes", type=_grid_size, nargs="+", default=[16, 32, 64, 128])
    p.add_argument("--probes", type=_positive_int, default=10000)
    p.add_argument("--kernel", choices=sorted(KERNELS), default="trilinear")
    p.add_argument("-o", "--output", help="directory for bounds.json / bounds.csv")
    p.set_defaults(func=cmd_verify_bounds)

    p = sub.add_parser("experiment1", parents=[common], help="Shepp-Logan plain vs fake comparison")
    p.add_argument("--size-lo", type=_grid_size, default=64)
    p.add_argument("--size-hi", type=_grid_size)
    p.add_argument("--kernel", choices=sorted(KERNELS), default="trilinear")
    p.add_argument("--low-mask", choices=("segment", "downsample"), default="segment")
    p.add_argument("-o", "--output", required=True, help="report directory")
    _add_fake_options(p)
    p.set_defaults(func=cmd_experiment1)

    p = sub.add_parser("experiment2-surrogate", parents=[common], help="simulated hot-sphere FBr study")
    p.add_argument("--size-lo", type=_grid_size, default=32)
    p.add_argument("--size-hi", type=_grid_size, default=64)
    p.add_argument("--blur-fwhm", type=float, default=8.0, help="blur FWHM in mm")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--noise", type=float, default=0.05, help="voxel noise, fraction of cold activity")
    p.add_argument("--hot", type=float, default=4.0)
    p.add_argument("--cold", type=float, default=1.0)
    p.add_argument("--segmentation", choices=("kmeans", "exact"), default="kmeans")
    p.add_argument("-o", "--output", required=True, help="report directory")
    _add_fake_options(p)
    p.set_defaults(func=cmd_experiment2)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.threads is None and os.environ.get("FAKERES_THREADS"):
        try:
            args.threads = _positive_int(os.environ["FAKERES_THREADS"])
        except (ValueError, argparse.ArgumentTypeError):
            parser.error("FAKERES_THREADS must be a positive integer")
    if args.command == "resample" and args.mode == "fake" and not args.mask_high:
        parser.error("--mode fake requires --mask-high")
    if args.command == "experiment2-surrogate" and args.trials < 2:
        parser.error("--trials must be at least 2")
    log.info("seed %d", args.seed)
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except EmptySegmentError as exc:
        print(f"error: {exc}; rerun with --skip-empty to fall back to the background block",
              file=sys.stderr)
        return EXIT_INPUT
    except (NumericalError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FakeresError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
