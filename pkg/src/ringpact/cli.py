"""Command-line entry points.

Verbs: ``simulate``, ``reconstruct``, ``compare``, ``metrics``,
``inspect``, ``import-raw``.  Exit codes: 0 success, 1 configuration
error, 2 runtime failure, 3 partial comparison (some reconstructions
missing).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


def _add_config_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="experiment TOML file")
    src.add_argument("--preset", choices=("desk", "insilico"), help="built-in parameter set")
    p.add_argument("--output-dir", type=Path, help="override the output directory")
    p.add_argument("--seed", type=int, help="override the experiment seed")
    p.add_argument(
        "--projections",
        type=lambda s: tuple(int(v) for v in s.split(",")),
        help="comma-separated projection counts, e.g. 8,16,32,64",
    )
    p.add_argument(
        "--methods",
        type=lambda s: tuple(s.split(",")),
        help="comma-separated subset of ubp,mb,nr",
    )
    p.add_argument("--mb-lambda", type=float, help="override the MB regularization weight")
    p.add_argument("--nr-eta", type=float, help="override the NR TV weight")
    p.add_argument("--noise-snr-db", type=float, help="add white noise at this sinogram SNR")


def _load_config(args):
    from dataclasses import replace

    from .config import PRESETS, load_config

    if args.config is not None:
        cfg = load_config(args.config)
    else:
        cfg = PRESETS[args.preset]()
    if args.output_dir is not None:
        cfg = replace(cfg, output_dir=args.output_dir)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.projections is not None:
        cfg = replace(cfg, projections=args.projections)
    if args.methods is not None:
        cfg = replace(cfg, methods=args.methods)
    if args.mb_lambda is not None:
        cfg = replace(cfg, mb=replace(cfg.mb, lam=args.mb_lambda))
    if args.nr_eta is not None:
        nr = cfg.nr
        cfg = replace(cfg, nr=replace(nr, train=replace(nr.train, eta=args.nr_eta)))
    if getattr(args, "noise_snr_db", None) is not None:
        cfg = replace(cfg, noise_snr_db=args.noise_snr_db)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringpact",
        description="Ring-array photoacoustic reconstruction: simulate, reconstruct, compare.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="rasterize the phantom and write its sinogram")
    _add_config_args(p)

    p = sub.add_parser("reconstruct", help="run one method at one projection count")
    _add_config_args(p)
    p.add_argument("--method", required=True, choices=("ubp", "mb", "nr"))
    p.add_argument("-k", type=int, required=True, help="projection count")

    p = sub.add_parser("compare", help="metrics CSV + image strips for existing results")
    _add_config_args(p)

    p = sub.add_parser("run", help="simulate, reconstruct everything, compare")
    _add_config_args(p)

    p = sub.add_parser("metrics", help="SSIM/PSNR between two image files")
    p.add_argument("image", type=Path)
    p.add_argument("reference", type=Path)
    p.add_argument("--signal-rect", type=lambda s: [int(v) for v in s.split(",")])
    p.add_argument("--background-rect", type=lambda s: [int(v) for v in s.split(",")])

    p = sub.add_parser("inspect", help="dump a PARF/PAIM file header")
    p.add_argument("path", type=Path)

    p = sub.add_parser("import-raw", help="wrap a raw float32 dump into a PARF file")
    p.add_argument("raw", type=Path)
    p.add_argument("out", type=Path)
    p.add_argument("--radius-m", type=float, required=True)
    p.add_argument("--num-elements", type=int, required=True)
    p.add_argument("--num-samples", type=int, required=True)
    p.add_argument("--sample-rate-hz", type=float, required=True)
    p.add_argument("--sos-mps", type=float, required=True)
    p.add_argument("--t-start-s", type=float, default=0.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    from .config import ConfigError

    try:
        return _dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def _dispatch(args) -> int:
    from . import io as rio
    from .runner import run_all, run_compare, run_reconstruct, run_simulate

    if args.command == "simulate":
        cfg = _load_config(args)
        sino, gt = run_simulate(cfg)
        print(sino)
        return EXIT_OK
    if args.command == "reconstruct":
        cfg = _load_config(args)
        if not cfg.sinogram_path().exists():
            from .config import ConfigError

            raise ConfigError(f"sinogram not found: {cfg.sinogram_path()}; run simulate first")
        print(run_reconstruct(cfg, args.method, args.k))
        return EXIT_OK
    if args.command == "compare":
        cfg = _load_config(args)
        csv_path, missing = run_compare(cfg)
        print(csv_path)
        return EXIT_PARTIAL if missing else EXIT_OK
    if args.command == "run":
        cfg = _load_config(args)
        print(run_all(cfg))
        return EXIT_OK
    if args.command == "metrics":
        return _metrics_cmd(args)
    if args.command == "inspect":
        print(json.dumps(rio.describe(args.path), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command == "import-raw":
        from .core import Acquisition, Medium, RingGeometry

        geom = RingGeometry(radius_m=args.radius_m, num_elements=args.num_elements)
        acq = Acquisition(
            sample_rate_hz=args.sample_rate_hz,
            num_samples=args.num_samples,
            t_start_s=args.t_start_s,
        )
        sino = rio.read_raw_sinogram(args.raw, geom, acq)
        rio.write_sinogram(args.out, sino, Medium(sos_mps=args.sos_mps))
        print(args.out)
        return EXIT_OK
    raise AssertionError(f"unhandled command {args.command}")


def _metrics_cmd(args) -> int:
    from . import io as rio
    from .metrics import Rect, RegionSpec, cnr, normalize01, psnr, snr, ssim

    img = normalize01(rio.read_image(args.image))
    ref = normalize01(rio.read_image(args.reference))
    out = {"ssim": ssim(img, ref), "psnr_db": psnr(img, ref)}
    if args.signal_rect and args.background_rect:
        regions = RegionSpec(
            signal_rect=Rect(*args.signal_rect),
            background_rect=Rect(*args.background_rect),
        )
        out["snr_db"] = snr(img, regions)
        out["cnr_db"] = cnr(img, regions)
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
