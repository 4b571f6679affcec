"""Exporter CLI: ``extract`` runs a backbone over a dataset, ``make-fixture``
generates the synthetic planted-box dataset (no backbone or images needed).
Exit codes match the core CLI: 0 ok, 1 config, 2 data, 3 internal.
"""

from __future__ import annotations

import argparse
import sys

from psol.errors import ConfigError, DataError

from . import __version__


def cmd_extract(args) -> int:
    from .extract import extract_features
    from .jobs import load_job

    result = extract_features(load_job(args.job))
    print(
        f"exported {result.n_exported} images "
        f"(grid {result.grid_size}x{result.grid_size}, stride {result.stride}, "
        f"{len(result.skipped)} skipped) -> {result.output_dir}"
    )
    return 0


def cmd_make_fixture(args) -> int:
    from psol.synthetic import PlantedBoxParams, make_synthetic_fixture

    paths = make_synthetic_fixture(
        args.out,
        seed=args.seed,
        n_classes=args.classes,
        images_per_class=args.images_per_class,
        depth=args.depth,
        grid=args.grid,
        net_input_size=args.net_input_size,
        box_params=PlantedBoxParams(
            min_cells=args.min_cells,
            max_cells=args.max_cells,
            shift=args.shift,
            noise_sigma=args.noise_sigma,
        ),
    )
    print(f"fixture written under {paths.root} (config: {paths.config})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="psol-extract",
        description="export backbone features in the psol pipeline formats",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run a backbone over an image listing")
    p.add_argument("--job", required=True, help="extraction job JSON")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("make-fixture", help="generate the synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--images-per-class", type=int, default=200)
    p.add_argument("--depth", type=int, default=64)
    p.add_argument("--grid", type=int, default=28)
    p.add_argument("--net-input-size", type=int, default=448)
    p.add_argument("--min-cells", type=int, default=11)
    p.add_argument("--max-cells", type=int, default=18)
    p.add_argument("--shift", type=float, default=10.0)
    p.add_argument("--noise-sigma", type=float, default=1.0)
    p.set_defaults(func=cmd_make_fixture)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - the CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
