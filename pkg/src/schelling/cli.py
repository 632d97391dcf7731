"""Command-line entry point: ``schelling <mode> --config PATH [options]``."""

from __future__ import annotations

import argparse
import sys

from .harness.config import MODES, ConfigError, load_config
from .harness.io import CheckpointError, SnapshotError
from .harness.runner import run_config

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="schelling", description="Seeded Schelling-dynamics experiments on the torus.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="key=value file; omitted keys take their defaults")
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.add_argument("--replicas", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(
            args.config,
            [f"mode={args.mode}", *args.override],
            seed=args.seed,
            output_dir=args.output_dir,
            replicas=args.replicas,
            workers=args.workers,
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    try:
        run_config(cfg)
    except (SnapshotError, CheckpointError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error at {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
