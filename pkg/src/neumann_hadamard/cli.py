"""``nh`` command line entry point."""

from __future__ import annotations

import argparse
import sys

from .errors import InputError, StudyInconclusiveError
from .experiments import NEUMANN_DATA_CONVENTION, STUDIES, default_config, load_config, run_study, write_outputs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nh", description="Neumann eigenvalue perturbation studies.")
    p.add_argument("study", choices=STUDIES)
    p.add_argument("--config", help="key = value file with [section] headers; defaults are used when omitted")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="worker threads for sweep points")
    p.add_argument("--dump-mesh", default=None, help="write the first sweep mesh as plain text")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = dict(threads=args.threads, dump_mesh=args.dump_mesh)
    try:
        if args.config:
            cfg = load_config(args.config, args.study, **overrides)
            if cfg.study != args.study:
                raise InputError(f"config declares study {cfg.study!r} but {args.study!r} was requested")
        else:
            cfg = default_config(args.study, **overrides)
        if cfg.study in ("cell", "sharpness"):
            print(f"cell Neumann data: {NEUMANN_DATA_CONVENTION}")
        result = run_study(cfg)
    except (InputError, StudyInconclusiveError) as exc:
        print(f"nh: error: {exc}", file=sys.stderr)
        return 2
    for path in write_outputs(result, args.out):
        print(path)
    for name, fit in sorted(result.fits.items()):
        print(f"{name}: slope {fit.slope:.4f} r2 {fit.r2:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
