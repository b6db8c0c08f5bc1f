"""Command-line entry point: ``fraccheeger --config run.ini --out results``.

The thread count of the BLAS/OpenMP pools can be capped with the
``FRACCHEEGER_NUM_THREADS`` environment variable.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from threadpoolctl import threadpool_limits

from .experiment import ExperimentConfig, load_config, parse_checks, parse_schedule, run_experiment
from .grid import SHAPES

THREADS_ENV = "FRACCHEEGER_NUM_THREADS"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="fraccheeger",
        description="p -> 1 continuation for fractional torsion functions, eigenvalues "
                    "and s-Cheeger constants, with inequality checks.")
    ap.add_argument("--config", metavar="PATH", help="INI experiment file")
    ap.add_argument("--out", metavar="DIR", help="output directory")
    ap.add_argument("--checks", metavar="LIST",
                    help="comma-separated check ids, or 'auto' for all applicable ones")
    ap.add_argument("--schedule", metavar="P1,P2,...", help="decreasing values of p")
    ap.add_argument("--shape", choices=SHAPES)
    ap.add_argument("--n", type=int, metavar="N", help="cells per axis")
    ap.add_argument("--s", type=float, metavar="S", help="fractional order in (0, 1)")
    ap.add_argument("--trace", action="store_true", help="write solver traces under DIR/traces")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _threads() -> int | None:
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "out_dir": args.out,
        "shape": args.shape,
        "n_per_axis": args.n,
        "s": args.s,
        "p_schedule": None if args.schedule is None else parse_schedule(args.schedule),
        "trace": True if args.trace else None,
    }
    try:
        cfg = load_config(args.config, **overrides) if args.config else None
        if cfg is None:
            cfg = ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})
        if args.checks is not None:
            cfg = replace(cfg, checks=parse_checks(args.checks))
        threads = _threads()
    except (ValueError, OSError) as exc:
        print(f"fraccheeger: error: {exc}", file=sys.stderr)
        return 2
    with threadpool_limits(limits=threads):
        est, reports = run_experiment(cfg)
    for r in reports:
        print(f"{r.status.upper():4s} {r.check_id:20s} {r.left:.6g} <= {r.right:.6g} "
              f"(slack {r.slack:g})  [{r.anchor}]")
    for p, msg in est.failures.items():
        print(f"solver failure at p={p:g}: {msg}", file=sys.stderr)
    return 0 if all(r.passed for r in reports) else 1


if __name__ == "__main__":
    sys.exit(main())
