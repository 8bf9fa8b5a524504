"""Command line: ``mlprox run`` and ``mlprox compare``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .harness import compare, load_config, run, table_header

EXIT_OK, EXIT_ERROR, EXIT_BUDGET = 0, 1, 2


def _parser():
    ap = argparse.ArgumentParser(prog="mlprox", description="Multilevel proximal trust-region runs.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="solve one configured problem")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--seed", type=int)
    r.add_argument("--levels", type=int)
    r.add_argument("--json", action="store_true", help="print the report as JSON")

    c = sub.add_parser("compare", help="run two configurations and align their histories")
    c.add_argument("--config-a", required=True)
    c.add_argument("--config-b", required=True)
    c.add_argument("--out", help="write the aligned comparison CSV here")
    return ap


def _load(path, out=None, seed=None, levels=None):
    cfg = load_config(path)
    if out is not None:
        cfg.out_dir = out
    if seed is not None:
        cfg.seed = seed
    if levels is not None:
        cfg.levels = levels
        cfg.__post_init__()
    return cfg


def _cmd_run(args):
    cfg = _load(args.config, args.out, args.seed, args.levels)
    rep = run(cfg)
    if args.json:
        print(json.dumps(rep.summary()))
    else:
        print(table_header())
        print(rep.table_row())
        print(f"status={rep.status} h={rep.h:.3e} F={rep.F:.10e}")
        if rep.history_path:
            print(f"history: {rep.history_path}")
    return EXIT_OK if rep.converged else EXIT_BUDGET


def _cmd_compare(args):
    a = _load(args.config_a)
    b = _load(args.config_b)
    out = compare(a, b)
    print(table_header())
    print(out["a"].table_row())
    print(out["b"].table_row())
    print(f"{'k':>4} {'F_a':>22} {'F_b':>22} {'h_a':>12} {'h_b':>12}")
    for row in out["rows"]:
        print(f"{row['k']:>4} {row['F_a']:>22.15e} {row['F_b']:>22.15e} {row['h_a']:>12.4e} {row['h_b']:>12.4e}")
    print(f"fine-level iteration ratio (b/a): {out['ratio']:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write("k,F_a,F_b,h_a,h_b\n")
            for row in out["rows"]:
                fh.write(f"{row['k']},{row['F_a']!r},{row['F_b']!r},{row['h_a']!r},{row['h_b']!r}\n")
    ok = out["a"].converged and out["b"].converged
    return EXIT_OK if ok else EXIT_BUDGET


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.cmd == "run":
            return _cmd_run(args)
        return _cmd_compare(args)
    except Exception as err:  # surfaced as exit status 1
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
