#!/usr/bin/env python3
"""Run every figure experiment and print the gate report.

    python3 scripts/reproduce_all.py --out-dir out [--skip fig6a fig6b] [--realizations 20]
"""
import argparse
import sys
import time

from botda_deconv.experiments import FIGURES, RunOptions, reproduce


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", default="out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--realizations", type=int, help="override the Monte Carlo count (figs 5, 6a, 6b)")
    ap.add_argument("--skip", nargs="*", default=[], choices=FIGURES)
    ap.add_argument("-q", "--quiet", action="store_true")
    args = ap.parse_args()
    opts = RunOptions(args.out_dir, args.seed, args.realizations,
                      progress=None if args.quiet else lambda m: print(f"  {time.strftime('%X')} {m}", flush=True))
    failed = []
    for fig in FIGURES:
        if fig in args.skip:
            continue
        res = reproduce(fig, opts)
        print(res.report(), flush=True)
        if not res.passed:
            failed.append(fig)
    print("all gates passed" if not failed else f"gates failed in: {', '.join(failed)}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
