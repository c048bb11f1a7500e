"""Example 2: wall-time comparison of the three estimators on the full grid."""
import argparse
import sys

from nfloc.harness import load_config, run_timing, write_bench_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--out", help="CSV path (default: stdout)")
    args = ap.parse_args()

    rows = run_timing(load_config("example2"), repeats=args.repeats)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_bench_csv(rows, fh)
    else:
        write_bench_csv(rows, sys.stdout)


if __name__ == "__main__":
    main()
