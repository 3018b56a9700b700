"""Membership verdicts for the full corpus over the default parameter grid."""

import argparse
import time

from _common import write_rows
from whitneyhardy.decomposition import membership_reports


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/membership.csv")
    ap.add_argument("--no-partition", action="store_true", help="skip the Whitney-partition route")
    args = ap.parse_args()
    t0 = time.perf_counter()
    reps = membership_reports(with_partition=not args.no_partition)
    for r in reps:
        if not r.consistent_with_theorem:
            print("inconsistent:", r.entry, r.params.label())
    print(f"{sum(r.consistent_with_theorem for r in reps)}/{len(reps)} consistent "
          f"in {time.perf_counter() - t0:.1f}s")
    write_rows(args.out, [r.row() for r in reps])


if __name__ == "__main__":
    main()
