"""Sharpness witnesses: critical f_J family and subcritical f_j, with and without the extra weight."""

import argparse

from _common import write_rows
from whitneyhardy.decomposition import fJ_table, subcritical_table
from whitneyhardy.hardy import WeightSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/witnesses.csv")
    ap.add_argument("--max-index", type=int, default=5)
    args = ap.parse_args()
    idx = list(range(2, args.max_index + 1))
    rows = []
    for kappa in ("log^1", "1"):
        rows += [r.row() for r in fJ_table(idx, WeightSpec.parse(kappa))]
    for kappa in ("pow^0.25", "1"):
        rows += [r.row() for r in subcritical_table(idx, WeightSpec.parse(kappa))]
    for r in rows:
        print(f"{r['kind']:>11} {r['index']} {r['kappa']:>8} {r['quotient']}")
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
