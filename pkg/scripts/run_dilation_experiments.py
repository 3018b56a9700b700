"""Dilation brackets of the weighted-distance quotient (non-critical) and the Hardy chain (critical)."""

import argparse
from fractions import Fraction

from _common import write_rows
from whitneyhardy.corpus import CORPUS
from whitneyhardy.decomposition import run_critical_experiment, run_noncritical_experiment
from whitneyhardy.geometry import PlaneSplit, SmoothnessParams, classify_criticality


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/dilation.csv")
    ap.add_argument("--s", default="1/4,3/4,7/4,1/2,3/2,5/2")
    args = ap.parse_args()
    rows = []
    for s in args.s.split(","):
        params = SmoothnessParams(Fraction(s), 2, 2, PlaneSplit(2, 1))
        crit = classify_criticality(params).critical
        recs = (run_critical_experiment if crit else run_noncritical_experiment)(CORPUS, params)
        for rec in recs:
            print(f"s={s:>4} {rec.entry:>17} bracket={rec.bracket:.3f} flags={rec.flags}")
            rows.append(rec.row())
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
