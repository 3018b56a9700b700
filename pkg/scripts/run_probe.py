"""Logarithmic growth of the critical collar integral of a plateau, with a convergent control."""

import argparse
from fractions import Fraction

from _common import write_rows
from whitneyhardy.corpus import corpus_entry, plateau_expr
from whitneyhardy.decomposition import reinforced_divergence_probe
from whitneyhardy.geometry import PlaneSplit, SmoothnessParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/probe.csv")
    ap.add_argument("--halvings", type=int, default=4)
    args = ap.parse_args()
    hs = [2.0 ** -(6 + k) for k in range(args.halvings)]
    split = PlaneSplit(2, 1)
    params = SmoothnessParams(Fraction(1, 2), 2, 2, split)
    rows = []
    for name, f in (("plateau", None), ("z_gaussian", corpus_entry("z_gaussian").expr)):
        rec = reinforced_divergence_probe(params, hs, f)
        print(name, rec.row())
        rows += [dict(case=name, n=2, l=1, h=h, integral=v) for h, v in zip(hs, rec.integrals)]
    p3 = SmoothnessParams(Fraction(1), 2, 2, PlaneSplit(3, 1))
    hs3 = hs[:3]
    rec = reinforced_divergence_probe(p3, [h * 4 for h in hs3], plateau_expr(3), 1.0, 1 / 8)
    print("plateau n=3", rec.row())
    rows += [dict(case="plateau", n=3, l=1, h=h * 4, integral=v) for h, v in zip(hs3, rec.integrals)]
    write_rows(args.out, rows)


if __name__ == "__main__":
    main()
