"""The ten acceptance criteria at their stated tolerances, one PASS/FAIL line each."""

import csv
import math
import time
from fractions import Fraction as F

import numpy as np
import pytest
import sympy as sp

from whitneyhardy.cli import run
from whitneyhardy.corpus import corpus_entry, sym_plateau
from whitneyhardy.decomposition import (BOUNDARY_CASES, boundary_hardy_sweep, fJ_table, reinforced_divergence_probe,
                                        subcritical_table)
from whitneyhardy.discretize import GridBox, sample
from whitneyhardy.expr import SymExpr, coordinate_symbols
from whitneyhardy.geometry import PlaneSplit, SmoothnessParams
from whitneyhardy.hardy import WeightSpec, hardy_quotient_1d, power_function_1d
from whitneyhardy.spaces import homogeneity_ratio
from whitneyhardy.whitney import verify_whitney, whitney_decompose

SPLIT = PlaneSplit(2, 1)
BUDGET = 60.0


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


@pytest.fixture(scope="module")
def decompose_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("decompose_a")
    code, dt = timed(lambda: run(["decompose", "--out", str(out)]))
    return code, out / "decompose.csv", dt


def test_c01_whitney_invariants(acceptance):
    details, ok = [], True
    for n, l in [(2, 1), (2, 0), (3, 1)]:
        diag, dt = timed(lambda: verify_whitney(whitney_decompose(PlaneSplit(n, l), ((-1,) * n, (1,) * n), 6)))
        lo, hi = diag.distance_ratio_range
        good = diag.disjoint and diag.max_adjacent_level_gap <= 1 and lo > 0 and hi / lo <= 8 and dt <= BUDGET
        ok &= good
        details.append(f"({n},{l}) ratio {lo:.3g}..{hi:.3g} gap {diag.max_adjacent_level_gap} {dt:.1f}s")
    assert acceptance(1, ok, "; ".join(details))


def test_c02_partition_of_unity(acceptance, dec21, pou21):
    rng = np.random.default_rng(2024)
    # the truncated decomposition covers |z| >= collar width
    y = rng.uniform(-1, 1, 200)
    z = rng.uniform(dec21.collar_width, 1, 200) * rng.choice([-1, 1], 200)
    err = float(np.abs(pou21.total(np.stack([y, z], axis=1)) - 1).max())
    dc = pou21.derivative_constants([3, 4, 5, 6])
    spread = max(max(v.values()) / min(v.values()) for v in dc.values())
    ok = err <= 1e-8 and spread <= 1.01
    assert acceptance(2, ok, f"max|sum-1| {err:.2e}, derivative-constant spread {spread:.6f} over levels 3..6")


def test_c03_classical_hardy(acceptance):
    rows = []
    for beta in (0.55, 0.75, 1.0, 1.5, 2.0):
        q = hardy_quotient_1d(power_function_1d(beta), 2, 0.0)
        rows.append((beta, q, abs(q * beta**2 - 1)))
    ok = all(e <= 0.05 for _, _, e in rows) and max(q for _, q, _ in rows) < 4
    assert acceptance(3, ok, " ".join(f"b={b}:{q:.4f}" for b, q, _ in rows))


def test_c04_critical_sharpness(acceptance):
    Js = [2, 3, 4, 5]
    (logs, ones), dt = timed(lambda: (fJ_table(Js, WeightSpec.parse("log^1")), fJ_table(Js, WeightSpec.parse("1"))))
    ql = [r.quotient for r in logs]
    qo = [r.quotient for r in ones]
    increasing = all(b > a for a, b in zip(ql, ql[1:]))
    bracket = max(qo) / min(qo)
    overlap = all(r.lower_bound >= math.sqrt(r.index) for r in logs)
    ok = increasing and bracket <= 3 and overlap and dt <= BUDGET
    assert acceptance(4, ok, f"log {[round(v, 3) for v in ql]}, one-bracket {bracket:.3f}, "
                             f"min f_J {[round(r.lower_bound, 2) for r in logs]}, {dt:.1f}s")


def test_c05_subcritical_sharpness(acceptance):
    js = [2, 3, 4, 5]
    grow = [r.quotient for r in subcritical_table(js, WeightSpec.parse("pow^0.25"))]
    flat = [r.quotient for r in subcritical_table(js, WeightSpec.parse("1"))]
    increasing = all(b > a for a, b in zip(grow, grow[1:]))
    bracket = max(flat) / min(flat)
    ok = increasing and bracket <= 3
    assert acceptance(5, ok, f"t^-1/4 {[round(v, 3) for v in grow]}, one-bracket {bracket:.3f}")


def test_c06_boundary_hardy(acceptance):
    rows, dt = timed(lambda: boundary_hardy_sweep(BOUNDARY_CASES, (0, 1, 2, 3)))
    ok, details = dt <= BUDGET, []
    for name, r, s in BOUNDARY_CASES:
        group = [x for x in rows if x.entry == name and x.s == s]
        qs = [x.quotient for x in group]
        change = max(x.relative_change for x in group)
        bracket = max(qs) / min(qs)
        ok &= all(math.isfinite(q) for q in qs) and change < 0.1 and bracket <= 4
        details.append(f"{name} r={r} s={s}: bracket {bracket:.3f} refine {change:.3%}")
    assert acceptance(6, ok, "; ".join(details) + f"; {dt:.1f}s")


def plateau_disk(lam):
    y, z = coordinate_symbols(2)
    f = SymExpr(sym_plateau(sp.sqrt(y**2 + z**2) / lam), 2, "disk")
    return sample(f, GridBox.cube(4 * lam, lam / 32, 2))


def test_c07_homogeneity(acceptance):
    lams = [2.0**-k for k in range(1, 5)]
    params = SmoothnessParams(F(1), 2, 2, SPLIT)
    surrogate = [homogeneity_ratio(plateau_disk(lam), lam, surrogate=True) for lam in lams]
    h1 = [homogeneity_ratio(plateau_disk(lam), lam, params) for lam in lams]
    dev = max(abs(v - 1) for v in surrogate)
    bracket = max(h1) / min(h1)
    ok = dev <= 1e-6 and bracket <= 3
    assert acceptance(7, ok, f"surrogate |r-1| {dev:.1e}, H^1 ratios {[round(v, 4) for v in h1]} bracket {bracket:.4f}")


def test_c08_reinforced_gap(acceptance):
    params = SmoothnessParams(F(1, 2), 2, 2, SPLIT)
    hs = [1 / 64, 1 / 128, 1 / 256, 1 / 512]
    probe = reinforced_divergence_probe(params, hs)
    control = reinforced_divergence_probe(params, hs, corpus_entry("z_gaussian").expr)
    ok = probe.log_divergent and probe.relative_residual < 0.1 and control.convergent
    assert acceptance(8, ok, f"plateau slope {probe.slope:.3f} residual {probe.relative_residual:.1e} "
                             f"increments {[round(d, 3) for d in probe.differences]}; control ratios "
                             f"{[round(r, 3) for r in control.difference_ratios]}")


def test_c09_decomposition_theorems(acceptance, decompose_run):
    code, path, dt = decompose_run
    with open(path) as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    consistent = sum(r["consistent_with_theorem"] == "true" for r in rows)
    agree = sum(r["routes_agree"] == "true" for r in rows)
    ok = code == 0 and len(rows) >= 72 and consistent == agree == len(rows) and dt <= BUDGET
    assert acceptance(9, ok, f"{len(rows)} reports, consistent {consistent}, routes agree {agree}, {dt:.1f}s")


def _body(path):
    return b"".join(path.read_bytes().splitlines(keepends=True)[1:])


def test_c10_determinism(acceptance, decompose_run, tmp_path):
    _, first, _ = decompose_run
    small = [["whitney", "--j-max", "5"], ["witness", "--kind", "subcritical", "--kappa", "1"],
             ["probe-divergence"]]
    t0 = time.perf_counter()
    assert run(["decompose", "--out", str(tmp_path / "b")]) == 0
    same = [_body(first) == _body(tmp_path / "b" / "decompose.csv")]
    for argv in small:
        name = argv[0]
        for tag in ("x", "y"):
            assert run(argv + ["--out", str(tmp_path / tag)]) == 0
        same.append(_body(tmp_path / "x" / f"{name}.csv") == _body(tmp_path / "y" / f"{name}.csv"))
    dt = time.perf_counter() - t0
    ok = all(same) and dt <= BUDGET
    assert acceptance(10, ok, f"identical CSV bodies for decompose, whitney, witness, probe: {same}, {dt:.1f}s")
