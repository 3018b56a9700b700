import math
from fractions import Fraction as F

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from whitneyhardy.corpus import corpus_entry, sym_plateau
from whitneyhardy.discretize import NODE, GridBox, GridFunction, SupportError, sample, triebel_norm
from whitneyhardy.expr import SymExpr, coordinate_symbols
from whitneyhardy.geometry import MultiIndex, ParameterError, PlaneSplit, SmoothnessParams
from whitneyhardy.hardy import DegenerateInputError
from whitneyhardy.spaces import (fubini_ratio, homogeneity_ratio, reinforced_norm, rloc_equiv_norm, rloc_norm,
                                 rloc_norms, trace_jet)
from whitneyhardy.whitney import partition_of_unity, whitney_decompose

SPLIT = PlaneSplit(2, 1)
y, z = coordinate_symbols(2)
NODE_BOX = GridBox.cube(4, 1 / 16, 2, NODE)


def params(s, p=2, q=2):
    return SmoothnessParams(F(s), p, q, SPLIT)


def jet(sym, r, s=F(7, 2)):
    return trace_jet(sample(SymExpr(sym, 2, "f"), NODE_BOX), params(s), r)


def component(tj, k):
    return tj.components[MultiIndex((0, k))].samples


def test_trace_even_gaussian():
    tj = jet(sp.exp(-y**2 - z**2), 1)
    assert len(tj) == 2
    yy = NODE_BOX.axis(0)
    np.testing.assert_allclose(component(tj, 0), np.exp(-yy**2), atol=1e-14)
    assert np.abs(component(tj, 1)).max() < 1e-14
    assert tj.summary() == "(0,0):nz;(0,1):0"


def test_trace_odd_factor():
    tj = jet(z * sp.exp(-y**2 - z**2), 1)
    yy = NODE_BOX.axis(0)
    assert np.abs(component(tj, 0)).max() == 0
    np.testing.assert_allclose(component(tj, 1), np.exp(-yy**2), atol=1e-14)
    assert tj.vanishes_up_to(0) and not tj.vanishes_up_to(1)


def test_trace_taylor_factor():
    g = sp.exp(-y**2 - z**2) * sp.cos(y)
    tj = jet(z**2 * g, 2)
    yy = NODE_BOX.axis(0)
    assert tj.vanishes_up_to(1)
    np.testing.assert_allclose(component(tj, 2), 2 * np.exp(-yy**2) * np.cos(yy), atol=1e-13)
    assert tj.norms[MultiIndex((0, 2))] > 0


def test_trace_finite_difference_path_agrees():
    f = sample(SymExpr(z * sp.exp(-y**2 - z**2), 2, "zg"), GridBox.cube(4, 1 / 64, 2, NODE))
    exact = trace_jet(f, params(F(7, 2)), 1)
    fd = trace_jet(f, params(F(7, 2)), 1, exact=False)
    diff = np.abs(component(exact, 1) - component(fd, 1)).max()
    assert diff < 1e-5


def test_trace_requires_smoothness():
    with pytest.raises(ParameterError):
        jet(sp.exp(-y**2 - z**2), 1, s=F(3, 2))
    with pytest.raises(ParameterError):
        trace_jet(sample(SymExpr(sp.exp(-y**2 - z**2), 2, "g"), GridBox.cube(4, 1 / 16, 2)), params(2), 0)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_trace_linearity(a, b):
    f = sp.exp(-y**2 - z**2)
    g = (z + z**2) * sp.exp(-y**2 - 2 * z**2)
    combo = jet(a * f + b * g, 2)
    tf, tg = jet(f, 2), jet(g, 2)
    for k in range(3):
        np.testing.assert_allclose(component(combo, k), a * component(tf, k) + b * component(tg, k),
                                   atol=1e-12 * (1 + abs(a) + abs(b)))


@pytest.mark.parametrize("s", [F(1, 4), F(3, 4), F(7, 4)])
@pytest.mark.parametrize("name", ["gaussian", "z_gaussian"])
def test_reinforced_noncritical_is_plain(name, s):
    f = corpus_entry(name).iso()
    br = reinforced_norm(f, params(s))
    assert not br.critical and br.collar_terms == {}
    assert br.total == triebel_norm(f, s, 2, 2).value


@pytest.mark.parametrize("name,divergent", [("plateau", True), ("gaussian", True), ("z_gaussian", False)])
def test_reinforced_critical_r0(name, divergent):
    e = corpus_entry(name)
    br = reinforced_norm(e.iso(), params(F(1, 2)), collar_box=e.collar_box())
    assert list(br.collar_terms) == ["(0,0)"]
    assert br.divergent is divergent
    assert math.isinf(br.total) is divergent


@pytest.mark.parametrize("name,divergent", [("z_gaussian", True), ("z2_gaussian", False)])
def test_reinforced_critical_r1(name, divergent):
    e = corpus_entry(name)
    br = reinforced_norm(e.iso(), params(F(3, 2)), collar_box=e.collar_box())
    assert list(br.collar_terms) == ["(0,1)"]
    assert br.divergent is divergent
    if not divergent:
        assert br.total == pytest.approx(br.f_norm + br.collar_terms["(0,1)"].value)


# z e^{-|x|^2} at s = 3/2: |z|^2 |z|^-3 = |z|^-1, a logarithmic divergence
@pytest.mark.parametrize("name,divergent", [("z2_gaussian", False), ("z_gaussian", True), ("gaussian", True),
                                            ("bump_far", False)])
def test_rloc_equiv(name, divergent):
    e = corpus_entry(name)
    rep = rloc_equiv_norm(e.iso(), params(F(3, 2)), collar_box=e.collar_box())
    assert rep.divergent is divergent


def test_rloc_equiv_far_support_is_plain_lp():
    e = corpus_entry("bump_far")
    rep = rloc_equiv_norm(e.iso(), params(F(3, 2)), collar_box=e.collar_box())
    f = e.iso()
    plain = float(np.sqrt(np.sum(f.samples**2) * f.box.cell_volume))
    assert rep.extras["weighted"] == pytest.approx(plain, rel=1e-9)


def test_rloc_zero(dec21, pou21):
    zero = SymExpr(sp.Integer(0) * y, 2, "zero")
    assert rloc_norm(zero, dec21, pou21, params(1)).value == 0


def test_rloc_needs_closed_form(dec21, pou21):
    g = corpus_entry("z_gaussian").iso()
    bare = GridFunction(g.box, g.samples)
    with pytest.raises(ValueError):
        rloc_norm(bare, dec21, pou21, params(1))


def test_rloc_bump_in_one_cube(dec21, pou21):
    # the coarsest cubes of the [-1,1]^2 decomposition have level 2; this bump sits inside
    # the level-2 cube centred at (3/8, 7/8) and only that cube and its neighbours see it
    b = SymExpr(sym_plateau(8 * (y - sp.Rational(3, 8))) * sym_plateau(8 * (z - sp.Rational(7, 8))), 2, "bump")
    rep = rloc_norm(b, dec21, pou21, params(1))
    touched = {k for k, v in rep.extras["per_level"].items() if v > 0}
    assert touched == {"2", "3"}
    plain = triebel_norm(sample(b, GridBox.cube(2, 1 / 256, 2)), 1, 2, 2).value
    assert rep.value / plain == pytest.approx(0.88643, rel=1e-3)


def test_rloc_stable_in_jmax():
    # z e^{-|x|^2} at s = 1: finite verdict from j_max = 5 on, values settling
    f = corpus_entry("z_gaussian").expr
    vals = {}
    for j in (4, 5, 6):
        dec = whitney_decompose(SPLIT, ((-1, -1), (1, 1)), j)
        rep = rloc_norm(f, dec, partition_of_unity(dec), params(1))
        vals[j] = rep.value
        if j >= 5:
            assert rep.extras["verdict"] == "finite"
    assert vals[4] < vals[5] < vals[6]
    assert abs(vals[6] - vals[5]) / vals[6] < 0.05
    assert abs(vals[6] - vals[4]) / vals[6] < 0.15


def test_rloc_history_is_partial_sums(dec21, pou21):
    rep = rloc_norm(corpus_entry("z_gaussian").expr, dec21, pou21, params(1))
    hist = [v for _, v in rep.history]
    assert len(hist) == dec21.j_max
    assert all(a <= b for a, b in zip(hist, hist[1:]))
    assert hist[-1] == pytest.approx(rep.value)


def test_rloc_several_s_match_single(dec21, pou21):
    f = corpus_entry("z2_gaussian").expr
    many = rloc_norms(f, dec21, pou21, params(1), [F(3, 4), F(1)])
    assert many[F(1)].value == pytest.approx(rloc_norm(f, dec21, pou21, params(1)).value, rel=1e-12)
    assert many[F(3, 4)].value < many[F(1)].value


def test_rloc_derivative_bracket(dec21, pou21):
    """rloc(d_z g, s - 1) / rloc(g, s) over g = f(2^k .), f = z^2 e^{-|x|^2}, s = 7/4."""
    base = corpus_entry("z2_gaussian")
    ratios = []
    for k in range(4):
        g = base.dilated(k)
        dg = SymExpr(g.derivative((0, 1)).sym, 2, "dz")
        num = rloc_norm(dg, dec21, pou21, params(F(3, 4))).value
        den = rloc_norm(g, dec21, pou21, params(F(7, 4))).value
        ratios.append(num / den)
    assert max(ratios) / min(ratios) < 2
    assert ratios[0] == pytest.approx(0.05256, rel=1e-3)


def plateau_disk(lam):
    r = sp.sqrt(y**2 + z**2)
    f = SymExpr(sym_plateau(r / lam), 2, "disk")
    return sample(f, GridBox.cube(4 * lam, lam / 32, 2))


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_homogeneity_surrogate_exact(k):
    lam = 2.0**-k
    assert homogeneity_ratio(plateau_disk(lam), lam, surrogate=True) == pytest.approx(1, abs=1e-6)


def test_homogeneity_h1_bracket():
    ratios = [homogeneity_ratio(plateau_disk(2.0**-k), 2.0**-k, params(1)) for k in range(1, 5)]
    assert max(ratios) / min(ratios) <= 3
    assert all(abs(r - 1) < 0.05 for r in ratios)


def test_homogeneity_errors():
    f = plateau_disk(0.5)
    with pytest.raises(SupportError):
        homogeneity_ratio(f, 0.25, params(1))
    with pytest.raises(ParameterError):
        homogeneity_ratio(f, 0.3, params(1))
    zero = GridFunction(f.box, np.zeros(f.box.shape))
    with pytest.raises(DegenerateInputError):
        homogeneity_ratio(zero, 0.5, params(1))


def test_fubini_separable_frozen():
    f = sample(SymExpr(sp.exp(-y**2) * sp.exp(-2 * z**2), 2, "sep"), GridBox.cube(8, 1 / 16, 2))
    r = fubini_ratio(f, params(1))
    assert 1 < r < 2
    assert fubini_ratio(f, params(1)) == r


def test_fubini_dilation_stable():
    e = corpus_entry("z_gaussian")
    ratios = [fubini_ratio(e.iso(k), params(1)) for k in range(4)]
    assert max(ratios) / min(ratios) <= 2
    assert ratios[0] == pytest.approx(1.5275, rel=1e-3)


def test_fubini_errors():
    e = corpus_entry("z_gaussian")
    f = e.iso()
    with pytest.raises(DegenerateInputError):
        fubini_ratio(GridFunction(f.box, np.zeros(f.box.shape)), params(1))
    with pytest.raises(ParameterError):
        fubini_ratio(f, params(1), l=2)
    wide = sample(SymExpr(sp.exp(-(y**2 + z**2) / 16), 2, "wide"), GridBox.cube(4, 1 / 16, 2))
    with pytest.raises(SupportError):
        fubini_ratio(wide, params(1))
