import numpy as np
import pytest
from hypothesis import given, strategies as st

from whitneyhardy.geometry import ParameterError, PlaneSplit
from whitneyhardy.whitney import (CoverageError, DyadicCube, adjacency_pairs, bump_profile, partition_of_unity,
                                  verify_whitney, whitney_decompose, whitney_interval)

# frozen from the level-3 representative cubes of the (2,1), j_max = 6 decomposition
DERIVATIVE_CONSTANTS = {(0, 1): 4.040522491484196, (1, 0): 1.6276906999664855, (0, 2): 58.39907082752012,
                        (1, 1): 15.042562208278499, (2, 0): 17.18754297972623}


def test_dyadic_cube_geometry():
    q = DyadicCube(2, (1, -1))
    lo, hi = q.inner()
    assert np.allclose(lo, [0.25, -0.25]) and np.allclose(hi, [0.5, 0.0])
    olo, ohi = q.outer()
    assert np.allclose(ohi - olo, 2 * q.side)
    assert np.allclose(q.center, [0.375, -0.125])


def test_counts_21(dec21):
    assert dec21.counts == {2: 16, 3: 96, 4: 192, 5: 384, 6: 768}


@pytest.mark.parametrize("n,l", [(2, 1), (2, 0)])
def test_verify_passes(n, l):
    dec = whitney_decompose(PlaneSplit(n, l), ((-1,) * n, (1,) * n), 5)
    diag = verify_whitney(dec)
    assert diag.passed and diag.disjoint and not diag.hole_outside_collar
    assert diag.max_adjacent_level_gap <= 1
    lo, hi = diag.distance_ratio_range
    assert 0 < lo and hi / lo <= 8


def test_interval():
    dec = whitney_interval(6)
    diag = verify_whitney(dec)
    assert diag.passed
    assert diag.distance_ratio_range == (1.5, 2.5)


def test_non_integer_bbox_rejected():
    with pytest.raises(ParameterError):
        whitney_decompose(PlaneSplit(2, 1), ((-0.5, -1), (1, 1)), 3)


def test_overlap_detected(dec21):
    i = int(np.nonzero(dec21.levels == 3)[0][0])
    j = int(np.nonzero(dec21.levels == 3)[0][1])
    broken = dec21.replaced(j, dec21.cubes[i])
    assert not verify_whitney(broken).disjoint


def test_hole_detected():
    dec = whitney_decompose(PlaneSplit(2, 1), ((-1, -1), (1, 1)), 4)
    i = int(np.nonzero(dec.levels == 2)[0][0])
    moved = dec.replaced(i, DyadicCube(4, (0, 15)))  # a far-away level-2 cube becomes tiny
    diag = verify_whitney(moved)
    assert diag.hole_outside_collar and not diag.passed
    with pytest.raises(CoverageError):
        partition_of_unity(moved)


@given(st.floats(-1, 1, exclude_max=True), st.floats(-1, 1, exclude_max=True))
def test_points_away_from_plane_in_exactly_one_cube(dec21, y, z):
    if abs(z) < dec21.collar_width:
        return
    side = 2.0 ** -dec21.levels.astype(float)
    lo = dec21.indices * side[:, None]
    inside = np.all((lo <= [y, z]) & ([y, z] < lo + side[:, None]), axis=1)
    assert inside.sum() == 1


def test_adjacent_levels_differ_by_at_most_one(dec21):
    pairs = adjacency_pairs(dec21)
    assert len(pairs) > 0
    assert np.abs(dec21.levels[pairs[:, 0]] - dec21.levels[pairs[:, 1]]).max() <= 1


def test_exports(dec21, tmp_path):
    rows = dec21.to_rows()
    assert len(rows) == len(dec21) and set(rows[0]) == {"level", "m_1", "m_2", "side", "dist_to_plane"}
    dec21.to_csv(tmp_path / "w.csv")
    assert (tmp_path / "w.csv").read_text().count("\n") == len(dec21) + 1
    assert dec21.to_svg().startswith("<svg")
    assert '"j_max": 6' in dec21.to_json()


@pytest.mark.parametrize("order", [1, 2])
def test_bump_derivatives_match_differences(order):
    t = np.linspace(-0.95, 0.95, 41)
    h = 1e-5
    if order == 1:
        fd = (bump_profile(t + h) - bump_profile(t - h)) / (2 * h)
    else:
        fd = (bump_profile(t + h) - 2 * bump_profile(t) + bump_profile(t - h)) / h**2
    assert np.allclose(bump_profile(t, order), fd, atol=1e-4)


def test_bump_support():
    assert np.all(bump_profile(np.array([-1.0, 1.0, 1.5, -3.0])) == 0)


@given(st.lists(st.tuples(st.floats(-0.9, 0.9), st.floats(0.06, 0.9)), min_size=1, max_size=20))
def test_partition_sums_to_one(pou21, pts):
    x = np.array(pts)
    x[:, 1] *= np.where(np.arange(len(x)) % 2, 1, -1)
    assert np.allclose(pou21.total(x), 1.0, atol=1e-12)


def test_rho_vanishes_outside_outer_cube(pou21, dec21):
    i = int(np.nonzero(dec21.levels == 4)[0][0])
    lo, hi = dec21.cubes[i].outer()
    pts = np.array([lo - 0.01, hi + 0.01, [hi[0] + 0.2, lo[1]]])
    assert np.all(pou21.rho(i, pts) == 0)


@pytest.mark.parametrize("alpha", [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2)])
def test_rho_derivatives_match_differences(pou21, dec21, alpha):
    i = int(pou21.representative_cubes(4)[0])
    c = dec21.cubes[i].center
    x = c + np.array([[0.3, 0.2], [-0.4, 0.1], [0.1, -0.35]]) * dec21.cubes[i].side
    h = 1e-4 * dec21.cubes[i].side
    e = [np.array([h, 0.0]), np.array([0.0, h])]

    def r(pts):
        return pou21.rho(i, pts)

    if sum(alpha) == 1:
        a = alpha.index(1)
        fd = (r(x + e[a]) - r(x - e[a])) / (2 * h)
    elif 2 in alpha:
        a = alpha.index(2)
        fd = (r(x + e[a]) - 2 * r(x) + r(x - e[a])) / h**2
    else:
        fd = (r(x + e[0] + e[1]) - r(x + e[0] - e[1]) - r(x - e[0] + e[1]) + r(x - e[0] - e[1])) / (4 * h * h)
    exact = pou21.rho(i, x, alpha)
    assert np.allclose(exact, fd, rtol=1e-4, atol=1e-6 * 2.0 ** (4 * sum(alpha)))


def test_derivative_constants_frozen_and_scale_free(pou21):
    dc = pou21.derivative_constants([3, 4, 5, 6], samples=25)
    for alpha, ref in DERIVATIVE_CONSTANTS.items():
        vals = list(dc[alpha].values())
        assert max(vals) / min(vals) <= 1.01
        assert vals[0] == pytest.approx(ref, rel=1e-9)


def test_rho_order_limit(pou21):
    with pytest.raises(ValueError):
        pou21.rho(0, np.zeros((1, 2)), (3, 0))
