import csv
import io
import math
from fractions import Fraction as F

import pytest

from whitneyhardy.corpus import CORPUS, corpus_entry, plateau_expr
from whitneyhardy.decomposition import (BOUNDARY_CASES, boundary_hardy_sweep, fJ_table, membership_report,
                                        membership_reports, partition_route, reinforced_divergence_probe,
                                        run_critical_experiment, run_noncritical_experiment, subcritical_table,
                                        theorem_predicts_rloc, trace_order)
from whitneyhardy.geometry import CriticalityClass, ParameterError, PlaneSplit, SmoothnessParams, classify_criticality
from whitneyhardy.hardy import WeightSpec

SPLIT = PlaneSplit(2, 1)


def params(s, split=SPLIT):
    return SmoothnessParams(F(s), 2, 2, split)


@pytest.mark.parametrize("s,order", [(F(1, 4), -1), (F(3, 4), 0), (F(7, 4), 1), (F(1, 2), -1), (F(3, 2), 0),
                                     (F(5, 2), 1)])
def test_trace_order(s, order):
    assert trace_order(classify_criticality(params(s))) == order


@pytest.mark.parametrize("critical,r", [(False, -1), (False, 0), (False, 2), (True, 0), (True, 1)])
def test_theorem_rule(critical, r):
    cls = CriticalityClass(critical, r)
    for rein in (True, False):
        for van in (True, False):
            expect = rein and (van or (r == -1 if not critical else r == 0))
            assert theorem_predicts_rloc(cls, rein, van) is expect


def test_report_vanishing_trace_critical():
    rep = membership_report(corpus_entry("z2_gaussian"), params(F(3, 2)))
    assert rep.criticality.critical and rep.criticality.r == 1
    assert rep.traces_vanish and rep.in_reinforced and rep.in_rloc
    assert rep.consistent_with_theorem


def test_report_gaussian_excluded():
    rep = membership_report(corpus_entry("gaussian"), params(F(3, 2)))
    assert not rep.traces_vanish and rep.in_rloc is False
    assert rep.in_F
    assert rep.consistent_with_theorem


@pytest.mark.parametrize("s", [F(1, 4), F(3, 2), F(5, 2)])
def test_report_away_from_plane(s):
    rep = membership_report(corpus_entry("bump_offplane"), params(s))
    assert rep.traces_vanish and rep.in_reinforced and rep.in_rloc
    assert rep.consistent_with_theorem


def test_reports_with_partition_route():
    entries = [corpus_entry(n) for n in ("z_gaussian", "plateau", "bump_far")]
    grid = [params(F(3, 4)), params(F(1, 2))]
    reps = membership_reports(entries, grid)
    assert len(reps) == 6
    for r in reps:
        assert r.consistent_with_theorem and r.routes_agree, r.row()
    row = reps[0].row()
    assert row["entry"] == "z_gaussian" and set(row) >= {"consistent_with_theorem", "routes_agree"}


def test_partition_route_verdicts():
    e = corpus_entry("gaussian")
    out = partition_route(e, [params(F(1, 4)), params(F(3, 4))])
    assert out[F(1, 4)].divergent is False
    assert out[F(3, 4)].divergent is True


def test_noncritical_subcritical_regime():
    recs = run_noncritical_experiment(CORPUS, params(F(1, 4)), dilations=(0,))
    assert all(not r.flags["weighted_divergent"] for r in recs)


def test_noncritical_r1():
    recs = {r.entry: r for r in run_noncritical_experiment([corpus_entry("z2_gaussian"), corpus_entry("z_gaussian")],
                                                             params(F(7, 4)))}
    good, bad = recs["z2_gaussian"], recs["z_gaussian"]
    assert good.flags["traces_vanish"] and not good.flags["weighted_divergent"]
    assert good.bracket <= 4
    assert not bad.flags["traces_vanish"] and bad.flags["weighted_divergent"]
    assert math.isnan(bad.bracket)


def test_noncritical_rejects_critical():
    with pytest.raises(ParameterError):
        run_noncritical_experiment(CORPUS[:1], params(F(3, 2)))
    with pytest.raises(ParameterError):
        run_critical_experiment(CORPUS[:1], params(F(3, 4)))


def test_critical_chain_stable():
    # z e^{-|x|^2} has a nonzero normal derivative trace, so at s = 3/2 its reinforced term
    # diverges; z^2 e^{-|x|^2} is the entry that carries the chain
    recs = {r.entry: r for r in run_critical_experiment([corpus_entry("z2_gaussian"), corpus_entry("plateau"),
                                                          corpus_entry("z_gaussian")], params(F(3, 2)))}
    chain = recs["z2_gaussian"]
    assert not chain.flags["gap_witness"]
    assert chain.bracket <= 4
    assert chain.values["refinement_delta"] < 0.1
    # the plateau is flat near the plane, so its first normal derivative is harmless here
    assert not recs["plateau"].flags["gap_witness"]
    assert recs["z_gaussian"].flags["gap_witness"]


def test_critical_r0_is_definition():
    recs = {r.entry: r for r in run_critical_experiment([corpus_entry("plateau"), corpus_entry("z_plateau")],
                                                         params(F(1, 2)))}
    assert recs["plateau"].flags["reinforced_divergent"] and recs["plateau"].flags["gap_witness"]
    assert not recs["z_plateau"].flags["reinforced_divergent"]
    assert recs["z_plateau"].values["quotient_k0"] == 1.0


def test_probe_log_signature():
    rec = reinforced_divergence_probe(params(F(1, 2)), [1 / 64, 1 / 128, 1 / 256, 1 / 512])
    assert rec.log_divergent and not rec.convergent
    assert rec.relative_residual < 0.1
    d = rec.differences
    assert max(d) / min(d) < 1.15


def test_probe_control_converges():
    rec = reinforced_divergence_probe(params(F(1, 2)), [1 / 64, 1 / 128, 1 / 256, 1 / 512],
                                      f=corpus_entry("z_gaussian").expr)
    assert rec.convergent and not rec.log_divergent


def test_probe_codim_two():
    split = PlaneSplit(3, 1)
    rec = reinforced_divergence_probe(params(F(1), split), [1 / 16, 1 / 32, 1 / 64], f=plateau_expr(3),
                                      parallel_half_width=1.0, parallel_h=1 / 8)
    assert rec.log_divergent


@pytest.mark.parametrize("hs", [[1 / 16, 1 / 32], [1 / 16, 1 / 32, 1 / 32], [1 / 64, 1 / 32, 1 / 16]])
def test_probe_rejects_resolutions(hs):
    with pytest.raises(ParameterError):
        reinforced_divergence_probe(params(F(1, 2)), hs)


def test_probe_needs_r0():
    with pytest.raises(ParameterError):
        reinforced_divergence_probe(params(F(3, 2)), [1 / 16, 1 / 32, 1 / 64])


def test_fJ_table_log_increasing():
    rows = fJ_table([2, 3], WeightSpec.parse("log^1"))
    assert rows[0].quotient < rows[1].quotient
    assert rows[0].quotient == pytest.approx(3.786, rel=1e-3)


def test_subcritical_table_flat():
    rows = subcritical_table([2, 3, 4], WeightSpec.parse("1"))
    q = [r.quotient for r in rows]
    assert max(q) / min(q) <= 3


def test_boundary_sweep_rows():
    rows = boundary_hardy_sweep(BOUNDARY_CASES[:1], dilations=(0, 1))
    assert [r.k for r in rows] == [0, 1]
    for r in rows:
        assert math.isfinite(r.quotient) and r.relative_change < 0.1
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].row()))
    w.writeheader()
    w.writerows(r.row() for r in rows)
    assert buf.getvalue().count("\n") == 3
