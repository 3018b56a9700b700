"""Experiment drivers: membership verdicts against the decomposition theorems, dilation
sweeps of the Hardy-type quotients, and the logarithmic divergence probe."""

from __future__ import annotations

import math
import time
from fractions import Fraction
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .corpus import CORPUS, CorpusEntry, corpus_entry, plateau_expr
from .discretize import CELL, GridBox, NormReport, Weight, _weighted_sum, sample, triebel_norm, weighted_lp_norm
from .expr import Expr
from .geometry import CriticalityClass, ParameterError, PlaneSplit, SmoothnessParams, classify_criticality
from .hardy import (WeightSpec, boundary_hardy_quotient, boundary_hardy_terms, build_fJ, build_subcritical_witness,
                    critical_quotient, fJ_lower_bound, subcritical_quotient)
from .spaces import reinforced_norm, rloc_equiv_norm, rloc_norms, trace_jet
from .whitney import partition_of_unity, whitney_decompose

TRACE_TOL = 1e-8
RLOC_JMAX = 6


def trace_order(cls: CriticalityClass) -> int:
    """Highest trace order the applicable theorem asks to vanish (-1: none)."""
    if cls.critical:
        return cls.r - 1
    return cls.r


def theorem_predicts_rloc(cls: CriticalityClass, in_reinforced: bool, traces_vanish: bool) -> bool:
    if trace_order(cls) < 0:
        return in_reinforced
    return in_reinforced and traces_vanish


@dataclass
class MembershipReport:
    entry: str
    params: SmoothnessParams
    criticality: CriticalityClass
    in_F: bool
    f_norm: float
    trace_order: int
    traces_vanish: bool
    trace_summary: str
    in_reinforced: bool
    reinforced_total: float
    in_rloc: bool | None
    rloc_equiv: float
    rloc_verdict: str | None
    in_rloc_partition: bool | None = None
    rloc_partition: float = math.nan
    extras: dict = field(default_factory=dict)

    @property
    def expected_in_rloc(self) -> bool:
        return theorem_predicts_rloc(self.criticality, self.in_reinforced, self.traces_vanish)

    @property
    def routes_agree(self) -> bool:
        return self.in_rloc_partition is None or self.in_rloc_partition == self.in_rloc

    @property
    def consistent_with_theorem(self) -> bool:
        return self.in_rloc is not None and self.in_F and self.in_rloc == self.expected_in_rloc

    def row(self) -> dict:
        p = self.params
        return {
            "entry": self.entry, "n": p.n, "l": p.l, "s": _fmt(p.s), "p": _fmt(p.p), "q": _fmt(p.q),
            "class": str(self.criticality), "in_F": self.in_F, "f_norm": _num(self.f_norm),
            "trace_order": self.trace_order, "traces_vanish": self.traces_vanish, "traces": self.trace_summary,
            "in_reinforced": self.in_reinforced, "reinforced": _num(self.reinforced_total),
            "in_rloc": self.in_rloc, "rloc_equiv": _num(self.rloc_equiv), "rloc_verdict": self.rloc_verdict,
            "in_rloc_partition": self.in_rloc_partition, "rloc_partition": _num(self.rloc_partition),
            "routes_agree": self.routes_agree, "consistent_with_theorem": self.consistent_with_theorem,
        }


def _fmt(v) -> str:
    return str(v)


def _num(v) -> str:
    v = float(v)
    if math.isinf(v):
        return "inf"
    if math.isnan(v):
        return "nan"
    return f"{v:.6e}"


@lru_cache(maxsize=4)
def rloc_partition_setup(j_max: int = RLOC_JMAX, n: int = 2, l: int = 1):
    dec = whitney_decompose(PlaneSplit(n, l), ((-1,) * n, (1,) * n), j_max)
    return dec, partition_of_unity(dec)


def partition_route(entry: CorpusEntry, params_list: Sequence[SmoothnessParams], j_max: int = RLOC_JMAX) -> dict:
    """s -> NormReport of the partition-of-unity rloc norm, all s in one pass."""
    dec, pou = rloc_partition_setup(j_max, entry.n, entry.l)
    base = params_list[0]
    return rloc_norms(entry.expr, dec, pou, base, [p.s for p in params_list])


def membership_report(entry: CorpusEntry, params: SmoothnessParams, partition: dict | None = None,
                      trace_tol: float = TRACE_TOL) -> MembershipReport:
    cls = classify_criticality(params)
    iso = entry.iso()
    f_norm = triebel_norm(iso, params.s, params.p, params.q).value
    order = trace_order(cls)
    if order >= 0:
        jet = trace_jet(entry.node(), params, order, exact=True)
        vanish = jet.vanishes_up_to(order, trace_tol)
        summary = jet.summary(trace_tol)
    else:
        vanish, summary = True, "-"
    rein = reinforced_norm(iso, params, entry.collar_box())
    rin = not rein.divergent
    if any(rep.divergent is None for rep in rein.collar_terms.values()):
        rin = None
    eq = rloc_equiv_norm(iso, params, entry.collar_box())
    in_rloc = None if eq.divergent is None else not eq.divergent
    rep = MembershipReport(entry.id, params, cls, math.isfinite(f_norm), f_norm, order, vanish, summary,
                           bool(rin), rein.total, in_rloc, eq.value if in_rloc else math.inf,
                           eq.extras.get("verdict"))
    if rin is None:
        rep.in_rloc = None
    if partition is not None and params.s in partition:
        pr = partition[params.s]
        rep.in_rloc_partition = None if pr.divergent is None else not pr.divergent
        rep.rloc_partition = pr.value
        rep.extras["partition_verdict"] = pr.extras.get("verdict")
    rep.extras["trace_matches_corpus"] = (order < 0 or vanish == entry.expected_traces_vanish(order))
    return rep


def membership_reports(entries: Sequence[CorpusEntry] | None = None,
                       grid: Sequence[SmoothnessParams] | None = None,
                       with_partition: bool = True) -> list[MembershipReport]:
    """All corpus entries x parameter sets, in corpus order then grid order."""
    from .corpus import default_grid

    entries = list(entries or CORPUS)
    grid = list(grid or default_grid())
    out = []
    for e in entries:
        part = partition_route(e, grid) if with_partition else None
        for params in grid:
            out.append(membership_report(e, params, part))
    return out


# --- dilation experiments --------------------------------------------------------------------


@dataclass
class ExperimentRecord:
    entry: str
    params: SmoothnessParams
    kind: str
    values: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    resolution: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def bracket(self) -> float:
        q = [v for k, v in self.values.items() if k.startswith("quotient_k")]
        q = [v for v in q if math.isfinite(v) and v > 0]
        return max(q) / min(q) if q else math.nan

    def row(self) -> dict:
        out = {"entry": self.entry, "s": str(self.params.s), "p": str(self.params.p), "kind": self.kind}
        out.update({k: _num(v) if isinstance(v, float) else v for k, v in sorted(self.values.items())})
        out.update({f"flag_{k}": v for k, v in sorted(self.flags.items())})
        out.update({f"h_{k}": _num(v) for k, v in sorted(self.resolution.items())})
        out["bracket"] = _num(self.bracket)
        return out


def weighted_distance_norm(entry: CorpusEntry, k: int, params: SmoothnessParams, refine: int = 2) -> NormReport:
    """||d^-s f(2^k .) | L_p||: the collar part on the fine collar grid (refined, with
    verdict), the rest on the isotropic grid where d^-s is bounded."""
    f = sample(entry.dilated(k), entry.collar_box(k))
    near = weighted_lp_norm(f, params.p, Weight(params.split, params.s * params.p, params.eps), refine=refine)
    far = _weighted_sum(entry.iso(k), params.p, Weight(params.split, params.s * params.p, None, lower=params.eps))
    p = float(params.p)
    near.extras["collar"] = near.value
    near.extras["far"] = far ** (1 / p)
    near.value = (near.value**p + far) ** (1 / p)
    return near


def run_noncritical_experiment(corpus: Sequence[CorpusEntry], params: SmoothnessParams,
                               dilations: Sequence[int] = (0, 1, 2, 3)) -> list[ExperimentRecord]:
    """||d^-s f | L_p|| / ||f|F|| over dilations for entries whose traces up to r vanish;
    divergence flags of the weighted term for the others."""
    cls = classify_criticality(params)
    if cls.critical:
        raise ParameterError(f"non-critical experiment called with {cls}")
    out = []
    for e in corpus:
        t0 = time.perf_counter()
        rec = ExperimentRecord(e.id, params, "noncritical")
        vanish = e.expected_traces_vanish(cls.r) if cls.r >= 0 else True
        rec.flags["traces_vanish"] = vanish
        first = weighted_distance_norm(e, 0, params)
        rec.flags["weighted_divergent"] = bool(first.divergent)
        rec.flags["weighted_verdict"] = first.extras.get("verdict")
        rec.history["weighted"] = first.history
        rec.resolution["collar_hz"] = e.collar_box().spacing[-1]
        rec.resolution["iso_h"] = e.iso_box().spacing[0]
        if len(first.history) >= 2:
            a, b = first.history[0][1], first.history[1][1]
            rec.values["refinement_delta"] = abs(b - a) / b if b else math.inf
        if vanish and not first.divergent:
            for k in dilations:
                num = first.value if k == 0 else weighted_distance_norm(e, k, params, 0).value
                den = triebel_norm(e.iso(k), params.s, params.p, params.q).value
                rec.values[f"quotient_k{k}"] = num / den
        rec.wall_time = time.perf_counter() - t0
        out.append(rec)
    return out


def hardy_chain_quotient(entry: CorpusEntry, params: SmoothnessParams, r: int, k: int = 0,
                         hz_factor: int = 1) -> tuple[float, float, float]:
    f = sample(entry.dilated(k), entry.collar_box(k, hz=1 / 128 / hz_factor))
    num, den = boundary_hardy_terms(f, params, r)
    return (num / den if den > 0 else math.inf), num, den


def run_critical_experiment(corpus: Sequence[CorpusEntry], params: SmoothnessParams,
                            dilations: Sequence[int] = (0, 1, 2, 3)) -> list[ExperimentRecord]:
    """Hardy chain ||d^-s f|| / sum ||d^-(n-l)/p D^alpha f|| over dilations for entries with
    vanishing traces up to r-1 and a finite reinforced norm; entries with a divergent
    reinforced term are reported as gap witnesses."""
    cls = classify_criticality(params)
    if not cls.critical:
        raise ParameterError(f"critical experiment called with {cls}")
    r = cls.r
    out = []
    for e in corpus:
        t0 = time.perf_counter()
        rec = ExperimentRecord(e.id, params, "critical")
        rein = reinforced_norm(e.iso(), params, e.collar_box())
        rec.flags["reinforced_divergent"] = rein.divergent
        rec.flags["traces_vanish"] = e.expected_traces_vanish(r - 1)
        rec.flags["gap_witness"] = rein.divergent
        rec.values["f_norm"] = rein.f_norm
        rec.history["reinforced"] = {a: t.history for a, t in rein.collar_terms.items()}
        if rec.flags["traces_vanish"] and not rein.divergent:
            for k in dilations:
                if r == 0:
                    rec.values[f"quotient_k{k}"] = 1.0
                    continue
                q, num, den = hardy_chain_quotient(e, params, r, k)
                rec.values[f"quotient_k{k}"] = q
            if r > 0:
                fine = hardy_chain_quotient(e, params, r, 0, 2)[0]
                rec.values["quotient_refined"] = fine
                q0 = rec.values["quotient_k0"]
                rec.values["refinement_delta"] = abs(fine - q0) / abs(fine) if fine else 0.0
        rec.resolution["collar_hz"] = e.collar_box().spacing[-1]
        rec.resolution["iso_h"] = e.iso_box().spacing[0]
        rec.wall_time = time.perf_counter() - t0
        out.append(rec)
    return out


# --- logarithmic divergence probe ----------------------------------------------------------


@dataclass
class ProbeRecord:
    n: int
    l: int
    resolutions: list
    integrals: list
    slope: float
    intercept: float
    relative_residual: float
    differences: list
    difference_ratios: list

    @property
    def log_divergent(self) -> bool:
        """Increments equal within 15% and the log model fits within 10%."""
        d = self.differences
        equal = all(abs(a - b) <= 0.15 * max(abs(a), abs(b)) for a, b in zip(d, d[1:]))
        return equal and self.relative_residual < 0.10 and self.slope > 0

    @property
    def convergent(self) -> bool:
        """Increments shrink by at least 1.5x per halving."""
        return all(abs(b) * 1.5 <= abs(a) for a, b in zip(self.differences, self.differences[1:]))

    def row(self) -> dict:
        return {"n": self.n, "l": self.l, "slope": _num(self.slope), "intercept": _num(self.intercept),
                "relative_residual": _num(self.relative_residual), "log_divergent": self.log_divergent,
                "convergent": self.convergent}


def reinforced_divergence_probe(params: SmoothnessParams, resolutions: Sequence[float],
                                f: Expr | None = None, parallel_half_width: float = 2.0,
                                parallel_h: float = 1 / 16) -> ProbeRecord:
    """Collar integral int |f|^p d^-(n-l) at perpendicular spacings ``resolutions``, fitted by
    c |log h| + b. Default f is a plateau equal to 1 near the plane."""
    cls = classify_criticality(params)
    if not (cls.critical and cls.r == 0):
        raise ParameterError("the divergence probe needs s = (n-l)/p")
    hs = [float(h) for h in resolutions]
    if len(hs) < 3:
        raise ParameterError("the divergence probe needs at least three resolutions")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ParameterError("resolutions must be decreasing")
    split = params.split
    f = f or plateau_expr(split.n)
    eps = params.eps
    w = Weight(split, split.codim, eps)
    vals = []
    for h in hs:
        lo = [-parallel_half_width] * split.l + [-eps] * split.codim
        hi = [parallel_half_width] * split.l + [eps] * split.codim
        sp_ = [parallel_h] * split.l + [h] * split.codim
        box = GridBox(tuple(lo), tuple(hi), tuple(sp_), CELL)
        vals.append(_weighted_sum(sample(f, box), params.p, w))
    x = np.abs(np.log(hs))
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, np.asarray(vals), rcond=None)
    fit = A @ coef
    span = max(vals) - min(vals)
    resid = float(np.max(np.abs(fit - vals)) / span) if span > 0 else math.inf
    diffs = [b - a for a, b in zip(vals, vals[1:])]
    ratios = [b / a if a else math.inf for a, b in zip(diffs, diffs[1:])]
    return ProbeRecord(split.n, split.l, hs, vals, float(coef[0]), float(coef[1]), resid, diffs, ratios)


# --- sharpness witnesses and the boundary Hardy sweep -------------------------------------------

FJ_COLLAR = GridBox((-2.0, -0.5), (2.0, 0.5), (1 / 128, 1 / 1024), CELL)
FJ_NORM = GridBox.cube(4.0, 1 / 128, 2, CELL)


@dataclass
class WitnessRow:
    kind: str
    index: int
    kappa: str
    quotient: float
    lhs: float
    norm: float
    lower_bound: float = math.nan

    def row(self) -> dict:
        return {"kind": self.kind, "index": self.index, "kappa": self.kappa, "quotient": _num(self.quotient),
                "lhs": _num(self.lhs), "norm": _num(self.norm), "lower_bound": _num(self.lower_bound)}


def fJ_table(Js: Sequence[int], kappa: WeightSpec, p=2, split: PlaneSplit | None = None,
             collar: GridBox = FJ_COLLAR, norm_box: GridBox = FJ_NORM, seed: int = 0) -> list[WitnessRow]:
    """Critical log-Hardy quotient of the f_J family (s = (n-l)/p) for each J."""
    split = split or PlaneSplit(2, 1)
    params = SmoothnessParams(Fraction(split.codim) / p if isinstance(p, int) else split.codim / p, p, 2, split)
    w = WeightSpec(kappa.kind, kappa.delta, True)
    out = []
    for J in Js:
        rep = critical_quotient(build_fJ(J, p, split, collar), params, w, norm_f=build_fJ(J, p, split, norm_box))
        out.append(WitnessRow("fJ", J, w.label(), rep.value, rep.extras["lhs"], rep.extras["norm"],
                              fJ_lower_bound(J, p, split, seed=seed)))
    return out


def subcritical_table(js: Sequence[int], kappa: WeightSpec, s=Fraction(1, 4), p=2,
                      split: PlaneSplit | None = None) -> list[WitnessRow]:
    """Subcritical Hardy quotient of the witnesses f_j at distance 2^-j from the plane."""
    split = split or PlaneSplit(2, 1)
    params = SmoothnessParams(s, p, 2, split)
    out = []
    for j in js:
        rep = subcritical_quotient(build_subcritical_witness(j, s, p, split), params, kappa)
        out.append(WitnessRow("subcritical", j, kappa.label(), rep.value, rep.extras["lhs"], rep.extras["norm"]))
    return out


@dataclass
class BoundaryHardyRow:
    entry: str
    r: int
    s: object
    k: int
    quotient: float
    relative_change: float

    def row(self) -> dict:
        return {"entry": self.entry, "r": self.r, "s": str(self.s), "k": self.k, "quotient": _num(self.quotient),
                "relative_change": _num(self.relative_change)}


BOUNDARY_CASES = (("z_gaussian", 1, Fraction(3, 2)), ("z_gaussian", 1, Fraction(1)),
                  ("z2_gaussian", 2, Fraction(5, 2)), ("z2_gaussian", 2, Fraction(2)))


def boundary_hardy_sweep(cases=BOUNDARY_CASES, dilations: Sequence[int] = (0, 1, 2, 3),
                         hz: float = 1 / 256) -> list[BoundaryHardyRow]:
    """Boundary Hardy quotient of z^r-type entries over the dilation family, each with
    one perpendicular refinement."""
    out = []
    for name, r, s in cases:
        e = corpus_entry(name)
        params = SmoothnessParams(s, 2, 2, e.split)
        for k in dilations:
            rep = boundary_hardy_quotient(sample(e.dilated(k), e.collar_box(k, hz)), params, r, refine=1)
            out.append(BoundaryHardyRow(name, r, s, k, rep.value, rep.extras["relative_change"]))
    return out
