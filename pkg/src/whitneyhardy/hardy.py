"""Hardy-type functionals near R^l and the witness families that make them sharp."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import sympy as sp

from .discretize import (CELL, GridBox, GridFunction, NormReport, ResolutionError, Weight, derivative,
                         sample, triebel_norm, weighted_lp_norm, _weighted_sum)
from .expr import Expr, SymExpr, plateau_profile
from .geometry import (ParameterError, PlaneSplit, SmoothnessParams, classify_criticality,
                       perpendicular_multi_indices)


class DegenerateInputError(ValueError):
    pass


class TraceConditionError(ValueError):
    """The function does not satisfy the vanishing-trace hypothesis."""


# --- weights ----------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSpec:
    """kappa in {1, |log t|^delta, t^-delta} and whether to divide by log d."""

    kind: str = "one"
    delta: float = 0.0
    log_divisor: bool = False

    def __post_init__(self):
        if self.kind not in ("one", "log", "power"):
            raise ParameterError(f"unknown kappa kind {self.kind!r}")
        if self.kind != "one" and not self.delta > 0:
            raise ParameterError("kappa exponent delta must be positive")

    def kappa(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "one":
            return np.ones_like(t)
        if self.kind == "log":
            return np.abs(np.log(t)) ** self.delta
        return t ** (-self.delta)

    def check_monotone(self, eps: float = 0.5, samples: int = 1000) -> bool:
        t = np.geomspace(1e-12, eps, samples, endpoint=False)
        k = self.kappa(t)
        return bool(np.all(k > 0) and np.all(np.diff(k) <= 1e-12 * k[:-1]))

    def label(self) -> str:
        if self.kind == "one":
            return "1"
        return f"log^{self.delta:g}" if self.kind == "log" else f"t^-{self.delta:g}"

    @classmethod
    def parse(cls, text: str, log_divisor: bool = False) -> "WeightSpec":
        """'1', 'log^d' or 'pow^d' (t^-d)."""
        text = text.strip()
        if text in ("1", "one"):
            return cls("one", 0.0, log_divisor)
        name, _, exp = text.partition("^")
        delta = float(exp) if exp else 1.0
        if name == "log":
            return cls("log", delta, log_divisor)
        if name in ("pow", "power", "t"):
            return cls("power", delta, log_divisor)
        raise ParameterError(f"cannot parse kappa {text!r}")


# --- one-dimensional Hardy inequality ---------------------------------------------------------


def power_function_1d(beta: float, T: float = 1.0, t_min: float = 1e-8, points: int = 4096) -> GridFunction:
    """t^beta sampled on a uniform grid in u = log t over [log t_min, log T] (cell-centered)."""
    lo, hi = math.log(t_min), math.log(T)
    box = GridBox((lo,), (hi,), ((hi - lo) / points,), CELL)
    u = sp.Symbol("x0", real=True)
    return sample(SymExpr(sp.exp(beta * u), 1, f"t^{beta:g} in log t"), box)


def hardy_quotient_1d(g: GridFunction, p: float, alpha: float, log_coordinates: bool = True) -> float:
    """[int (|g|/t)^p t^alpha dt] / [int |g'|^p t^alpha dt] over the grid's range.

    With ``log_coordinates`` the grid axis is u = log t, so dt = t du and g'(t) = g_u / t;
    this keeps singular power profiles resolved down to t -> 0.
    """
    if g.n != 1:
        raise ValueError("hardy_quotient_1d needs a one-dimensional grid function")
    if not (p >= 1 and p > alpha + 1):
        raise ParameterError(f"need p >= 1 and p > alpha + 1, got p={p}, alpha={alpha}")
    x = g.box.axis(0)
    dg = derivative(g, (1,)).samples
    h = g.box.spacing[0]
    if log_coordinates:
        t = np.exp(x)
        num = np.sum(np.abs(g.samples) ** p * t ** (alpha - p + 1)) * h
        den = np.sum(np.abs(dg) ** p * t ** (alpha - p + 1)) * h
    else:
        if x[0] <= 0:
            raise ParameterError("linear grid must lie in (0, T]")
        num = np.sum((np.abs(g.samples) / x) ** p * x**alpha) * h
        den = np.sum(np.abs(dg) ** p * x**alpha) * h
    if den < 1e-14:
        raise DegenerateInputError("derivative integral vanishes; the quotient is undefined")
    return float(num / den)


# --- quotients on R^n -------------------------------------------------------------------------


def _collar_weight(params: SmoothnessParams, exponent: float, w: WeightSpec | None, log_divisor: bool) -> Weight:
    kappa = None
    if w is not None and w.kind != "one":
        kappa = w.kappa
    return Weight(params.split, exponent, params.eps, log_divisor, kappa)


def _quotient(lhs: float, norm: float, what: str) -> float:
    if norm == 0:
        raise DegenerateInputError(f"{what}: the norm in the denominator is zero")
    return lhs / norm


def subcritical_quotient(f: GridFunction, params: SmoothnessParams, w: WeightSpec,
                         norm_f: GridFunction | None = None) -> NormReport:
    """(int_collar |kappa(d) f|^p d^(-sp) dx)^(1/p) / ||f | F^s_pq||."""
    params.require_q_at_least_one()
    if not params.s < params.split.codim / params.p:
        raise ParameterError("subcritical quotient needs s < (n-l)/p")
    lhs = _weighted_sum(f, params.p, _collar_weight(params, params.s * params.p, w, False)) ** (1 / params.p)
    norm = triebel_norm(norm_f or f, params.s, params.p, params.q).value
    return NormReport(_quotient(lhs, norm, "subcritical quotient"), "hardy-subcritical",
                      {"s": params.s, "p": params.p, "kappa": w.label()}, f.box.h,
                      extras={"lhs": lhs, "norm": norm})


def critical_quotient(f: GridFunction, params: SmoothnessParams, w: WeightSpec,
                      norm_f: GridFunction | None = None, refine: int = 0) -> NormReport:
    """(int_collar |kappa(d) f / log d|^p d^-(n-l) dx)^(1/p) / ||f | F^((n-l)/p)_pq||.

    ``norm_f`` optionally supplies a separate (isotropic) sampling of f for the
    Littlewood-Paley norm while ``f`` carries a grid adapted to the collar.
    """
    params.require_q_at_least_one()
    cls = classify_criticality(params)
    if not (cls.critical and cls.r == 0):
        raise ParameterError(f"critical quotient needs s = (n-l)/p, got class {cls}")
    weight = _collar_weight(params, params.split.codim, w, w.log_divisor)
    lhs_report = weighted_lp_norm(f, params.p, weight, refine=refine if f.source is not None else 0)
    norm = triebel_norm(norm_f or f, params.s, params.p, params.q).value
    rep = NormReport(_quotient(lhs_report.value, norm, "critical quotient"), "hardy-critical",
                     {"s": params.s, "p": params.p, "kappa": w.label(), "log_divisor": w.log_divisor}, f.box.h,
                     divergent=lhs_report.divergent, history=lhs_report.history,
                     extras={"lhs": lhs_report.value, "norm": norm})
    return rep


def trace_vanishes_symbolically(expr: SymExpr, split: PlaneSplit, order: int) -> bool:
    """True iff D^beta f (x', 0) = 0 identically for perpendicular beta with |beta| <= order."""
    zero = {expr.symbols[i]: 0 for i in split.perpendicular_axes}
    for k in range(order + 1):
        for beta in perpendicular_multi_indices(split, k):
            e = expr.derivative(tuple(beta)).sym.subs(zero)
            if sp.simplify(e) != 0:
                return False
    return True


def _trace_audit(f: GridFunction, split: PlaneSplit, order: int, tol: float = 1e-10) -> bool:
    if order < 0:
        return True
    src = f.source
    if isinstance(src, SymExpr):
        return trace_vanishes_symbolically(src, split, order)
    # numeric fallback: sample on a node-centered copy of the box and inspect the plane rows
    if src is None:
        raise TraceConditionError("cannot audit traces of a grid function without a closed-form source")
    box = f.box.with_alignment("node")
    g = sample(src, box)
    scale = max(np.abs(g.samples).max(), 1e-300)
    for k in range(order + 1):
        for beta in perpendicular_multi_indices(split, k):
            vals = derivative(g, tuple(beta)).samples
            mask = np.ones(box.shape, dtype=bool)
            for i in split.perpendicular_axes:
                ax = box.axis(i)
                shape = [1] * box.n
                shape[i] = -1
                mask &= (np.abs(ax) < 1e-12 * max(1.0, box.h)).reshape(shape)
            if not mask.any():
                raise TraceConditionError("node grid has no samples on the plane")
            if np.abs(vals[mask]).max() > tol * scale * box.h ** -k:
                return False
    return True


def boundary_hardy_terms(f: GridFunction, params: SmoothnessParams, r: int) -> tuple[float, float]:
    """(||d^-s f||_p, sum_{|alpha|=r} ||d^(r-s) D^alpha f||_p) over the collar."""
    p, s, split = params.p, params.s, params.split
    num = _weighted_sum(f, p, Weight(split, s * p, params.eps)) ** (1 / p)
    den = 0.0
    for alpha in perpendicular_multi_indices(split, r):
        if f.source is not None and isinstance(f.source, SymExpr):
            dfa = sample(f.source.derivative(tuple(alpha)), f.box)
        else:
            dfa = derivative(f, alpha)
        den += _weighted_sum(dfa, p, Weight(split, (s - r) * p, params.eps)) ** (1 / p)
    return num, den


def boundary_hardy_quotient(f: GridFunction, params: SmoothnessParams, r: int, refine: int = 1) -> NormReport:
    """||d^-s f | L_p(collar)|| / sum_{alpha in N_l^n, |alpha| = r} ||d^(r-s) D^alpha f | L_p(collar)||.

    The trace hypothesis D^beta f(x', 0) = 0 for |beta| <= r - 1 is audited first. With
    ``refine`` > 0 the quotient is recomputed with the perpendicular spacing halved.
    """
    if r < 0:
        raise ParameterError("r must be non-negative")
    if not params.s > r - 1 + params.split.codim / params.p:
        raise ParameterError("need s > r - 1 + (n-l)/p")
    if not _trace_audit(f, params.split, r - 1):
        raise TraceConditionError(f"traces of order <= {r - 1} do not vanish; the boundary Hardy "
                                  "inequality does not apply")
    history = []
    g = f
    for level in range(refine + 1):
        if level:
            g = sample(f.source, g.box.refined(params.split.perpendicular_axes))
        num, den = boundary_hardy_terms(g, params, r)
        if den == 0:
            raise DegenerateInputError("derivative terms vanish; the quotient is undefined")
        history.append((g.box.spacing[params.split.perpendicular_axes[0]], num / den, num, den))
    value = history[-1][1] if refine == 0 else history[0][1]
    rep = NormReport(value, "hardy-boundary", {"s": params.s, "p": params.p, "r": r}, f.box.h,
                     history=[row[:2] for row in history],
                     extras={"numerator": history[0][2], "denominator": history[0][3]})
    if refine:
        rep.extras["relative_change"] = abs(history[-1][1] - history[0][1]) / abs(history[0][1])
    return rep


# --- shell lattices and f_J -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShellLattice:
    """Points of 2^-j (Z + 1/2)^n inside S_j^{l,*} = {|x'| < 1, 2^-(j+1) <= |x''| < 2^-j}."""

    level: int
    split: PlaneSplit
    points: np.ndarray

    @property
    def count(self) -> int:
        return len(self.points)

    @property
    def separation(self) -> float:
        return 2.0**-self.level

    @property
    def covering_radius(self) -> float:
        return math.sqrt(self.split.n) * 2.0**-self.level

    def in_shell(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        y, z = self.split.split(x)
        ry = np.linalg.norm(y, axis=1)
        rz = np.linalg.norm(z, axis=1)
        h = 2.0**-self.level
        return (ry < 1) & (rz < h) & (rz >= h / 2)

    def min_separation(self) -> float:
        pts = self.points
        best = math.inf
        for i in range(len(pts) - 1):
            d = np.linalg.norm(pts[i + 1:] - pts[i], axis=1).min()
            best = min(best, float(d))
        return best

    def sample_shell(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples of the shell by rejection."""
        h = 2.0**-self.level
        out = []
        need = count
        while need > 0:
            y = rng.uniform(-1, 1, (4 * need, self.split.l))
            z = rng.uniform(-h, h, (4 * need, self.split.codim))
            x = np.concatenate([y, z], axis=1)
            x = x[self.in_shell(x)]
            out.append(x[:need])
            need -= len(out[-1])
        return np.concatenate(out)

    def covering_distance(self, x) -> np.ndarray:
        """Distance from each row of x to the nearest lattice point."""
        x = np.atleast_2d(x)
        out = np.empty(len(x))
        for a in range(0, len(x), 256):
            blk = x[a:a + 256]
            d = np.linalg.norm(blk[:, None, :] - self.points[None, :, :], axis=2)
            out[a:a + 256] = d.min(axis=1)
        return out


def _half_lattice(h: float, radius: float, dim: int, keep: Callable) -> np.ndarray:
    m = int(math.ceil(radius / h)) + 1
    axis = (np.arange(-m, m) + 0.5) * h
    if dim == 0:
        return np.zeros((1, 0))
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    return grid[keep(np.linalg.norm(grid, axis=1))]


def shell_lattice(j: int, split: PlaneSplit) -> ShellLattice:
    if j < 1:
        raise ParameterError("shell lattices start at j = 1")
    if split.codim > 3:
        raise ParameterError("the half-integer shell lattice needs n - l <= 3")
    h = 2.0**-j
    ys = _half_lattice(h, 1.0, split.l, lambda r: r < 1)
    zs = _half_lattice(h, h, split.codim, lambda r: (r >= h / 2 - 1e-15) & (r < h))
    pts = np.concatenate([np.repeat(ys, len(zs), axis=0), np.tile(zs, (len(ys), 1))], axis=1)
    return ShellLattice(j, split, pts)


def psi(x: np.ndarray) -> np.ndarray:
    """Radial plateau: 1 on |x| <= 1/2, 0 on |x| >= 1; x has the coordinate axis last."""
    return plateau_profile(np.linalg.norm(x, axis=-1))


def _add_bump(out: np.ndarray, box: GridBox, center, radius: float, scale: float, weight: float):
    """out += weight * psi(scale (x - center)) on the patch of the grid where it can be nonzero."""
    slices, local = [], []
    for i, ax in enumerate(box.axes()):
        a = int(np.searchsorted(ax, center[i] - radius, side="left"))
        b = int(np.searchsorted(ax, center[i] + radius, side="right"))
        if a >= b:
            return
        slices.append(slice(a, b))
        local.append(ax[a:b] - center[i])
    mesh = np.meshgrid(*local, indexing="ij", sparse=True)
    r = np.sqrt(sum(m**2 for m in mesh)) * scale
    out[tuple(slices)] += weight * plateau_profile(r)


def fJ_bumps(J: int, split: PlaneSplit):
    """(level j, center) pairs of the bumps psi(2^(j-1)(x - x^{j,k})), j = 1..J."""
    return [(j, shell_lattice(j, split).points) for j in range(1, J + 1)]


def fJ_values(J: int, p: float, split: PlaneSplit, x) -> np.ndarray:
    """Pointwise f_J(x) for rows of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    total = np.zeros(len(x))
    for j, centers in fJ_bumps(J, split):
        for a in range(0, len(centers), 64):
            c = centers[a:a + 64]
            total += psi(2.0 ** (j - 1) * (x[:, None, :] - c[None, :, :])).sum(axis=1)
    return total * J ** (-1 / p)


def build_fJ(J: int, p: float, split: PlaneSplit, box: GridBox) -> GridFunction:
    """f_J = J^(-1/p) sum_{j=1}^J sum_k psi(2^(j-1)(x - x^{j,k})) sampled on ``box``."""
    if J < 2:
        raise ParameterError("f_J needs J >= 2")
    if box.h > 2.0 ** (-J - 2):
        raise ResolutionError(f"grid spacing {box.h} does not resolve level J={J} (need <= {2.0 ** (-J - 2)})")
    out = np.zeros(box.shape)
    for j, centers in fJ_bumps(J, split):
        scale = 2.0 ** (j - 1)
        for c in centers:
            _add_bump(out, box, c, 1.0 / scale, scale, 1.0)
    out *= J ** (-1 / p)
    src = Expr(lambda *xs: fJ_values(J, p, split, np.stack([np.ravel(v) for v in xs], axis=1)).reshape(
        np.shape(xs[0])), split.n, f"f_{J}")
    return GridFunction(box, out, f"f_J(J={J}, p={p:g})", src)


def fJ_overlap(J: int, split: PlaneSplit, x) -> dict[int, int]:
    """Max number of level-j bumps whose support contains a point of x, per level."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    out = {}
    for j, centers in fJ_bumps(J, split):
        d = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=2)
        out[j] = int((d < 2.0 ** (1 - j)).sum(axis=1).max())
    return out


def fJ_lower_bound(J: int, p: float, split: PlaneSplit, samples: int = 1000, seed: int = 0) -> float:
    """min of f_J over random points of S_J^l = {|x'| < 1, |x''| < 2^-J}."""
    rng = np.random.default_rng(seed)
    h = 2.0**-J
    pts = []
    need = samples
    while need > 0:
        y = rng.uniform(-1, 1, (4 * need, split.l))
        z = rng.uniform(-h, h, (4 * need, split.codim))
        x = np.concatenate([y, z], axis=1)
        keep = (np.linalg.norm(y, axis=1) < 1) & (np.linalg.norm(z, axis=1) < h)
        pts.append(x[keep][:need])
        need -= len(pts[-1])
    return float(fJ_values(J, p, split, np.concatenate(pts)).min())


# --- subcritical witness -------------------------------------------------------------------------


def subcritical_profile(split: PlaneSplit) -> Expr:
    """psi(x - 2 e_{l+1}): a plateau bump at distance 1 from R^l."""
    shift = np.zeros(split.n)
    shift[split.l] = 2.0

    def f(*xs):
        return plateau_profile(np.sqrt(sum((x - c) ** 2 for x, c in zip(xs, shift))))

    return Expr(f, split.n, "psi(x-2e)", (tuple(shift), 1.0))


def default_witness_box(split: PlaneSplit, h: float = 1 / 32) -> GridBox:
    return GridBox.cube(6.0, h, split.n, CELL)


def build_subcritical_witness(j: int, s, p, split: PlaneSplit, base_box: GridBox | None = None) -> GridFunction:
    """f_j = 2^(-j(s - n/p)) psi(2^j x - 2 e_{l+1}), sampled on base_box scaled by 2^-j.

    The support is the ball of radius 2^-j around 2^(1-j) e_{l+1}, so its distance to the
    plane is exactly 2^-j.
    """
    base_box = base_box or default_witness_box(split)
    if base_box.h > 1 / 8:
        raise ResolutionError("base grid must resolve the unit bump (h <= 1/8)")
    lam = 2.0**j
    prof = subcritical_profile(split)
    c = lam ** (-(float(s) - split.n / float(p)))
    expr = Expr(lambda *xs: c * prof(*[lam * x for x in xs]), split.n, f"f_{j}", ((0.0,) * split.l + (2 / lam,) + (0.0,) * (split.codim - 1), 1 / lam))
    return sample(expr, base_box.scaled(lam))


def weighted_witness_integral(f: GridFunction, params: SmoothnessParams) -> float:
    """int |f|^p d^(-sp) over the collar."""
    return _weighted_sum(f, params.p, Weight(params.split, params.s * params.p, params.eps))
