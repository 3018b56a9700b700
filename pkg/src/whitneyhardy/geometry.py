"""Ambient geometry R^n = R^l x R^(n-l), distance weights and smoothness constants."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import NamedTuple, Sequence

import numpy as np

CRITICAL_TOL = 1e-9
DEFAULT_EPS = 0.5


class ParameterError(ValueError):
    """Invalid parameter combination."""


@dataclass(frozen=True)
class PlaneSplit:
    """Split of R^n into the plane R^l (first l coordinates) and its complement."""

    n: int
    l: int

    def __post_init__(self):
        if self.n < 1 or not 0 <= self.l < self.n:
            raise ParameterError(f"need 0 <= l < n, got n={self.n}, l={self.l}")

    @property
    def codim(self) -> int:
        return self.n - self.l

    @property
    def perpendicular_axes(self) -> tuple[int, ...]:
        return tuple(range(self.l, self.n))

    def split(self, x):
        """Return (x', x'') for a point or for an array with the coordinate axis last."""
        x = np.asarray(x)
        if x.shape[-1] != self.n:
            raise ParameterError(f"point has dimension {x.shape[-1]}, expected {self.n}")
        return x[..., : self.l], x[..., self.l :]

    def distance(self, x):
        """|x''|, the distance to R^l."""
        return np.linalg.norm(self.split(x)[1], axis=-1)


@dataclass(frozen=True)
class MultiIndex:
    entries: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(int(a) for a in self.entries))
        if any(a < 0 for a in self.entries):
            raise ParameterError(f"multi-index entries must be non-negative: {self.entries}")

    @property
    def order(self) -> int:
        return sum(self.entries)

    def perpendicular(self, l: int) -> bool:
        """True iff no derivative is taken along the plane coordinates."""
        return all(a == 0 for a in self.entries[:l])

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __str__(self):
        return "(" + ",".join(map(str, self.entries)) + ")"


def perpendicular_multi_indices(split: PlaneSplit, order: int) -> list[MultiIndex]:
    """All alpha with first l entries zero and |alpha| == order, in lexicographic order."""
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for a in range(remaining, -1, -1):
            rec(prefix + (a,), remaining - a, slots - 1)

    rec((), order, split.codim)
    return [MultiIndex((0,) * split.l + t) for t in out]


def _plus(a):
    return a if a > 0 else 0 * a


def sigma_p(n: int, p) -> float | Fraction:
    return n * _plus(1 / _num(p) - 1)


def sigma_pq(n: int, p, q) -> float | Fraction:
    # uses min(p, q); q = inf reduces to sigma_p
    m = _num(p) if q == math.inf else min(_num(p), _num(q))
    return n * _plus(1 / m - 1)


def _num(v):
    """Keep exact rationals exact, everything else becomes float."""
    if isinstance(v, Rational):
        return Fraction(v)
    return float(v)


def floor_frac(s) -> tuple[int, float | Fraction]:
    """Split s = floor + frac with frac in (0, 1]; integers give (s - 1, 1)."""
    s = _num(s)
    fl = math.ceil(s) - 1
    return fl, s - fl


def conjugate(p) -> float | Fraction:
    p = _num(p)
    if p == 1:
        return math.inf
    return p / (p - 1)


@dataclass(frozen=True)
class SmoothnessParams:
    """Exponents s, p, q on a plane split, with collar width eps.

    s and p may be given as ints or Fractions, in which case criticality is decided
    exactly.
    """

    s: float | Fraction
    p: float | Fraction
    q: float | Fraction
    split: PlaneSplit
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        for name in ("s", "p", "q"):
            object.__setattr__(self, name, _num(getattr(self, name)))
        if not self.s > 0:
            raise ParameterError(f"s must be positive, got {self.s}")
        if not (1 <= self.p < math.inf):
            raise ParameterError(f"p must lie in [1, inf), got {self.p}")
        if not self.q > 0:
            raise ParameterError(f"q must be positive, got {self.q}")
        if not 0 < self.eps < 1:
            raise ParameterError(f"collar width eps must lie in (0, 1), got {self.eps}")

    @property
    def n(self) -> int:
        return self.split.n

    @property
    def l(self) -> int:
        return self.split.l

    @property
    def sigma_p(self):
        return sigma_p(self.n, self.p)

    @property
    def sigma_pq(self):
        return sigma_pq(self.n, self.p, self.q)

    @property
    def p_conj(self):
        return conjugate(self.p)

    @property
    def critical_offset(self):
        """s - (n - l)/p, exact when s and p are rationals."""
        if isinstance(self.s, Fraction) and isinstance(self.p, Fraction):
            return self.s - self.split.codim / self.p
        return float(self.s) - self.split.codim / float(self.p)

    def with_s(self, s) -> "SmoothnessParams":
        return SmoothnessParams(s, self.p, self.q, self.split, self.eps)

    def require_q_at_least_one(self):
        if self.q < 1:
            raise ParameterError(
                f"q = {self.q} < 1 is not supported: for q < 1 the witnesses and the "
                "boundary decomposition need atoms with moment conditions, and the "
                "results are only claimed under s > sigma_pq; use q >= 1"
            )

    def require_rloc_range(self):
        if not self.s > self.sigma_pq:
            raise ParameterError(
                f"refined localization norms need s > sigma_pq = {self.sigma_pq}, got s = {self.s}"
            )

    def label(self) -> str:
        return f"n={self.n},l={self.l},s={_fmt(self.s)},p={_fmt(self.p)},q={_fmt(self.q)}"


def _fmt(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    if v == math.inf:
        return "inf"
    return repr(float(v))


class Constants(NamedTuple):
    sigma_p: float | Fraction
    sigma_pq: float | Fraction
    floor_s: int
    frac_s: float | Fraction
    p_conj: float | Fraction


def smoothness_constants(params: SmoothnessParams) -> Constants:
    fl, fr = floor_frac(params.s)
    return Constants(params.sigma_p, params.sigma_pq, fl, fr, params.p_conj)


@dataclass(frozen=True)
class CriticalityClass:
    critical: bool
    r: int

    def __str__(self):
        return f"{'Critical' if self.critical else 'NonCritical'}(r={self.r})"


def classify_criticality(params: SmoothnessParams) -> CriticalityClass:
    off = params.critical_offset
    if isinstance(off, Fraction):
        if off >= 0 and off.denominator == 1:
            return CriticalityClass(True, int(off))
        return CriticalityClass(False, max(math.floor(off), -1))
    nearest = round(off)
    if abs(off - nearest) < CRITICAL_TOL:
        if nearest >= 0:
            return CriticalityClass(True, int(nearest))
        off = nearest
    # every s < (n-l)/p falls in the single r = -1 regime
    return CriticalityClass(False, max(math.floor(off), -1))


class DistanceWeights(NamedTuple):
    d: float
    delta: float
    in_collar: bool


def distance_weights(x: Sequence[float], split: PlaneSplit, eps: float = DEFAULT_EPS) -> DistanceWeights:
    d = float(split.distance(np.asarray(x, dtype=float)))
    return DistanceWeights(d, min(d, 1.0), 0 < d < eps)
