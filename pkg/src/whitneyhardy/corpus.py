"""Closed-form test functions on R^2 = R^1 x R^1 with known behaviour at the line z = 0.

Every entry vanishes to a known order k at the plane (k = None for functions supported
away from it), which fixes its trace pattern and the finiteness of every weighted
integral in play.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import sympy as sp

from .discretize import CELL, NODE, GridBox, GridFunction, sample
from .expr import SymExpr, coordinate_symbols
from .geometry import PlaneSplit, SmoothnessParams

HALF_WIDTH = 8.0
H_ISO = 1 / 16
COLLAR_Y = 4.0
COLLAR_HY = 1 / 16
COLLAR_HZ = 1 / 128


def sym_plateau(t):
    """1 for |t| <= 1/2, 0 for |t| >= 1, C-infinity (built from exp(-1/u))."""
    u = (t**2 - sp.Rational(1, 4)) / sp.Rational(3, 4)

    def g(v):
        return sp.Piecewise((sp.exp(-1 / v), v > 0), (0, True))

    return 1 - g(u) / (g(u) + g(1 - u))


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    sym: object
    order: int | None  # vanishing order at the plane; None = supported away from it
    description: str
    n: int = 2
    l: int = 1

    @property
    def split(self) -> PlaneSplit:
        return PlaneSplit(self.n, self.l)

    @cached_property
    def expr(self) -> SymExpr:
        return SymExpr(self.sym, self.n, self.id)

    def dilated(self, k: int) -> SymExpr:
        return self.expr.dilate(2**k) if k else self.expr

    # grids; the dilated entry f(2^k .) lives on boxes shrunk by 2^k except along the collar

    def iso_box(self, k: int = 0, alignment: str = CELL) -> GridBox:
        return GridBox.cube(HALF_WIDTH, H_ISO, self.n, alignment).scaled(2**k)

    def collar_box(self, k: int = 0, hz: float = COLLAR_HZ) -> GridBox:
        lam = 2**k
        lo = [-COLLAR_Y / lam] * self.l + [-0.5] * (self.n - self.l)
        hi = [COLLAR_Y / lam] * self.l + [0.5] * (self.n - self.l)
        sp_ = [COLLAR_HY / lam] * self.l + [hz / lam] * (self.n - self.l)
        return GridBox(tuple(lo), tuple(hi), tuple(sp_), CELL)

    def iso(self, k: int = 0) -> GridFunction:
        return sample(self.dilated(k), self.iso_box(k))

    def node(self, k: int = 0) -> GridFunction:
        return sample(self.dilated(k), self.iso_box(k, NODE))

    def collar(self, k: int = 0) -> GridFunction:
        return sample(self.dilated(k), self.collar_box(k))

    def expected_traces_vanish(self, order: int) -> bool:
        """True iff D^beta f(y, 0) = 0 for all perpendicular |beta| <= order."""
        return self.order is None or self.order > order


def _entries() -> list[CorpusEntry]:
    y, z = coordinate_symbols(2)
    G = sp.exp(-y**2 - z**2)
    P = sym_plateau(y / 2) * sym_plateau(z / 2)
    off = sym_plateau(y / sp.Rational(1, 2)) * sym_plateau((z - sp.Rational(3, 4)) / sp.Rational(1, 2))
    far = sym_plateau(y / sp.Rational(1, 2)) * sym_plateau((z - 2) / sp.Rational(1, 2))
    return [
        CorpusEntry("gaussian", G, 0, "exp(-|x|^2)"),
        CorpusEntry("z_gaussian", z * G, 1, "z exp(-|x|^2)"),
        CorpusEntry("z2_gaussian", z**2 * G, 2, "z^2 exp(-|x|^2)"),
        CorpusEntry("z3_gaussian", z**3 * G, 3, "z^3 exp(-|x|^2)"),
        CorpusEntry("bump_offplane", off, None, "plateau bump on |y|<1/2, 1/4<z<5/4"),
        CorpusEntry("bump_far", far, None, "plateau bump at distance 3/2 from the line"),
        CorpusEntry("plateau", P, 0, "psi(y/2) psi(z/2), equal to 1 near the origin"),
        CorpusEntry("z_plateau", z * P, 1, "z psi(y/2) psi(z/2)"),
        CorpusEntry("z2_plateau", z**2 * P, 2, "z^2 psi(y/2) psi(z/2)"),
        CorpusEntry("sinz_gaussian", sp.sin(z) * G, 1, "sin(z) exp(-|x|^2)"),
        CorpusEntry("z2_cosy_gaussian", z**2 * sp.cos(y) * G, 2, "z^2 cos(y) exp(-|x|^2)"),
        CorpusEntry("one_minus_cosz", (1 - sp.cos(z)) * G, 2, "(1 - cos z) exp(-|x|^2)"),
        CorpusEntry("one_plus_z", (1 + z) * G, 0, "(1 + z) exp(-|x|^2)"),
        CorpusEntry("z_plus_z2", (z + z**2) * G, 1, "(z + z^2) exp(-|x|^2)"),
    ]


CORPUS: list[CorpusEntry] = _entries()


def corpus_entry(name: str) -> CorpusEntry:
    for e in CORPUS:
        if e.id == name:
            return e
    raise KeyError(f"unknown corpus entry {name!r}; known: {', '.join(e.id for e in CORPUS)}")


def default_grid(split: PlaneSplit | None = None) -> list[SmoothnessParams]:
    """Non-critical r = -1, 0, 1 and critical r = 0, 1, 2 for p = q = 2 on R^2 minus a line."""
    split = split or PlaneSplit(2, 1)
    F = Fraction
    return [SmoothnessParams(s, 2, 2, split) for s in (F(1, 4), F(3, 4), F(7, 4), F(1, 2), F(3, 2), F(5, 2))]


def plateau_expr(n: int, radius: float = 2) -> SymExpr:
    """prod_i psi(x_i / radius): equal to 1 on a neighbourhood of the origin."""
    xs = coordinate_symbols(n)
    e = 1
    for x in xs:
        e = e * sym_plateau(x / radius)
    return SymExpr(e, n, f"plateau{n}")
