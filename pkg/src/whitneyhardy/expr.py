"""Closed-form function descriptors that can be sampled on any grid."""

from __future__ import annotations

from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy as sp


class Expr:
    """A vectorized function R^n -> R given as ``func(*coords)``.

    ``support`` is an optional (center, radius) pair such that the function vanishes
    (to working precision) outside the ball; it lets cube loops skip empty pieces.
    """

    def __init__(self, func: Callable, n: int, name: str, support=None):
        self.func = func
        self.n = n
        self.name = name
        self.support = support

    def __call__(self, *coords):
        if len(coords) != self.n:
            raise ValueError(f"{self.name} takes {self.n} coordinates, got {len(coords)}")
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        out = np.asarray(self.func(*coords), dtype=float)
        if out.shape != coords[0].shape:
            out = np.broadcast_to(out, coords[0].shape).copy()
        return out

    def derivative(self, alpha: Sequence[int]) -> "Expr":
        raise NotImplementedError(f"{self.name} has no closed-form derivatives")

    def dilate(self, lam: float) -> "Expr":
        """x -> f(lam * x)."""
        support = None
        if self.support is not None:
            c, r = self.support
            support = (tuple(ci / lam for ci in c), r / lam)
        return Expr(lambda *x: self.func(*[lam * xi for xi in x]), self.n, f"{self.name}({lam:g}x)", support)

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


def coordinate_symbols(n: int):
    return sp.symbols(f"x0:{n}", real=True)


class SymExpr(Expr):
    """Expression backed by sympy, so that every derivative is exact."""

    def __init__(self, expr, n: int, name: str, support=None):
        self.sym = sp.sympify(expr)
        self.symbols = coordinate_symbols(n)
        super().__init__(None, n, name, support)

    @cached_property
    def _lambda(self):
        return sp.lambdify(self.symbols, self.sym, modules="numpy")

    def __call__(self, *coords):
        if len(coords) != self.n:
            raise ValueError(f"{self.name} takes {self.n} coordinates, got {len(coords)}")
        coords = np.broadcast_arrays(*[np.asarray(c, dtype=float) for c in coords])
        with np.errstate(all="ignore"):
            out = np.asarray(self._lambda(*coords), dtype=float)
        if out.shape != coords[0].shape:
            out = np.broadcast_to(out, coords[0].shape).copy()
        return out

    def derivative(self, alpha: Sequence[int]) -> "SymExpr":
        alpha = tuple(alpha)
        if len(alpha) != self.n:
            raise ValueError(f"multi-index {alpha} has wrong length for n={self.n}")
        cache = self.__dict__.setdefault("_derivatives", {})
        if alpha in cache:
            return cache[alpha]
        e = self.sym
        for axis, k in enumerate(alpha):
            if k:
                e = sp.diff(e, self.symbols[axis], k)
        tag = "".join(f"d{i}^{k}" for i, k in enumerate(alpha) if k)
        cache[alpha] = SymExpr(e, self.n, f"{tag} {self.name}" if tag else self.name, self.support)
        return cache[alpha]

    def dilate(self, lam) -> "SymExpr":
        e = self.sym.subs({x: lam * x for x in self.symbols}, simultaneous=True)
        support = None
        if self.support is not None:
            c, r = self.support
            support = (tuple(ci / float(lam) for ci in c), r / float(lam))
        return SymExpr(e, self.n, f"{self.name}({lam}x)", support)

    def __mul__(self, other):
        if isinstance(other, SymExpr):
            return SymExpr(self.sym * other.sym, self.n, f"{self.name}*{other.name}")
        return SymExpr(self.sym * other, self.n, f"{other}*{self.name}", self.support)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, SymExpr):
            return SymExpr(self.sym + other.sym, self.n, f"{self.name}+{other.name}")
        return NotImplemented


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, dtype=float)
    a = _g(t)
    b = _g(1.0 - t)
    return a / (a + b)


def _g(u):
    out = np.zeros_like(u, dtype=float)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def plateau_profile(r):
    """Radial profile: 1 for r <= 1/2, 0 for r >= 1, smooth in between."""
    return 1.0 - smooth_step(2.0 * np.asarray(r, dtype=float) - 1.0)
