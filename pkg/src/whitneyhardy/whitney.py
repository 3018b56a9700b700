"""Whitney decompositions of R^n minus R^l and the adapted smooth partition of unity.

Cubes are standard dyadic cubes Q^0 = 2^-j (k + [0,1]^n); Q^1 is the concentric
cube of twice the side. A cube is accepted when

    2 diam(Q^0) <= dist(Q^0, plane) <= 8 diam(Q^0),

which in units of 2^-j reads 4n <= T <= 64n with the integer T = sum_i t_i^2 over the
perpendicular axes, t_i = k_i for k_i >= 0 and -k_i - 1 otherwise. All selection and
verification is therefore integer arithmetic.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .geometry import ParameterError, PlaneSplit


class CoverageError(ValueError):
    """The decomposition leaves holes away from the truncation collar."""


@dataclass(frozen=True)
class DyadicCube:
    level: int
    index: tuple[int, ...]

    @property
    def side(self) -> float:
        return 2.0**-self.level

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.index, dtype=float) + 0.5) * self.side

    def inner(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.asarray(self.index, dtype=float) * self.side
        return lo, lo + self.side

    def outer(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.inner()
        return lo - self.side / 2, hi + self.side / 2


# --- boundary models -----------------------------------------------------------------


class _PlaneBoundary:
    """Gamma = R^l; only the perpendicular axes contribute to the distance."""

    kind = "plane"

    def __init__(self, split: PlaneSplit):
        self.split = split
        self.axes = list(split.perpendicular_axes)

    def t(self, level: int, k: np.ndarray) -> np.ndarray:
        kp = k[:, self.axes]
        return np.where(kp >= 0, kp, -kp - 1)

    def to_dict(self):
        return {"kind": self.kind, "n": self.split.n, "l": self.split.l}


class _IntervalBoundary:
    """Gamma = {0, 1} for the one-dimensional domain (0, 1)."""

    kind = "interval"

    def __init__(self):
        self.split = PlaneSplit(1, 0)
        self.axes = [0]

    def t(self, level: int, k: np.ndarray) -> np.ndarray:
        return np.minimum(k, 2**level - 1 - k)

    def to_dict(self):
        return {"kind": self.kind}


# --- decomposition --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WhitneyDecomposition:
    """Accepted cubes (levels 0..j_max), the uncovered collar cubes at j_max, and ghost
    cubes at levels j_max+1.. used only to normalize the partition of unity."""

    boundary: object
    bbox: tuple[tuple[int, ...], tuple[int, ...]]
    j_max: int
    levels: np.ndarray
    indices: np.ndarray
    uncovered: np.ndarray
    ghost_levels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    ghost_indices: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))

    @property
    def split(self) -> PlaneSplit:
        return self.boundary.split

    @property
    def n(self) -> int:
        return self.split.n

    def __len__(self):
        return len(self.levels)

    @cached_property
    def cubes(self) -> list[DyadicCube]:
        return [DyadicCube(int(j), tuple(int(v) for v in k)) for j, k in zip(self.levels, self.indices)]

    @property
    def counts(self) -> dict[int, int]:
        """M_j: number of cubes per level."""
        vals, cnt = np.unique(self.levels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, cnt)}

    def t_values(self, levels=None, indices=None) -> np.ndarray:
        levels = self.levels if levels is None else levels
        indices = self.indices if indices is None else indices
        out = np.zeros((len(levels), len(self.boundary.axes)), dtype=np.int64)
        for j in np.unique(levels):
            sel = levels == j
            out[sel] = self.boundary.t(int(j), indices[sel])
        return out

    def distance_to_boundary(self) -> np.ndarray:
        """Exact dist(Q^0, Gamma) per cube."""
        t = self.t_values()
        return np.sqrt((t**2).sum(axis=1)) * 2.0**-self.levels.astype(float)

    def outer_distance_ratio(self, levels=None, indices=None) -> np.ndarray:
        """dist(Q^1, Gamma) / 2^-j, computed from the cube indices."""
        t = self.t_values(levels, indices).astype(float)
        u = np.maximum(t - 0.5, 0.0)
        return np.sqrt((u**2).sum(axis=1))

    @property
    def collar_width(self) -> float:
        """Width of the strip around Gamma that the uncovered cubes may occupy."""
        return (2 * math.sqrt(self.n) + math.sqrt(len(self.boundary.axes))) * 2.0**-self.j_max

    def replaced(self, i: int, cube: DyadicCube) -> "WhitneyDecomposition":
        """Copy with cube ``i`` swapped for ``cube`` (used for negative controls)."""
        levels = self.levels.copy()
        indices = self.indices.copy()
        levels[i] = cube.level
        indices[i] = cube.index
        return WhitneyDecomposition(self.boundary, self.bbox, self.j_max, levels, indices, self.uncovered,
                                    self.ghost_levels, self.ghost_indices)

    # exports

    def to_rows(self) -> list[dict]:
        d = self.distance_to_boundary()
        rows = []
        for j, k, dist in zip(self.levels, self.indices, d):
            row = {"level": int(j)}
            row.update({f"m_{i + 1}": int(v) for i, v in enumerate(k)})
            row["side"] = 2.0 ** -int(j)
            row["dist_to_plane"] = float(dist)
            rows.append(row)
        return rows

    def to_csv(self, path) -> None:
        rows = self.to_rows()
        cols = ["level"] + [f"m_{i + 1}" for i in range(self.n)] + ["side", "dist_to_plane"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})

    def to_json(self) -> str:
        return json.dumps({
            "boundary": self.boundary.to_dict(),
            "bbox": [list(self.bbox[0]), list(self.bbox[1])],
            "j_max": self.j_max,
            "counts": {str(k): v for k, v in self.counts.items()},
            "cubes": [[int(j)] + [int(v) for v in k] for j, k in zip(self.levels, self.indices)],
            "uncovered": [[self.j_max] + [int(v) for v in k] for k in self.uncovered],
        })

    def to_svg(self, size: int = 512) -> str:
        if self.n != 2:
            raise ValueError("SVG export is only available for n = 2")
        lo = np.asarray(self.bbox[0], float)
        hi = np.asarray(self.bbox[1], float)
        scale = size / float(max(hi - lo))
        w, h = (hi - lo) * scale
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:g}" height="{h:g}" '
                 f'viewBox="0 0 {w:g} {h:g}">']

        def rect(j, k, style):
            side = 2.0**-j
            x = (k[0] * side - lo[0]) * scale
            y = (hi[1] - (k[1] + 1) * side) * scale
            return f'<rect x="{x:.4f}" y="{y:.4f}" width="{side * scale:.4f}" height="{side * scale:.4f}" {style}/>'

        for j, k in zip(self.levels, self.indices):
            parts.append(rect(j, k, 'fill="none" stroke="black" stroke-width="0.5"'))
        for k in self.uncovered:
            parts.append(rect(self.j_max, k, 'fill="#d33" stroke="none"'))
        parts.append("</svg>")
        return "\n".join(parts) + "\n"


def _children(k: np.ndarray) -> np.ndarray:
    n = k.shape[1]
    offs = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    return (2 * k[:, None, :] + offs[None, :, :]).reshape(-1, n)


def _refine(boundary, start: np.ndarray, j_max: int, level0: int = 0):
    """Top-down selection; returns accepted (levels, indices) and the too-close leftovers."""
    n = start.shape[1]
    lo_T, hi_T = 4 * n, 64 * n
    acc_l, acc_k = [], []
    current = start
    j = level0
    while True:
        T = (boundary.t(j, current) ** 2).sum(axis=1)
        close = T < lo_T
        ok = ~close
        if j > 0 and np.any(T[ok] > hi_T):
            # cannot happen for children of too-close parents
            raise AssertionError("Whitney selection produced a cube that is too far")
        acc_l.append(np.full(int(ok.sum()), j, dtype=int))
        acc_k.append(current[ok])
        left = current[close]
        if j == j_max or len(left) == 0:
            break
        current = _children(left)
        j += 1
    levels = np.concatenate(acc_l) if acc_l else np.zeros(0, int)
    indices = np.concatenate(acc_k) if acc_k else np.zeros((0, n), np.int64)
    return levels, indices, left if j == j_max else np.zeros((0, n), np.int64)


def _build(boundary, bbox, j_max, ghost_levels, start):
    if j_max < 1:
        raise ParameterError("j_max must be at least 1")
    levels, indices, uncovered = _refine(boundary, start, j_max)
    gl, gk, _ = (np.zeros(0, int), np.zeros((0, start.shape[1]), np.int64), None)
    if ghost_levels and len(uncovered):
        gl, gk, _ = _refine(boundary, _children(uncovered), j_max + ghost_levels, level0=j_max + 1)
    return WhitneyDecomposition(boundary, bbox, j_max, levels, indices, uncovered, gl, gk)


def whitney_decompose(split: PlaneSplit, bbox, j_max: int, ghost_levels: int = 2) -> WhitneyDecomposition:
    """Whitney cubes of (R^n minus R^l) within an integer-cornered box, down to level j_max."""
    lower, upper = (tuple(int(round(v)) for v in c) for c in bbox)
    if any(abs(a - b) > 1e-12 for a, b in zip(list(bbox[0]) + list(bbox[1]), lower + upper)):
        raise ParameterError("bbox corners must be integers (level-0 dyadic cubes tile the box)")
    if len(lower) != split.n or len(upper) != split.n:
        raise ParameterError("bbox dimension does not match the split")
    if any(hi <= lo for lo, hi in zip(lower, upper)):
        raise ParameterError("bbox meets Omega only in a null set")
    start = np.array(list(itertools.product(*[range(lo, hi) for lo, hi in zip(lower, upper)])), dtype=np.int64)
    return _build(_PlaneBoundary(split), (lower, upper), j_max, ghost_levels, start)


def whitney_interval(j_max: int, ghost_levels: int = 2) -> WhitneyDecomposition:
    """Whitney intervals of (0, 1), accumulating at both endpoints."""
    return _build(_IntervalBoundary(), ((0,), (1,)), j_max, ghost_levels, np.zeros((1, 1), dtype=np.int64))


# --- verification ---------------------------------------------------------------------


@dataclass
class WhitneyDiagnostics:
    disjoint: bool
    covering_defect: float
    collar_area: float
    hole_outside_collar: bool
    distance_ratio_range: tuple[float, float]
    level0_min_ratio: float
    max_adjacent_level_gap: int
    counts: dict
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _label_array(dec: WhitneyDecomposition):
    """Paint cubes on the level-j_max lattice of the bbox; returns (labels, overlap)."""
    J = dec.j_max
    lower = np.asarray(dec.bbox[0])
    shape = tuple(int((hi - lo) * 2**J) for lo, hi in zip(*dec.bbox))
    counts = np.zeros(shape, dtype=np.int16)
    labels = np.full(shape, -1, dtype=np.int32)
    inside = True
    for i, (j, k) in enumerate(zip(dec.levels, dec.indices)):
        f = 2 ** (J - int(j))
        start = np.asarray(k) * f - lower * 2**J
        if np.any(start < 0) or np.any(start + f > np.asarray(shape)):
            inside = False
            start = np.clip(start, 0, np.asarray(shape))
        sl = tuple(slice(int(a), int(min(a + f, m))) for a, m in zip(start, shape))
        counts[sl] += 1
        labels[sl] = i
    return labels, counts, inside


def adjacency_pairs(dec: WhitneyDecomposition, labels: np.ndarray | None = None) -> np.ndarray:
    """Pairs (a, b), a < b, of cubes whose closures touch (faces, edges or corners)."""
    if labels is None:
        labels = _label_array(dec)[0]
    n = labels.ndim
    pairs = []
    for off in itertools.product((-1, 0, 1), repeat=n):
        if all(o == 0 for o in off) or off <= tuple(0 for _ in off):
            continue
        a_sl = tuple(slice(max(0, -o), labels.shape[i] - max(0, o)) for i, o in enumerate(off))
        b_sl = tuple(slice(max(0, o), labels.shape[i] - max(0, -o)) for i, o in enumerate(off))
        a, b = labels[a_sl].ravel(), labels[b_sl].ravel()
        m = (a != b) & (a >= 0) & (b >= 0)
        if m.any():
            pairs.append(np.stack([np.minimum(a[m], b[m]), np.maximum(a[m], b[m])], axis=1))
    if not pairs:
        return np.zeros((0, 2), dtype=np.int64)
    return np.unique(np.concatenate(pairs), axis=0)


def verify_whitney(dec: WhitneyDecomposition) -> WhitneyDiagnostics:
    labels, counts, inside = _label_array(dec)
    disjoint = bool(counts.max(initial=0) <= 1) and inside
    cell = 2.0 ** (-dec.j_max * dec.n)
    defect = float((counts == 0).sum()) * cell

    # uncovered cells must lie in the collar of width collar_width around Gamma
    J = dec.j_max
    lower = np.asarray(dec.bbox[0])
    holes = np.argwhere(counts == 0) + lower * 2**J
    hole_far = False
    if len(holes):
        t = dec.boundary.t(J, holes.astype(np.int64))
        far = np.sqrt((t.astype(float) ** 2).sum(axis=1)) * 2.0**-J
        hole_far = bool(np.any(far >= dec.collar_width))
    widths = np.asarray(dec.bbox[1]) - lower
    if dec.boundary.kind == "plane":
        par = [i for i in range(dec.n) if i not in dec.boundary.axes]
        par_vol = float(np.prod(widths[par])) if par else 1.0
        codim = len(dec.boundary.axes)
        ball = math.pi ** (codim / 2) / math.gamma(codim / 2 + 1) * dec.collar_width**codim
        collar_area = par_vol * ball
    else:
        collar_area = 2 * dec.collar_width

    ratios = dec.outer_distance_ratio()
    pos = dec.levels >= 1
    rng = (float(ratios[pos].min()), float(ratios[pos].max())) if pos.any() else (math.nan, math.nan)
    lvl0 = float(ratios[~pos].min()) if (~pos).any() else math.inf

    pairs = adjacency_pairs(dec, labels)
    gap = int(np.abs(dec.levels[pairs[:, 0]] - dec.levels[pairs[:, 1]]).max()) if len(pairs) else 0

    passed = (disjoint and not hole_far and rng[0] > 0 and lvl0 > 0 and gap <= 1
              and defect <= collar_area)
    return WhitneyDiagnostics(disjoint, defect, collar_area, hole_far, rng, lvl0, gap, dec.counts, passed)


# --- partition of unity ----------------------------------------------------------------


def bump_profile(t, order: int = 0):
    """b(t) = exp(-1/(1-t^2)) on |t| < 1 and its first two derivatives."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    tt = t[m]
    u = 1 - tt**2
    b = np.exp(-1 / u)
    if order == 0:
        out[m] = b
    elif order == 1:
        out[m] = b * (-2 * tt / u**2)
    elif order == 2:
        out[m] = b * (4 * tt**2 / u**4 - 2 / u**2 - 8 * tt**2 / u**3)
    else:
        raise ValueError("bump derivatives are implemented up to order 2")
    return out


def _key(k: np.ndarray, base: int) -> np.ndarray:
    """Injective int64 encoding of index rows (entries shifted to be non-negative)."""
    key = np.zeros(len(k), dtype=np.int64)
    for i in range(k.shape[1]):
        key = key * base + (k[:, i] + base // 2)
    return key


class PartitionOfUnity:
    """rho_Q = R_Q / S with R_Q the tensorized bump on Q^1 and S the sum of all bumps.

    S includes the ghost cubes below j_max, which makes rho_Q identical to the one of an
    untruncated decomposition for every cube of level <= j_max.
    """

    def __init__(self, dec: WhitneyDecomposition, K: int = 2):
        if not 1 <= K <= 2:
            raise ValueError("derivative formulas are provided for K in {1, 2}")
        diag = verify_whitney(dec)
        if diag.hole_outside_collar:
            raise CoverageError("decomposition has uncovered points outside the truncation collar")
        self.dec = dec
        self.K = K
        self.n = dec.n
        self._levels = np.concatenate([dec.levels, dec.ghost_levels]).astype(int)
        k = dec.ghost_indices if len(dec.ghost_levels) else np.zeros((0, dec.n), np.int64)
        self._indices = np.concatenate([dec.indices, k.reshape(-1, dec.n)]).astype(np.int64)
        self._n_real = len(dec.levels)
        self._base = int(2 ** (int(self._levels.max()) + 2) * (1 + max(abs(v) for c in dec.bbox for v in c))) * 2 + 4
        self._lookup = {}
        for j in np.unique(self._levels):
            sel = np.nonzero(self._levels == j)[0]
            keys = _key(self._indices[sel], self._base)
            order = np.argsort(keys)
            self._lookup[int(j)] = (keys[order], sel[order])

    @property
    def cubes(self):
        return self.dec.cubes

    def __len__(self):
        return self._n_real

    @cached_property
    def exact_distance(self) -> float:
        """Beyond this distance from Gamma no ghost bump reaches, so sum rho = 1 exactly."""
        if not len(self.dec.ghost_levels):
            return self.dec.collar_width
        t = self.dec.t_values(self.dec.ghost_levels, self.dec.ghost_indices).astype(float)
        far = np.sqrt(((t + 1.5) ** 2).sum(axis=1)) * 2.0**-self.dec.ghost_levels
        return float(far.max())

    def _raw(self, cube_ids: np.ndarray, x: np.ndarray, order: int):
        """R and its derivatives up to ``order`` for (cube, point) pairs."""
        lv = self._levels[cube_ids]
        h = 2.0**-lv.astype(float)
        c = (self._indices[cube_ids] + 0.5) * h[:, None]
        t = (x - c) / h[:, None]
        b = [bump_profile(t, o) / h[:, None] ** o for o in range(order + 1)]
        R = np.prod(b[0], axis=1)
        out = {(): R}
        n = self.n
        if order >= 1:
            for i in range(n):
                f = b[1][:, i].copy()
                for k in range(n):
                    if k != i:
                        f = f * b[0][:, k]
                out[(i,)] = f
        if order >= 2:
            for i in range(n):
                for j in range(i, n):
                    f = np.ones(len(cube_ids))
                    for k in range(n):
                        f = f * b[(k == i) + (k == j)][:, k]
                    out[(i, j)] = f
        return out

    def _candidates(self, x: np.ndarray):
        """Pairs (point index, cube id) with x in the open Q^1 of the cube."""
        n = self.n
        pts, ids = [], []
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=np.int64)
        for j, (keys, sel) in self._lookup.items():
            k0 = np.floor(x * 2.0**j).astype(np.int64)
            for off in offsets:
                cand = k0 + off
                key = _key(cand, self._base)
                pos = np.searchsorted(keys, key)
                pos = np.minimum(pos, len(keys) - 1)
                hit = keys[pos] == key
                if hit.any():
                    pts.append(np.nonzero(hit)[0])
                    ids.append(sel[pos[hit]])
        if not pts:
            return np.zeros(0, int), np.zeros(0, int)
        return np.concatenate(pts), np.concatenate(ids)

    def _sums(self, x: np.ndarray, order: int):
        p, ids = self._candidates(x)
        raw = self._raw(ids, x[p], order)
        sums = {}
        for key, v in raw.items():
            acc = np.zeros(len(x))
            np.add.at(acc, p, v)
            sums[key] = acc
        real = {}
        m = ids < self._n_real
        for key, v in raw.items():
            acc = np.zeros(len(x))
            np.add.at(acc, p[m], v[m])
            real[key] = acc
        return sums, real

    def total(self, x) -> np.ndarray:
        """sum over decomposition cubes of rho_Q(x)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        S, R = self._sums(x, 0)
        out = np.zeros(len(x))
        pos = S[()] > 0
        out[pos] = R[()][pos] / S[()][pos]
        return out

    def rho(self, i: int, x, alpha: Sequence[int] | None = None) -> np.ndarray:
        """D^alpha rho_i at the points x (shape (N, n)); alpha of order <= K."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        alpha = tuple(alpha) if alpha is not None else (0,) * self.n
        order = sum(alpha)
        if order > self.K:
            raise ValueError(f"derivative order {order} exceeds K = {self.K}")
        axes = tuple(i_ for i_, a in enumerate(alpha) for _ in range(a))
        ids = np.full(len(x), i, dtype=int)
        Rq = self._raw(ids, x, order)
        S, _ = self._sums(x, order)
        out = np.zeros(len(x))
        pos = S[()] > 0
        s0 = S[()][pos]
        rho = Rq[()][pos] / s0
        if order == 0:
            out[pos] = rho
            return out
        if order == 1:
            (a,) = axes
            out[pos] = (Rq[(a,)][pos] - rho * S[(a,)][pos]) / s0
            return out
        a, b = axes
        key = (min(a, b), max(a, b))
        ra = (Rq[(a,)][pos] - rho * S[(a,)][pos]) / s0
        rb = (Rq[(b,)][pos] - rho * S[(b,)][pos]) / s0
        out[pos] = (Rq[key][pos] - ra * S[(b,)][pos] - rb * S[(a,)][pos] - rho * S[key][pos]) / s0
        return out

    def representative_cubes(self, level: int) -> np.ndarray:
        """Cubes of a level sitting over the origin of the plane (one per perpendicular pattern)."""
        sel = self.dec.levels == level
        par = [i for i in range(self.n) if i not in self.dec.boundary.axes]
        if par:
            sel &= np.all(self.dec.indices[:, par] == 0, axis=1)
        return np.nonzero(sel)[0]

    def derivative_constants(self, levels: Sequence[int], samples: int = 25) -> dict:
        """sup |D^alpha rho_Q| / 2^(j|alpha|) over representative level-j cubes, per alpha and j.

        The sup is taken over a fixed relative grid inside Q^1, so self-similar
        configurations give identical numbers at every level.
        """
        n = self.n
        rel = (np.arange(samples) + 0.5) / samples * 2 - 1  # in (-1, 1), units of side(Q^0)
        grid = np.stack(np.meshgrid(*([rel] * n), indexing="ij"), axis=-1).reshape(-1, n)
        alphas = [a for o in range(self.K + 1) for a in itertools.product(range(o + 1), repeat=n) if sum(a) == o]
        out = {a: {} for a in alphas}
        for j in levels:
            h = 2.0**-j
            for a in alphas:
                sup = 0.0
                for i in self.representative_cubes(j):
                    c = (self.dec.indices[i] + 0.5) * h
                    vals = self.rho(int(i), c + grid * h, a)
                    sup = max(sup, float(np.abs(vals).max()))
                out[a][j] = sup / 2.0 ** (j * sum(a))
        return out


def partition_of_unity(dec: WhitneyDecomposition, K: int = 2) -> PartitionOfUnity:
    return PartitionOfUnity(dec, K)
