"""Multiresolution grids anchored at an offset point eta, and the two
multiresolution functionals built on them.

Level ``k`` cuts each axis at ``eta_c + m / 2**k`` for every integer ``m``
inside (0, 1]. Intervals are left-closed and right-open except the last
one on each axis, which is closed at 1. Empty intervals are kept so that
interval indices follow the closed-form count ``2 + floor(2**k c) +
floor(2**k (1 - c))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import DiscreteMeasure, MeasureError


def depth_for(d: int) -> int:
    """ceil(log2 d) for a positive integer d, computed exactly."""
    if d < 1:
        raise ValueError("d must be a positive integer")
    return (int(d) - 1).bit_length()


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    closed: bool = False

    def __contains__(self, x: float) -> bool:
        return self.lo <= x <= self.hi if self.closed else self.lo <= x < self.hi

    @property
    def empty(self) -> bool:
        return self.hi < self.lo or (self.hi == self.lo and not self.closed)


def axis_intervals(c: float, k: int) -> list[Interval]:
    """Intervals A_1..A_L of [0, 1] at level ``k`` for axis offset ``c``."""
    scale = 2.0**k
    f = math.floor(scale * c)
    g = math.floor(scale * (1.0 - c))
    n_int = 2 + f + g
    lows = [0.0] + [c + (i - 2 - f) / scale for i in range(2, n_int)] + [c + g / scale]
    out = [Interval(lows[i], lows[i + 1]) for i in range(n_int - 1)]
    out.append(Interval(lows[-1], 1.0, closed=True))
    return out


@dataclass(frozen=True)
class GridSystem:
    """Grids Q^k for the levels in ``levels``, anchored at ``eta``."""

    eta: tuple[float, float]
    depth: int
    levels: tuple[int, ...]
    x_intervals: dict = field(repr=False)
    y_intervals: dict = field(repr=False)
    _x_lows: dict = field(repr=False, compare=False)
    _y_lows: dict = field(repr=False, compare=False)

    def n_cells(self, k: int) -> int:
        return len(self.x_intervals[k]) * len(self.y_intervals[k])

    def nonempty_cells(self, k: int) -> int:
        nx = sum(not iv.empty for iv in self.x_intervals[k])
        ny = sum(not iv.empty for iv in self.y_intervals[k])
        return nx * ny

    def index_x(self, k: int, x) -> np.ndarray:
        return np.searchsorted(self._x_lows[k], x, side="right")

    def index_y(self, k: int, y) -> np.ndarray:
        return np.searchsorted(self._y_lows[k], y, side="right")


def build_grid(eta, d: int, levels=None) -> GridSystem:
    """Grid system for levels ``1..ceil(log2 d)`` (or an explicit level list)."""
    eta = tuple(float(e) for e in eta)
    if len(eta) != 2 or not all(0.0 <= e <= 1.0 for e in eta):
        raise ValueError(f"eta must be a point of [0,1]^2, got {eta}")
    depth = depth_for(d)
    levels = tuple(range(1, depth + 1)) if levels is None else tuple(int(k) for k in levels)
    xi = {k: axis_intervals(eta[0], k) for k in levels}
    yi = {k: axis_intervals(eta[1], k) for k in levels}
    xl = {k: np.array([iv.lo for iv in xi[k]]) for k in levels}
    yl = {k: np.array([iv.lo for iv in yi[k]]) for k in levels}
    return GridSystem(eta, depth, levels, xi, yi, xl, yl)


def cell_index(g: GridSystem, k: int, point) -> tuple[int, int]:
    """1-based (i, j) with x in A_i^k and y in A'_j^k."""
    x, y = point
    return int(g.index_x(k, x)), int(g.index_y(k, y))


def cell_labels(g: GridSystem, k: int, xy: np.ndarray) -> np.ndarray:
    """Vectorized cell index for an (n, 2) array; returns (n, 2) ints."""
    xy = np.asarray(xy, dtype=float)
    return np.column_stack([g.index_x(k, xy[:, 0]), g.index_y(k, xy[:, 1])])


@dataclass(frozen=True)
class EtaGrid:
    spacing: float
    points: np.ndarray

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def per_axis(self) -> int:
        return int(round(1.0 / self.spacing)) + 1


def eta_spacing_exponent(d: int) -> int:
    return depth_for(d) + 1


def eta_grid(d: int, dim: int = 2) -> EtaGrid:
    """All points (i s, j s) of [0,1]^dim with s = 2**-(ceil(log2 d) + 1)."""
    e = eta_spacing_exponent(d)
    axis = np.arange(2**e + 1) / 2.0**e
    if dim == 1:
        pts = axis[:, None]
    else:
        gx, gy = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
    pts.setflags(write=False)
    return EtaGrid(2.0**-e, pts)


def _check2(p: DiscreteMeasure, q: DiscreteMeasure):
    if p.dim != 2 or q.dim != 2:
        raise MeasureError("multiresolution functionals need 2-d measures")


def _l1_by_labels(p: DiscreteMeasure, lp: np.ndarray, q: DiscreteMeasure, lq: np.ndarray) -> float:
    pm: dict = {}
    qm: dict = {}
    for lab, w in zip(map(tuple, lp.tolist()), p.weights):
        pm[lab] = pm.get(lab, 0.0) + w
    for lab, w in zip(map(tuple, lq.tolist()), q.weights):
        qm[lab] = qm.get(lab, 0.0) + w
    return float(sum(abs(pm.get(c, 0.0) - qm.get(c, 0.0)) for c in sorted(pm.keys() | qm.keys())))


def multires_l1(p: DiscreteMeasure, q: DiscreteMeasure, g: GridSystem, k: int) -> float:
    """Sum over the cells of Q^k of |p(cell) - q(cell)|."""
    _check2(p, q)
    return _l1_by_labels(p, cell_labels(g, k, p.support), q, cell_labels(g, k, q.support))


def weed_bach_bound(p: DiscreteMeasure, q: DiscreteMeasure, eta, d: int) -> float:
    """Explicit multiresolution upper bound on W2^2(p, q).

    ``2 * (4**-K + sum_k 4**-(k-1) * multires_l1(p, q, Q^k))`` with
    ``K = ceil(log2 d)``; the factor 2 undoes the halved ground cost under
    which the grids form a dyadic partition.
    """
    _check2(p, q)
    g = build_grid(eta, d)
    total = 4.0 ** -g.depth
    for k in g.levels:
        total += 4.0 ** -(k - 1) * multires_l1(p, q, g, k)
    return 2.0 * total


def _labels_nd(mu: DiscreteMeasure, eta, k: int) -> np.ndarray:
    cols = []
    for axis in range(mu.dim):
        lows = np.array([iv.lo for iv in axis_intervals(float(eta[axis]), k)])
        cols.append(np.searchsorted(lows, mu.support[:, axis], side="right"))
    return np.column_stack(cols)


def indyk_thaper_sum(mu: DiscreteMeasure, nu: DiscreteMeasure, phi: float, q_dim: int | None = None,
                     eta_samples: int | None = None, rng=None) -> float:
    """Average over a dyadic eta grid of sum_k 2**-k sum_C |mu(C) - nu(C)|.

    Levels run over ``k = 0..ceil(log2(1/phi))`` and eta over the grid of
    spacing ``2**-(ceil(log2(1/phi)) + 1)`` in ``[0,1]**q_dim``. With
    ``eta_samples=M`` a seeded uniform subsample of M grid points replaces
    the full enumeration (an approximation).
    """
    if not 0.0 < phi <= 1.0:
        raise ValueError("phi must lie in (0, 1]")
    q_dim = q_dim or mu.dim
    if mu.dim != q_dim or nu.dim != q_dim:
        raise MeasureError("measure dimension does not match q_dim")
    top = math.ceil(math.log2(1.0 / phi) - 1e-12)
    etas = eta_grid(2**top, dim=q_dim).points
    if eta_samples is not None and eta_samples < len(etas):
        rng = np.random.default_rng(rng)
        etas = etas[np.sort(rng.choice(len(etas), size=eta_samples, replace=False))]
    acc = 0.0
    for eta in etas:
        s = 0.0
        for k in range(top + 1):
            s += 2.0**-k * _l1_by_labels(mu, _labels_nd(mu, eta, k), nu, _labels_nd(nu, eta, k))
        acc += s
    return acc / len(etas)


def indyk_thaper_rhs(w1_value: float, phi: float, q_dim: int) -> float:
    top = math.ceil(math.log2(1.0 / phi) - 1e-12)
    return (top + 1) * 4 * q_dim * (w1_value / math.sqrt(q_dim) + 2.0 ** -(top + 1))
