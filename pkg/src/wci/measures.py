"""Finitely supported probability measures on [0,1] and [0,1]^2, datasets of
(x, y, z) triples, and the total variation metric."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

WEIGHT_TOL = 1e-12


class MeasureError(ValueError):
    pass


class DataError(ValueError):
    """Malformed or out-of-range dataset input."""


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A probability measure with finite support in the unit cube.

    Build instances with :func:`make_measure`; the constructor trusts its
    arguments. ``support`` has shape ``(n, dim)`` and ``weights`` shape ``(n,)``.
    Both arrays are read-only.
    """

    support: np.ndarray
    weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def __len__(self) -> int:
        return self.support.shape[0]

    def as_dict(self) -> dict:
        return {tuple(float(c) for c in pt): float(w) for pt, w in zip(self.support, self.weights)}

    def mass(self, point) -> float:
        return self.as_dict().get(tuple(float(c) for c in np.atleast_1d(point)), 0.0)

    def drop_zeros(self) -> "DiscreteMeasure":
        keep = self.weights > 0
        if keep.all():
            return self
        return _frozen(self.support[keep], self.weights[keep])

    def __repr__(self) -> str:
        items = ", ".join(f"{tuple(float(c) for c in p)}: {w:.6g}" for p, w in zip(self.support, self.weights))
        return f"DiscreteMeasure(dim={self.dim}, {{{items}}})"


def _frozen(support: np.ndarray, weights: np.ndarray) -> DiscreteMeasure:
    support = np.ascontiguousarray(support, dtype=float)
    weights = np.ascontiguousarray(weights, dtype=float)
    support.setflags(write=False)
    weights.setflags(write=False)
    return DiscreteMeasure(support, weights)


def make_measure(points: Sequence, weights: Sequence[float]) -> DiscreteMeasure:
    """Normalized, deduplicated measure from support points and weights.

    Duplicate points (exact coordinate equality) are merged by adding their
    weights; first-occurrence order is kept. Weights down to ``-1e-12`` are
    clamped to zero.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    w = np.asarray(weights, dtype=float).ravel()
    if pts.shape[0] == 0:
        raise MeasureError("empty support")
    if pts.shape[0] != w.shape[0]:
        raise MeasureError(f"{pts.shape[0]} points but {w.shape[0]} weights")
    if pts.shape[1] not in (1, 2):
        raise MeasureError(f"dimension must be 1 or 2, got {pts.shape[1]}")
    if not np.all(np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts > 1.0):
        raise MeasureError("support points must lie in the unit cube")
    if not np.all(np.isfinite(w)) or np.any(w < -WEIGHT_TOL):
        raise MeasureError("weights must be nonnegative")
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        raise MeasureError("total weight must be positive")

    index: dict[tuple, int] = {}
    merged_pts: list[tuple] = []
    merged_w: list[float] = []
    for pt, wt in zip(map(tuple, pts.tolist()), w.tolist()):
        slot = index.get(pt)
        if slot is None:
            index[pt] = len(merged_pts)
            merged_pts.append(pt)
            merged_w.append(wt)
        else:
            merged_w[slot] += wt
    mw = np.asarray(merged_w)
    return _frozen(np.asarray(merged_pts, dtype=float), mw / mw.sum())


def point_mass(point) -> DiscreteMeasure:
    return make_measure([np.atleast_1d(point)], [1.0])


def empirical(points: Sequence) -> DiscreteMeasure:
    """Empirical measure putting mass 1/n on each observation."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise MeasureError("empirical measure of an empty sample")
    if pts.ndim == 1:
        pts = pts[:, None]
    return make_measure(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))


def mixture(measures: Sequence[DiscreteMeasure], weights: Sequence[float] | None = None) -> DiscreteMeasure:
    """Convex combination of measures of a common dimension."""
    if not measures:
        raise MeasureError("mixture of no measures")
    if weights is None:
        weights = np.full(len(measures), 1.0 / len(measures))
    dims = {m.dim for m in measures}
    if len(dims) != 1:
        raise MeasureError("mixture components differ in dimension")
    pts = np.concatenate([m.support for m in measures])
    w = np.concatenate([m.weights * a for m, a in zip(measures, weights)])
    return make_measure(pts, w)


def cell_masses(mu: DiscreteMeasure, labels: Iterable) -> dict:
    """Sum the weights of ``mu`` by a per-support-point label."""
    out: dict = {}
    for lab, w in zip(labels, mu.weights):
        out[lab] = out.get(lab, 0.0) + float(w)
    return out


def tv_distance(p: DiscreteMeasure, q: DiscreteMeasure) -> float:
    """Total variation: half the L1 distance between the mass functions."""
    if p.dim != q.dim:
        raise MeasureError(f"dimension mismatch: {p.dim} vs {q.dim}")
    pd, qd = p.as_dict(), q.as_dict()
    total = 0.0
    for a in sorted(pd.keys() | qd.keys()):  # fixed order keeps the value exactly symmetric
        total += abs(pd.get(a, 0.0) - qd.get(a, 0.0))
    return min(1.0, 0.5 * total)


class Sample(NamedTuple):
    x: float
    y: float
    z: float


class Dataset:
    """An ordered collection of (x, y, z) observations in [0,1]^3.

    Row order is significant: the test consumes a prefix of the rows.
    """

    __slots__ = ("x", "y", "z")

    def __init__(self, x, y, z):
        x, y, z = (np.asarray(a, dtype=float).ravel() for a in (x, y, z))
        if not (x.shape == y.shape == z.shape):
            raise DataError("x, y, z columns differ in length")
        for name, col in (("x", x), ("y", y), ("z", z)):
            bad = ~(np.isfinite(col) & (col >= 0.0) & (col <= 1.0))
            if bad.any():
                i = int(np.flatnonzero(bad)[0])
                raise DataError(f"row {i + 1}: {name}={col[i]!r} is outside [0, 1]")
        for a in (x, y, z):
            a.setflags(write=False)
        self.x, self.y, self.z = x, y, z

    @classmethod
    def from_samples(cls, samples: Iterable[Sample | tuple]) -> "Dataset":
        rows = list(samples)
        if not rows:
            return cls([], [], [])
        arr = np.asarray(rows, dtype=float)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def __len__(self) -> int:
        return self.x.shape[0]

    def __getitem__(self, i: int) -> Sample:
        return Sample(float(self.x[i]), float(self.y[i]), float(self.z[i]))

    def head(self, n: int) -> "Dataset":
        return Dataset(self.x[:n], self.y[:n], self.z[:n])

    def xy(self) -> np.ndarray:
        return np.column_stack([self.x, self.y])


def read_csv(path: str | Path) -> Dataset:
    """Read a dataset from a CSV file with header ``x,y,z``.

    Errors name the offending data row (1-based, header excluded).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("empty file: expected header x,y,z") from None
        if [h.strip().lower() for h in header] != ["x", "y", "z"]:
            raise DataError(f"bad header {header!r}: expected x,y,z")
        cols: list[list[float]] = [[], [], []]
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataError(f"row {lineno}: expected 3 fields, got {len(row)}")
            for c, (name, field) in enumerate(zip("xyz", row)):
                try:
                    v = float(field)
                except ValueError:
                    raise DataError(f"row {lineno}: {name}={field!r} is not a number") from None
                if not (np.isfinite(v) and 0.0 <= v <= 1.0):
                    raise DataError(f"row {lineno}: {name}={field.strip()} is outside [0, 1]")
                cols[c].append(v)
    return Dataset(*cols)


def write_csv(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for row in zip(data.x.tolist(), data.y.tolist(), data.z.tolist()):
            w.writerow([repr(v) for v in row])
