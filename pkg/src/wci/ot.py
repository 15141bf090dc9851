"""Exact Wasserstein distances between small discrete measures.

The transportation problem is solved with the primal transportation simplex
(north-west corner start, u-v potentials, cycle pivots on the basis tree).
Every solution is checked for primal feasibility, dual feasibility and
complementary slackness before it is returned.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .measures import DiscreteMeasure, MeasureError, make_measure

DEFAULT_SUPPORT_CAP = 64
MARGINAL_TOL = 1e-9
CERT_TOL = 1e-9


class OTError(RuntimeError):
    """Internal solver failure (infeasible or uncertified LP)."""


@dataclass(frozen=True)
class Coupling:
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray


@dataclass(frozen=True)
class OtResult:
    value: float
    coupling: Coupling
    order: int

    def cost(self) -> float:
        """Recompute the transport cost of the returned coupling."""
        dist = _pairwise(self.coupling.rows, self.coupling.cols)
        c = float(np.sum(self.coupling.mass * dist**self.order))
        return c if self.order == 1 else float(np.sqrt(max(c, 0.0)))


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _north_west(a: np.ndarray, b: np.ndarray):
    m, n = len(a), len(b)
    ra, rb = a.copy(), b.copy()
    flow = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        flow[i, j] = x
        basis.append((i, j))
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and ra[i] <= rb[j]):
            i += 1
        else:
            j += 1
    return flow, basis


def _potentials(cost, basis, m, n):
    # nodes 0..m-1 are rows, m..m+n-1 are columns
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if np.isnan(pot[nb]):
                if node < m:
                    pot[nb] = cost[node, nb - m] - pot[node]
                else:
                    pot[nb] = cost[nb, node - m] - pot[node]
                queue.append(nb)
    if np.isnan(pot).any():
        raise OTError("basis is not a spanning tree")
    return pot[:m], pot[m:], adj


def _tree_path(adj, start, goal):
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path[::-1]


def solve_transport(a, b, cost, max_iter: int | None = None):
    """Minimize <flow, cost> over couplings of weight vectors ``a`` and ``b``.

    Returns ``(flow, value, u, v)`` where ``u, v`` are optimal dual
    potentials. Raises :class:`OTError` if the certificate check fails.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cost = np.asarray(cost, dtype=float)
    m, n = len(a), len(b)
    scale = max(1.0, float(np.abs(cost).max()) if cost.size else 1.0)
    tol = 1e-13 * scale
    flow, basis = _north_west(a, b)
    basis_set = set(basis)
    max_iter = max_iter or 50 * (m + n) * max(m, n) + 100
    bland_after = 20 * (m + n) + 50

    for it in range(max_iter):
        u, v, adj = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        if it < bland_after:
            flat = int(np.argmin(reduced))
            if reduced.flat[flat] >= -tol:
                break
        else:
            neg = np.flatnonzero(reduced.ravel() < -tol)
            if neg.size == 0:
                break
            flat = int(neg[0])
        ei, ej = divmod(flat, n)
        # cycle: entering cell, then alternate along the tree path col ej -> row ei
        path = _tree_path(adj, m + ej, ei)
        cells = [(ei, ej)]
        for p, q in zip(path[:-1], path[1:]):
            cells.append((q, p - m) if p >= m else (p, q - m))
        minus = cells[1::2]
        theta = min(flow[c] for c in minus)
        leave = min((c for c in minus if flow[c] == theta), key=lambda c: (c[0], c[1]))
        for k, c in enumerate(cells):
            flow[c] += theta if k % 2 == 0 else -theta
        flow[leave] = 0.0
        basis_set.discard(leave)
        basis_set.add((ei, ej))
        basis = sorted(basis_set)
    else:
        raise OTError("transportation simplex did not converge")

    flow = np.clip(flow, 0.0, None)
    u, v, _ = _potentials(cost, basis, m, n)
    _certify(a, b, cost, flow, u, v)
    return flow, float(np.sum(flow * cost)), u, v


def _certify(a, b, cost, flow, u, v):
    if np.abs(flow.sum(axis=1) - a).max() > MARGINAL_TOL or np.abs(flow.sum(axis=0) - b).max() > MARGINAL_TOL:
        raise OTError("coupling marginals violated")
    reduced = cost - u[:, None] - v[None, :]
    if reduced.min() < -CERT_TOL:
        raise OTError("dual infeasible potentials")
    if np.any(np.abs(reduced[flow > 1e-12]) > CERT_TOL):
        raise OTError("complementary slackness violated")
    primal = float(np.sum(flow * cost))
    dual = float(a @ u + b @ v)
    if abs(primal - dual) > CERT_TOL:
        raise OTError(f"duality gap {primal - dual:.3e}")


def wasserstein(p: DiscreteMeasure, q: DiscreteMeasure, order: int = 1,
                support_cap: int = DEFAULT_SUPPORT_CAP) -> OtResult:
    """W1 or W2 between two discrete measures with Euclidean ground metric."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if p.dim != q.dim:
        raise MeasureError(f"dimension mismatch: {p.dim} vs {q.dim}")
    p, q = p.drop_zeros(), q.drop_zeros()
    if len(p) > support_cap or len(q) > support_cap:
        raise MeasureError(f"support sizes {len(p)}x{len(q)} exceed cap {support_cap}")
    dist = _pairwise(p.support, q.support)
    cost = dist if order == 1 else dist * dist
    flow, value, _, _ = solve_transport(p.weights, q.weights, cost)
    value = max(value, 0.0)
    if order == 2:
        value = float(np.sqrt(value))
    return OtResult(value, Coupling(p.support, q.support, flow), order)


def w1(p, q) -> float:
    return wasserstein(p, q, 1).value


def w2(p, q) -> float:
    return wasserstein(p, q, 2).value


def w2_squared(p, q) -> float:
    return wasserstein(p, q, 2).value ** 2


def wasserstein_1d(p: DiscreteMeasure, q: DiscreteMeasure, order: int = 1) -> float:
    """Closed-form Wp on the line via the monotone (quantile) coupling."""
    if p.dim != 1 or q.dim != 1:
        raise MeasureError("wasserstein_1d needs one-dimensional measures")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    ip, iq = np.argsort(p.support[:, 0], kind="stable"), np.argsort(q.support[:, 0], kind="stable")
    xp, wp = p.support[ip, 0], p.weights[ip]
    xq, wq = q.support[iq, 0], q.weights[iq]
    cp, cq = np.cumsum(wp), np.cumsum(wq)
    cp[-1] = cq[-1] = 1.0
    levels = np.union1d(cp, cq)
    lo = np.concatenate([[0.0], levels[:-1]])
    mid = 0.5 * (lo + levels)
    qp = xp[np.minimum(np.searchsorted(cp, mid), len(xp) - 1)]
    qq = xq[np.minimum(np.searchsorted(cq, mid), len(xq) - 1)]
    total = float(np.sum((levels - lo) * np.abs(qp - qq) ** order))
    return total if order == 1 else float(np.sqrt(total))


def product_measure(px: DiscreteMeasure, py: DiscreteMeasure) -> DiscreteMeasure:
    """Independent coupling of two one-dimensional measures."""
    if px.dim != 1 or py.dim != 1:
        raise MeasureError("product_measure needs one-dimensional factors")
    xs = np.repeat(px.support[:, 0], len(py))
    ys = np.tile(py.support[:, 0], len(px))
    w = np.outer(px.weights, py.weights).ravel()
    return make_measure(np.column_stack([xs, ys]), w)


def marginal(mu: DiscreteMeasure, axis: int) -> DiscreteMeasure:
    return make_measure(mu.support[:, [axis]], mu.weights)
