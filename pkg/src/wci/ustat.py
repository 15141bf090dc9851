"""Fourth-order U-statistic estimating sum_ij (q_ij - q_i. q_.j)^2 from the
cell labels of the (X, Y) points that fall into one Z-bin.

``u_naive`` evaluates the kernel exactly as written (every 4-subset, every
ordering, every cell). ``u_fast`` evaluates the same number from count
statistics in O(sigma) time.

Derivation of the fast form. Averaging the symmetrized kernel over 4-subsets
is averaging ``sum_xy phi_ab(xy) phi_ce(xy)`` over ordered 4-tuples of
distinct indices. Writing ``phi_ab = A_a - B_a E_b`` with ``A`` the joint,
``B`` the row and ``E`` the column indicator of a cell, each product term is
a sum over distinct indices of a product of indicators, which the Moebius
inversion on set partitions turns into polynomials in the per-cell counts
``a = n_xy``, ``r = n_x.``, ``c = n_.y``:

    AA   -> (s-2)(s-3)(a^2 - a)
    ABE  -> (s-3)(a r c - a c - a r - a^2 + 2a)          (appears twice)
    BEBE -> r^2c^2 - r c^2 - r^2 c - 4 a r c + r c + 2 a^2 + 4 a c + 4 a r - 6 a

Summed over cells these only need ``sum a^2``, ``sum_x r^2``, ``sum_y c^2``
and ``sum_points r c``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

N_PERMS = 24


class UStatError(ValueError):
    pass


def phi(obs_i, obs_j, cell) -> int:
    """1(X_i = x, Y_i = y) - 1(X_i = x) 1(Y_j = y) for cell = (x, y)."""
    x, y = cell
    return int(obs_i[0] == x and obs_i[1] == y) - int(obs_i[0] == x) * int(obs_j[1] == y)


def _as_labels(cells) -> np.ndarray:
    arr = np.asarray(cells)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise UStatError("cells must be a sequence of (i, j) labels")
    return arr


def _phi_tensor(lab: np.ndarray):
    rows = np.unique(lab[:, 0])
    cols = np.unique(lab[:, 1])
    # Phi[a, b, x, y] over the data's row x column cell range
    ax = (lab[:, 0][:, None] == rows[None, :]).astype(np.int64)
    ey = (lab[:, 1][:, None] == cols[None, :]).astype(np.int64)
    joint = ax[:, :, None] * ey[:, None, :]
    return joint[:, None, :, :] - ax[:, None, :, None] * ey[None, :, None, :]


def u_naive(cells) -> float:
    """Literal U-statistic: mean over 4-subsets of the symmetrized kernel."""
    lab = _as_labels(cells)
    s = lab.shape[0]
    if s < 4:
        raise UStatError(f"need at least 4 observations, got {s}")
    phi_t = _phi_tensor(lab)
    flat = phi_t.reshape(s * s, -1)
    pair = flat @ flat.T  # pair[(a,b),(c,e)] = sum_xy phi_ab(xy) phi_ce(xy)
    total = 0
    for quad in itertools.combinations(range(s), 4):
        for p1, p2, p3, p4 in itertools.permutations(quad):
            total += pair[p1 * s + p2, p3 * s + p4]
    return total / (N_PERMS * math.comb(s, 4))


def u_from_counts(s, sum_a2, sum_r2, sum_c2, sum_rc):
    """Closed-form U from count statistics (array-friendly)."""
    s = np.asarray(s, dtype=float)
    t_aa = (s - 2) * (s - 3) * (sum_a2 - s)
    t_abe = sum_rc - sum_c2 - sum_r2 - sum_a2 + 2 * s
    t_bebe = (sum_r2 * sum_c2 - s * sum_c2 - s * sum_r2 - 4 * sum_rc + s * s
              + 2 * sum_a2 + 4 * sum_c2 + 4 * sum_r2 - 6 * s)
    num = t_aa - 2 * (s - 3) * t_abe + t_bebe
    with np.errstate(divide="ignore", invalid="ignore"):
        return num / (s * (s - 1) * (s - 2) * (s - 3))


def u_fast(cells) -> float:
    """U-statistic in O(sigma) from joint, row and column counts."""
    lab = _as_labels(cells)
    s = lab.shape[0]
    if s < 4:
        raise UStatError(f"need at least 4 observations, got {s}")
    _, joint = np.unique(lab, axis=0, return_counts=True)
    _, r_inv, r_cnt = np.unique(lab[:, 0], return_inverse=True, return_counts=True)
    _, c_inv, c_cnt = np.unique(lab[:, 1], return_inverse=True, return_counts=True)
    joint, r_cnt, c_cnt = (v.astype(float) for v in (joint, r_cnt, c_cnt))
    sum_rc = float(np.sum(r_cnt[r_inv.ravel()] * c_cnt[c_inv.ravel()]))
    return float(u_from_counts(s, joint @ joint, r_cnt @ r_cnt, c_cnt @ c_cnt, sum_rc))


def u_expectation(q) -> float:
    """sum_ij (q_ij - q_i. q_.j)^2 for a probability table q."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise UStatError("q must be a 2-d table")
    if np.any(q < 0) or abs(q.sum() - 1.0) > 1e-12:
        raise UStatError("q must be a normalized probability table")
    dev = q - np.outer(q.sum(axis=1), q.sum(axis=0))
    return float(np.sum(dev * dev))
