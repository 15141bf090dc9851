"""The multiresolution Wasserstein conditional independence test.

Pipeline: draw N ~ Poisson(n/2) (accept if N > n), keep the first N rows,
split them into d equal-width Z-bins, and compute

    T = E_eta sum_k 4**-k sum_m U(D_m^k) 1(sigma_m >= 4) sigma_m

over levels k = 1..ceil(log2 d). Reject when T >= zeta sqrt(d) log2(d)^2.

Two engines compute T. ``"reference"`` builds the grid for every eta and
evaluates each bin's U-statistic directly. ``"fast"`` uses the fact that the
level-k partition only depends on eta modulo 2**-k, so only
``2**(K+1-k)`` distinct partitions per axis need evaluating. It works on
exact integer positions in the finest eta lattice and produces the same
value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .measures import Dataset
from .multires import build_grid, cell_labels, depth_for, eta_grid, eta_spacing_exponent
from .ustat import u_fast, u_from_counts

log = logging.getLogger(__name__)

DEFAULT_ZETA = 2.0
MIN_N = 6
_CHUNK_ELEMS = 1 << 22


class ConfigError(ValueError):
    pass


def default_d(n: int) -> int:
    """ceil(n**(2/5)) in exact integer arithmetic."""
    if n < 1:
        raise ConfigError("n must be positive")
    d = max(1, int(round(n**0.4)) - 1)
    while d**5 < n * n:
        d += 1
    while d > 1 and (d - 1) ** 5 >= n * n:
        d -= 1
    return d


def threshold(d: int, zeta: float) -> float:
    return zeta * math.sqrt(d) * math.log2(d) ** 2


@dataclass(frozen=True)
class TestConfig:
    __test__ = False  # not a pytest class

    n: int
    d: int | None = None
    zeta: float = DEFAULT_ZETA
    eta_subsample: int | None = None
    seed: int | None = None
    poissonize: bool = True

    def __post_init__(self):
        if self.n < MIN_N:
            raise ConfigError(f"n must be at least {MIN_N} (so that d >= 2)")
        if self.d is not None and self.d < 2:
            raise ConfigError("d must be at least 2")
        if not self.zeta > 0:
            raise ConfigError("zeta must be positive")
        if self.eta_subsample is not None and self.eta_subsample < 1:
            raise ConfigError("eta subsample size must be at least 1")

    @property
    def bins(self) -> int:
        return self.d if self.d is not None else default_d(self.n)

    @property
    def tau(self) -> float:
        return threshold(self.bins, self.zeta)


@dataclass
class BinnedDataset:
    bins: list
    counts: np.ndarray
    bin_index: np.ndarray
    d: int

    def edges(self, m: int) -> tuple[float, float]:
        """Edges of bin ``m`` (1-based); the last bin is closed at 1."""
        return (m - 1) / self.d, m / self.d


@dataclass
class TestReport:
    __test__ = False

    n: int
    N: int
    d: int
    zeta: float
    tau: float
    T: float
    reject: bool
    accepted_by_overflow: bool
    eta_count: int
    eta_approximate: bool
    sigma: list = field(default_factory=list)
    per_level_per_bin: list = field(default_factory=list)
    poissonized: bool = True
    engine: str = "fast"

    def to_dict(self) -> dict:
        return asdict(self)


def poissonize(n: int, rng) -> int:
    """Draw the working sample size N ~ Poisson(n / 2)."""
    if n < 1:
        raise ConfigError("n must be positive")
    return int(np.random.default_rng(rng).poisson(n / 2.0))


def z_bins(z: np.ndarray, d: int) -> np.ndarray:
    """0-based bin of each z for the bins [(m-1)/d, m/d), last closed at 1."""
    z = np.asarray(z, dtype=float)
    prod = z * d
    b = np.floor(prod).astype(np.int64)
    near = np.flatnonzero(np.abs(prod - np.rint(prod)) < 1e-9)
    for i in near:
        b[i] = math.floor(Fraction(float(z[i])) * d)
    return np.minimum(b, d - 1)


def bin_by_z(data: Dataset, d: int) -> BinnedDataset:
    if d < 1:
        raise ConfigError("d must be positive")
    idx = z_bins(data.z, d)
    counts = np.bincount(idx, minlength=d)
    xy = data.xy()
    bins = [xy[idx == m] for m in range(d)]
    return BinnedDataset(bins, counts, idx, d)


def _eta_indices(d: int, subsample: int | None, rng):
    """Integer eta lattice coordinates (i1, i2) and whether they are a subsample."""
    per_axis = 2 ** eta_spacing_exponent(d) + 1
    total = per_axis * per_axis
    if subsample is None or subsample >= total:
        flat = np.arange(total)
        approx = False
    else:
        flat = np.sort(np.random.default_rng(rng).choice(total, size=subsample, replace=False))
        approx = True
    return flat // per_axis, flat % per_axis, approx


def _fine_positions(v: np.ndarray, e: int) -> np.ndarray:
    return np.floor(np.asarray(v, dtype=float) * 2.0**e).astype(np.int64)


def _contributions_fast(x, y, bins, d, i1, i2):
    depth = depth_for(d)
    e = depth + 1
    xf, yf = _fine_positions(x, e), _fine_positions(y, e)
    sigma = np.bincount(bins, minlength=d).astype(float)
    active = sigma >= 4
    table = np.zeros((depth, d))
    n_pts = len(bins)
    if n_pts == 0 or not active.any():
        return table, sigma
    for k in range(1, depth + 1):
        period = 2 ** (e - k)
        ncls = 2**k + 2
        pair_key = (i1 % period) * period + (i2 % period)
        uniq, inv = np.unique(pair_key, return_inverse=True)
        w = np.bincount(inv.ravel()).astype(float)
        rx, ry = uniq // period, uniq % period
        res_x, ia = np.unique(rx, return_inverse=True)
        res_y, ib = np.unique(ry, return_inverse=True)
        ia, ib = ia.ravel(), ib.ravel()

        def axis_stats(fine, residues):
            lab = (fine[None, :] - residues[:, None]) // period + 1
            grp = np.arange(len(residues))[:, None] * d + bins[None, :]
            key = grp * ncls + lab
            cnt = np.bincount(key.ravel(), minlength=len(residues) * d * ncls)
            per_point = cnt[key].astype(float)
            sq = np.bincount(grp.ravel(), weights=per_point.ravel(), minlength=len(residues) * d)
            return lab, per_point, sq.reshape(len(residues), d)

        lab_x, cnt_x, r2 = axis_stats(xf, res_x)
        lab_y, cnt_y, c2 = axis_stats(yf, res_y)

        acc = np.zeros(d)
        step = max(1, _CHUNK_ELEMS // max(n_pts, d * ncls * ncls))
        for lo in range(0, len(uniq), step):
            sl = slice(lo, lo + step)
            a_idx, b_idx = ia[sl], ib[sl]
            n_e = len(a_idx)
            grp = np.arange(n_e)[:, None] * d + bins[None, :]
            jkey = (grp * ncls + lab_x[a_idx]) * ncls + lab_y[b_idx]
            jcnt = np.bincount(jkey.ravel(), minlength=n_e * d * ncls * ncls).astype(float)
            a2 = (jcnt * jcnt).reshape(n_e, d, ncls * ncls).sum(axis=2)
            rc = np.bincount(grp.ravel(), weights=(cnt_x[a_idx] * cnt_y[b_idx]).ravel(),
                             minlength=n_e * d).reshape(n_e, d)
            u = u_from_counts(sigma[None, :], a2, r2[a_idx], c2[b_idx], rc)
            u = np.where(active[None, :], u, 0.0)
            acc += w[sl] @ u
        table[k - 1] = 4.0**-k * sigma * (acc / w.sum()) * active
    return table, sigma


def _contributions_reference(x, y, bins, d, i1, i2):
    depth = depth_for(d)
    spacing = 2.0 ** -eta_spacing_exponent(d)
    sigma = np.bincount(bins, minlength=d).astype(float)
    table = np.zeros((depth, d))
    xy = np.column_stack([x, y])
    members = [np.flatnonzero(bins == m) for m in range(d)]
    for a, b in zip(i1, i2):
        g = build_grid((a * spacing, b * spacing), d)
        for k in g.levels:
            for m in range(d):
                if sigma[m] >= 4:
                    labels = cell_labels(g, k, xy[members[m]])
                    table[k - 1, m] += 4.0**-k * sigma[m] * u_fast(labels)
    return table / len(i1), sigma


def statistic_T(data: Dataset, cfg: TestConfig, rng=None, engine: str = "fast") -> TestReport:
    """Compute T on all rows of ``data`` (no Poisson draw, no truncation)."""
    d = cfg.bins
    bins = z_bins(data.z, d)
    i1, i2, approx = _eta_indices(d, cfg.eta_subsample, rng)
    if engine == "fast":
        table, sigma = _contributions_fast(data.x, data.y, bins, d, i1, i2)
    elif engine == "reference":
        table, sigma = _contributions_reference(data.x, data.y, bins, d, i1, i2)
    else:
        raise ConfigError(f"unknown engine {engine!r}")
    t_value = float(math.fsum(table.ravel()))
    tau = threshold(d, cfg.zeta)
    return TestReport(
        n=cfg.n, N=len(data), d=d, zeta=cfg.zeta, tau=tau, T=t_value,
        reject=bool(t_value >= tau), accepted_by_overflow=False,
        eta_count=len(i1), eta_approximate=approx,
        sigma=[int(s) for s in sigma], per_level_per_bin=table.tolist(),
        poissonized=cfg.poissonize, engine=engine,
    )


def run_test(data: Dataset, cfg: TestConfig, rng=None, engine: str = "fast") -> TestReport:
    """Full test: Poisson draw, truncation to the first N rows, T, decision."""
    rng = np.random.default_rng(cfg.seed if rng is None else rng)
    if len(data) < cfg.n:
        raise ConfigError(f"need at least n={cfg.n} samples, got {len(data)}")
    d = cfg.bins
    n_used = poissonize(cfg.n, rng) if cfg.poissonize else cfg.n
    if n_used > cfg.n:
        depth = depth_for(d)
        total = eta_grid(d).count
        approx = cfg.eta_subsample is not None and cfg.eta_subsample < total
        return TestReport(
            n=cfg.n, N=n_used, d=d, zeta=cfg.zeta, tau=threshold(d, cfg.zeta), T=0.0,
            reject=False, accepted_by_overflow=True,
            eta_count=cfg.eta_subsample if approx else total,
            eta_approximate=approx, sigma=[0] * d,
            per_level_per_bin=np.zeros((depth, d)).tolist(), poissonized=cfg.poissonize, engine=engine,
        )
    report = statistic_T(data.head(n_used), cfg, rng, engine=engine)
    report.reject = bool(report.T >= report.tau and n_used <= cfg.n)
    return report


def normalized_T(report: TestReport) -> float:
    """T / (sqrt(d) log2(d)^2); overflow draws count as 0."""
    if report.accepted_by_overflow:
        return 0.0
    return report.T / threshold(report.d, 1.0)


def calibrate_zeta(null_model, n: int, reps: int, alpha: float, seed: int = 0, *,
                   d: int | None = None, eta_subsample: int | None = None, poissonize: bool = True,
                   zeta_min: float = 1e-3, return_draws: bool = False):
    """Threshold constant whose null rejection rate is about ``alpha``.

    Returns the upper empirical (1 - alpha)-quantile of T / (sqrt(d) log2(d)^2)
    over ``reps`` simulated null datasets, floored at ``zeta_min``.
    """
    from .seeding import derive_rng, key_of

    if reps < 100:
        raise ConfigError("calibration needs at least 100 replications")
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")
    cfg = TestConfig(n=n, d=d, eta_subsample=eta_subsample, poissonize=poissonize)
    mkey = key_of("calibrate:" + null_model.key)
    draws = np.empty(reps)
    for r in range(reps):
        rng = derive_rng(seed, mkey, n, r)
        data = null_model.sample(rng, n)
        draws[r] = normalized_T(run_test(data, cfg, rng))
    if np.all(draws <= 0.0):
        zeta = zeta_min
    else:
        zeta = max(float(np.quantile(draws, 1.0 - alpha, method="higher")), zeta_min)
    return (zeta, draws) if return_draws else zeta
