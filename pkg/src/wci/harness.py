"""Monte Carlo experiments: empirical rejection rates and rate probes.

Every replication owns a stream derived from (master seed, model key, n,
rep), so results do not depend on the number of workers or on task order.
Workers receive model *descriptions* (name and parameters) and rebuild the
model locally, which keeps tasks picklable.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .citest import TestConfig, calibrate_zeta, default_d, normalized_T, run_test, threshold
from .genmodels import alt_four_corner, build_model, make_bump_basis, null_independent_uniform, separation_tilde_psi, theta_max
from .seeding import derive_rng, key_of

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
SCHEMA_PATH = Path(__file__).with_name("report.schema.json")
DEFAULT_RISK_REPS = 500
DEFAULT_RATE_REPS = 200
DEFAULT_CALIB_REPS = 200
DEFAULT_ALPHA = 0.05
POWER_TARGET = 0.5


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Registry name plus parameters; rebuilt inside workers."""

    name: str
    d: int | None = None
    theta: float | None = None
    nu_seed: int | None = 0

    def build(self):
        return _cached_model(self)

    def label(self) -> str:
        if self.name == "alt_four_corner":
            return f"{self.name}(d={self.d},theta={self.theta!r},nu_seed={self.nu_seed})"
        return self.name


@lru_cache(maxsize=64)
def _cached_model(spec: ModelSpec):
    return build_model(spec.name, d=spec.d, theta=spec.theta, nu_seed=spec.nu_seed)


@dataclass
class ExperimentSpec:
    models: list
    n_grid: list
    reps: int = DEFAULT_RISK_REPS
    zeta: float | None = None
    bins: int | None = None
    eta_subsample: int | None = None
    poissonize: bool = True
    seed: int = 0
    jobs: int = 1
    calib_reps: int = DEFAULT_CALIB_REPS
    alpha: float = DEFAULT_ALPHA

    def validate(self) -> "ExperimentSpec":
        if not self.models:
            raise SpecError("at least one model is required")
        if not self.n_grid:
            raise SpecError("the n-grid is empty")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise SpecError("the n-grid must be strictly increasing")
        if self.reps < 1:
            raise SpecError("reps must be at least 1")
        if self.jobs < 1:
            raise SpecError("jobs must be at least 1")
        for n in self.n_grid:
            TestConfig(n=n, d=self.bins, eta_subsample=self.eta_subsample)
        return self

    def config(self, n: int, zeta: float) -> TestConfig:
        return TestConfig(n=n, d=self.bins, zeta=zeta, eta_subsample=self.eta_subsample, poissonize=self.poissonize)

    def describe(self) -> dict:
        out = asdict(self)
        out["models"] = [m.label() for m in self.models]
        out.pop("jobs")
        return out


@dataclass
class ExperimentResult:
    command: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "command": self.command, "columns": self.columns,
                "rows": [dict(zip(self.columns, r)) for r in self.rows], **self.extra, "metadata": self.metadata}


# -- replication workers ------------------------------------------------------

def _rep_stream(master: int, label: str, n: int, rep: int):
    return derive_rng(master, key_of(label), n, rep)


def _risk_chunk(task):
    model_spec, n, reps, cfg, master = task
    model = model_spec.build()
    out = []
    for r in reps:
        rng = _rep_stream(master, model_spec.label(), n, r)
        rep = run_test(model.sample(rng, n), cfg, rng)
        out.append((r, rep.reject, rep.T, rep.N, rep.accepted_by_overflow))
    return model_spec, n, out


def _chunks(reps: int, jobs: int):
    size = max(1, math.ceil(reps / (4 * jobs)))
    return [range(a, min(a + size, reps)) for a in range(0, reps, size)]


def _run_tasks(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def calibrated_zeta(spec: ExperimentSpec, n: int) -> float:
    if spec.zeta is not None:
        return spec.zeta
    return calibrate_zeta(null_independent_uniform(), n, max(spec.calib_reps, 100), spec.alpha, seed=spec.seed,
                          d=spec.bins, eta_subsample=spec.eta_subsample, poissonize=spec.poissonize)


def _summary(stats: dict, reps: int) -> dict:
    keys = sorted(stats)
    if len(keys) != reps:
        raise RuntimeError("missing replications")
    reject = np.array([stats[k][0] for k in keys], dtype=float)
    t_vals = np.array([stats[k][1] for k in keys])
    n_vals = np.array([stats[k][2] for k in keys], dtype=float)
    rate = float(reject.mean())
    return {
        "rejections": int(reject.sum()),
        "rejection_rate": rate,
        "se": math.sqrt(rate * (1 - rate) / reps),
        "mean_T": float(t_vals.mean()),
        "var_T": float(t_vals.var(ddof=1)) if reps > 1 else 0.0,
        "mean_N": float(n_vals.mean()),
        "overflow": int(sum(stats[k][3] for k in keys)),
    }


RISK_COLUMNS = ["model", "n", "d", "zeta", "tau", "reps", "rejections", "rejection_rate", "se",
                "mean_T", "var_T", "mean_N", "overflow"]


def run_risk(spec: ExperimentSpec) -> ExperimentResult:
    """Empirical rejection rate per (model, n) with binomial standard errors."""
    spec.validate()
    start = time.perf_counter()
    zetas = {n: calibrated_zeta(spec, n) for n in spec.n_grid}
    tasks = [(m, n, chunk, spec.config(n, zetas[n]), spec.seed)
             for m in spec.models for n in spec.n_grid for chunk in _chunks(spec.reps, spec.jobs)]
    merged: dict = {}
    for model_spec, n, out in _run_tasks(_risk_chunk, tasks, spec.jobs):
        for r, rej, t_val, n_draw, over in out:
            merged.setdefault((model_spec.label(), n), {})[r] = (rej, t_val, n_draw, over)
    rows = []
    for m in spec.models:
        for n in spec.n_grid:
            cfg = spec.config(n, zetas[n])
            s = _summary(merged[(m.label(), n)], spec.reps)
            rows.append([m.label(), n, cfg.bins, zetas[n], cfg.tau, spec.reps] + [s[c] for c in RISK_COLUMNS[6:]])
    meta = _metadata(spec, time.perf_counter() - start)
    meta["zeta_source"] = "given" if spec.zeta is not None else f"calibrated on null_independent_uniform at alpha={spec.alpha}"
    return ExperimentResult("risk", RISK_COLUMNS, rows, meta)


# -- rate probe ---------------------------------------------------------------

@dataclass
class RateSpec:
    n_grid: list
    reps: int = DEFAULT_RATE_REPS
    nu_seed: int = 0
    model_d: int | None = None
    iterations: int = 10
    theta_frac: float = 0.999
    eta_subsample: int | None = 64
    poissonize: bool = True
    seed: int = 0
    jobs: int = 1
    calib_reps: int = DEFAULT_CALIB_REPS
    alpha: float = DEFAULT_ALPHA
    psi_panels: int = 512

    def validate(self) -> "RateSpec":
        ExperimentSpec([ModelSpec("alt_four_corner")], self.n_grid, self.reps, jobs=self.jobs).validate()
        if self.iterations < 1:
            raise SpecError("iterations must be at least 1")
        if not 0 < self.theta_frac <= 1:
            raise SpecError("theta_frac must lie in (0, 1]")
        return self

    def bump_count(self, n: int) -> int:
        """Bumps per unit z; by default half the test's bin count, so that
        each bump spans two bins and binning does not average it away."""
        return self.model_d if self.model_d is not None else max(1, default_d(n) // 2)


def _power_chunk(task):
    d_model, theta, nu_seed, n, reps, cfg, master = task
    model = alt_four_corner(make_bump_basis(d_model, theta, nu_seed=nu_seed))
    label = f"rate:alt_four_corner(d={d_model},nu_seed={nu_seed})"
    out = []
    for r in reps:
        # common random numbers: the stream ignores theta
        rng = _rep_stream(master, label, n, r)
        out.append((r, run_test(model.sample(rng, n), cfg, rng).reject))
    return out


def power_at(theta: float, d_model: int, n: int, cfg: TestConfig, spec: RateSpec) -> float:
    tasks = [(d_model, theta, spec.nu_seed, n, chunk, cfg, spec.seed) for chunk in _chunks(spec.reps, spec.jobs)]
    res = dict(item for out in _run_tasks(_power_chunk, tasks, spec.jobs) for item in out)
    return sum(res[r] for r in range(spec.reps)) / spec.reps


RATE_COLUMNS = ["n", "d", "d_model", "zeta", "theta_star", "psi_star", "power", "se", "bracketed"]


def fit_slope(ns, values) -> float:
    ns, values = np.asarray(ns, float), np.asarray(values, float)
    ok = np.isfinite(values) & (values > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns[ok]), np.log(values[ok]), 1)[0])


def run_rate(spec: RateSpec) -> ExperimentResult:
    """Bisect, per n, the smallest theta with power >= 1/2 and report psi~ there."""
    spec.validate()
    start = time.perf_counter()
    rows = []
    for n in spec.n_grid:
        d_model = spec.bump_count(n)
        zeta = calibrate_zeta(null_independent_uniform(), n, max(spec.calib_reps, 100), spec.alpha, seed=spec.seed,
                              eta_subsample=spec.eta_subsample, poissonize=spec.poissonize)
        cfg = TestConfig(n=n, zeta=zeta, eta_subsample=spec.eta_subsample, poissonize=spec.poissonize)
        lo, hi = 0.0, spec.theta_frac * theta_max(d_model)
        power_hi = power_at(hi, d_model, n, cfg, spec)
        bracketed = power_hi >= POWER_TARGET
        if bracketed:
            for _ in range(spec.iterations):
                mid = 0.5 * (lo + hi)
                p = power_at(mid, d_model, n, cfg, spec)
                if p >= POWER_TARGET:
                    hi, power_hi = mid, p
                else:
                    lo = mid
            model = alt_four_corner(make_bump_basis(d_model, hi, nu_seed=spec.nu_seed))
            psi = separation_tilde_psi(model, spec.psi_panels)
            theta_star = hi
        else:
            log.warning("n=%d: power %.3f at the largest valid theta; no bracket", n, power_hi)
            theta_star = psi = float("nan")
        se = math.sqrt(power_hi * (1 - power_hi) / spec.reps)
        rows.append([n, cfg.bins, d_model, zeta, theta_star, psi, power_hi, se, bracketed])
    slope = fit_slope([r[0] for r in rows], [r[5] for r in rows])
    meta = _metadata(spec, time.perf_counter() - start)
    return ExperimentResult("rate", RATE_COLUMNS, rows, meta, {"slope": slope, "reference_slope": -0.2})


# -- output -------------------------------------------------------------------

def _metadata(spec, wall: float) -> dict:
    import scipy

    eta = getattr(spec, "eta_subsample", None)
    describe = spec.describe() if hasattr(spec, "describe") else {k: v for k, v in asdict(spec).items() if k != "jobs"}
    return {
        "seed": spec.seed,
        "versions": {"wci": __version__, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "eta_policy": "full" if eta is None else f"subsample(M={eta})",
        "spec": describe,
        "wall_time_s": wall,
    }


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_result(result: ExperimentResult, out_dir: str | Path) -> dict:
    """result.csv, report.json and plots (plot failures are logged only)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.csv").write_text(to_csv_text(result.columns, result.rows))
    report = _json_safe(result.to_json())
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    from .plots import plot_result

    written = plot_result(result, out)
    return {"csv": out / "result.csv", "json": out / "report.json", "plots": written}


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text())
