"""Samplable laws of (X, Y, Z) with Z uniform on [0, 1].

Built-ins: two conditionally independent nulls, a strongly dependent
alternative, and the four-corner family perturbed by a signed bump basis,
which is the hard instance for this testing problem. Models with finite
conditional supports expose their exact conditionals, which feed the
separation functionals computed here with the exact OT oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from .measures import Dataset, DiscreteMeasure, make_measure, mixture
from .ot import marginal, product_measure, wasserstein

CORNERS = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
DEFAULT_PANELS = 512
SUP_SAFETY = 1.01
_SUP_MESH = 100_001


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ConditionalModel:
    """A law of (X, Y, Z) with Z ~ U[0, 1].

    ``sampler(rng, n)`` returns ``(x, y, z)`` arrays. ``conditional_xy`` maps
    a value of z to the exact conditional law of (X, Y) when that law has
    finite support, and is ``None`` otherwise. ``ci`` records models that
    are conditionally independent by construction.
    """

    name: str
    params: dict
    sampler: Callable = field(repr=False)
    conditional_xy: Callable | None = field(default=None, repr=False)
    smoothness_L: float = 0.0
    ci: bool = False
    z_law: str = "uniform[0,1]"

    @property
    def key(self) -> str:
        items = ",".join(f"{k}={self.params[k]!r}" for k in sorted(self.params))
        return f"{self.name}({items})"

    def sample(self, rng, n: int) -> Dataset:
        x, y, z = self.sampler(np.random.default_rng(rng), int(n))
        return Dataset(x, y, z)

    def conditional_x(self, z: float) -> DiscreteMeasure:
        return marginal(self._need_conditional()(z), 0)

    def conditional_y(self, z: float) -> DiscreteMeasure:
        return marginal(self._need_conditional()(z), 1)

    def _need_conditional(self):
        if self.conditional_xy is None:
            raise ModelError(f"model {self.name} has no finitely supported conditionals")
        return self.conditional_xy


# -- base bump --------------------------------------------------------------

def _bump_raw(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    ui = u[inside]
    out[inside] = np.exp(-1.0 / (ui * (1.0 - ui))) * np.sin(2.0 * np.pi * ui)
    return out


def _bump_raw_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = (u > 0.0) & (u < 1.0)
    ui = u[inside]
    w = ui * (1.0 - ui)
    env = np.exp(-1.0 / w)
    out[inside] = env * (np.sin(2 * np.pi * ui) * (1 - 2 * ui) / (w * w) + 2 * np.pi * np.cos(2 * np.pi * ui))
    return out


@lru_cache(maxsize=1)
def bump_constants() -> tuple[float, float, float]:
    """(normalizer a, sup|h|, sup|h'|) for h = a exp(-1/(u(1-u))) sin(2 pi u).

    ``a`` makes the integral of h^2 equal one; both sup norms come from a
    dense mesh and carry a 1.01 safety factor.
    """
    sq, _ = integrate.quad(lambda u: float(_bump_raw(np.array([u]))[0] ** 2), 0.0, 1.0,
                           epsabs=1e-15, epsrel=1e-13, limit=200)
    a = 1.0 / math.sqrt(sq)
    mesh = np.linspace(0.0, 1.0, _SUP_MESH)
    h_inf = a * float(np.abs(_bump_raw(mesh)).max()) * SUP_SAFETY
    hp_inf = a * float(np.abs(_bump_raw_prime(mesh)).max()) * SUP_SAFETY
    return a, h_inf, hp_inf


def bump(u):
    """Smooth bump on [0, 1], odd about 1/2, zero mean and unit L2 norm."""
    return bump_constants()[0] * _bump_raw(u)


def bump_prime(u):
    return bump_constants()[0] * _bump_raw_prime(u)


@dataclass(frozen=True)
class BumpBasis:
    d: int
    rho: float
    nu: tuple
    theta: float
    h_inf: float
    h_prime_inf: float

    @property
    def validity_slack(self) -> float:
        """1/4 - rho sqrt(d) sup|h|; nonnegative for a valid perturbation."""
        return 0.25 - self.rho * math.sqrt(self.d) * self.h_inf

    def xi(self, z):
        """rho * sum_j nu_j sqrt(d) h(d z - j + 1)."""
        z = np.asarray(z, dtype=float)
        j = np.minimum(np.floor(z * self.d).astype(int), self.d - 1)
        signs = np.asarray(self.nu, dtype=float)[j]
        return self.rho * math.sqrt(self.d) * signs * bump(self.d * z - j)

    def xi_sup(self) -> float:
        return self.rho * math.sqrt(self.d) * self.h_inf

    def lipschitz_xi(self) -> float:
        return self.d**1.5 * self.rho * self.h_prime_inf


def theta_max(d: int) -> float:
    """Largest theta satisfying the validity constraint at bump count d."""
    return d / (4.0 * bump_constants()[1])


def make_bump_basis(d: int, theta: float, nu=None, nu_seed: int | None = 0) -> BumpBasis:
    """Bump basis with rho = theta d**-1.5.

    ``nu`` is either an explicit sequence of d signs or ``None``, in which
    case it is a Rademacher draw from ``nu_seed``.
    """
    if d < 1:
        raise ModelError("d must be a positive integer")
    if not theta > 0:
        raise ModelError("theta must be positive")
    _, h_inf, hp_inf = bump_constants()
    if nu is None:
        nu = np.random.default_rng(nu_seed).choice([-1, 1], size=d)
    nu = tuple(int(s) for s in nu)
    if len(nu) != d or any(s not in (-1, 1) for s in nu):
        raise ModelError("nu must be d signs in {-1, +1}")
    basis = BumpBasis(d, theta * d**-1.5, nu, float(theta), h_inf, hp_inf)
    if basis.validity_slack < 0:
        raise ModelError(f"rho sqrt(d) sup|h| = {basis.xi_sup():.4g} exceeds 1/4; "
                         f"theta must be at most {theta_max(d):.4g}")
    return basis


# -- models -----------------------------------------------------------------

def null_independent_uniform() -> ConditionalModel:
    def sampler(rng, n):
        u = rng.random((3, n))
        return u[0], u[1], u[2]

    return ConditionalModel("null_independent_uniform", {}, sampler, None, 0.0, ci=True)


def _corner_measure(w4) -> DiscreteMeasure:
    return make_measure(CORNERS, w4)


def _sample_corners(rng, z, p_diag):
    """Draw corners given P(0,0) = P(1,1) = p_diag and P(0,1) = P(1,0) = 1/2 - p_diag."""
    u = rng.random(len(z))
    c1 = p_diag
    c2 = c1 + (0.5 - p_diag)
    c3 = c2 + (0.5 - p_diag)
    idx = (u >= c1).astype(int) + (u >= c2) + (u >= c3)
    xy = CORNERS[idx]
    return xy[:, 0].copy(), xy[:, 1].copy()


def null_four_corner() -> ConditionalModel:
    def sampler(rng, n):
        z = rng.random(n)
        x, y = _sample_corners(rng, z, np.full(n, 0.25))
        return x, y, z

    null = _corner_measure([0.25] * 4)
    return ConditionalModel("null_four_corner", {}, sampler, lambda z: null, 0.0, ci=True)


def alt_four_corner(basis: BumpBasis, delta_sign: int = 1) -> ConditionalModel:
    """Corner masses 1/4 + delta xi(z) on the diagonal, 1/4 - delta xi(z) off it."""
    if delta_sign not in (-1, 1):
        raise ModelError("delta_sign must be +1 or -1")
    if basis.validity_slack < 0:
        raise ModelError("basis violates the validity constraint")

    def sampler(rng, n):
        z = rng.random(n)
        x, y = _sample_corners(rng, z, 0.25 + delta_sign * basis.xi(z))
        return x, y, z

    def conditional(z):
        s = delta_sign * float(basis.xi(np.array([z]))[0])
        return _corner_measure([0.25 + s, 0.25 - s, 0.25 - s, 0.25 + s])

    params = {"d": basis.d, "theta": basis.theta, "nu": list(basis.nu), "delta": delta_sign}
    return ConditionalModel("alt_four_corner", params, sampler, conditional,
                            2.0 * basis.lipschitz_xi(), ci=False)


def alt_deterministic_dependence() -> ConditionalModel:
    """X = Y uniform on {1/4, 3/4}, independent of Z."""
    def sampler(rng, n):
        x = np.where(rng.random(n) < 0.5, 0.25, 0.75)
        return x, x.copy(), rng.random(n)

    joint = make_measure([(0.25, 0.25), (0.75, 0.75)], [0.5, 0.5])
    return ConditionalModel("alt_deterministic_dependence", {}, sampler, lambda z: joint, 0.0, ci=False)


def midpoints(panels: int, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    return lo + (np.arange(panels) + 0.5) * (hi - lo) / panels


def _product_of_marginals(mu: DiscreteMeasure) -> DiscreteMeasure:
    return product_measure(marginal(mu, 0), marginal(mu, 1))


def separation_tilde_psi(model: ConditionalModel, panels: int = DEFAULT_PANELS,
                         return_integrand: bool = False):
    """Midpoint-rule integral over z of W2(p_XY|z, p_X|z x p_Y|z)."""
    if model.conditional_xy is None:
        if model.ci:
            return (0.0, np.zeros(0), np.zeros(0)) if return_integrand else 0.0
        raise ModelError(f"model {model.name} has no exact conditionals")
    zs = midpoints(panels)
    vals = np.array([wasserstein(model.conditional_xy(z), _product_of_marginals(model.conditional_xy(z)), 2).value
                     for z in zs])
    total = float(np.mean(vals))
    return (total, zs, vals) if return_integrand else total


def binned_conditional(model: ConditionalModel, d: int, m: int, panels_per_bin: int = 64) -> DiscreteMeasure:
    """Law of (X, Y) given Z in bin m (1-based), by midpoint quadrature in z."""
    zs = midpoints(panels_per_bin, (m - 1) / d, m / d)
    return mixture([model._need_conditional()(z) for z in zs])


def binned_separation(model: ConditionalModel, d: int, panels_per_bin: int = 64) -> float:
    """sum_m W2(p_XY|Z in C_m, p_X|Z in C_m x p_Y|Z in C_m) p_m for d equal bins."""
    if model.conditional_xy is None:
        if model.ci:
            return 0.0
        raise ModelError(f"model {model.name} has no exact conditionals")
    total = 0.0
    for m in range(1, d + 1):
        joint = binned_conditional(model, d, m, panels_per_bin)
        total += wasserstein(joint, _product_of_marginals(joint), 2).value / d
    return total


REGISTRY = {
    "null_independent_uniform": null_independent_uniform,
    "null_four_corner": null_four_corner,
    "alt_deterministic_dependence": alt_deterministic_dependence,
    "alt_four_corner": alt_four_corner,
}


def build_model(name: str, d: int | None = None, theta: float | None = None,
                nu_seed: int | None = 0, delta: int = 1) -> ConditionalModel:
    """Registry lookup by name; ``alt_four_corner`` takes d, theta, nu_seed."""
    if name not in REGISTRY:
        raise ModelError(f"unknown model {name!r}; choose from {', '.join(sorted(REGISTRY))}")
    if name == "alt_four_corner":
        if d is None or theta is None:
            raise ModelError("alt_four_corner needs d and theta")
        return alt_four_corner(make_bump_basis(d, theta, nu_seed=nu_seed), delta)
    return REGISTRY[name]()
