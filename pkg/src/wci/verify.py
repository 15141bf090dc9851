"""Property suites checked against the exact OT oracle.

Each suite returns a list of :class:`PropertyResult`, one per property
family, with the number of instances checked, how many passed, and the
worst slack seen (negative slack means a violation).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .genmodels import alt_four_corner, make_bump_basis, midpoints, theta_max
from .measures import DiscreteMeasure, make_measure
from .multires import eta_grid, indyk_thaper_rhs, indyk_thaper_sum, weed_bach_bound
from .ot import marginal, product_measure, wasserstein
from .ustat import u_expectation, u_fast, u_naive

SLACK_TOL = 1e-8
SUITES = ("facts", "weedbach", "indykthaper", "ustat", "lowerbound")


@dataclass
class PropertyResult:
    suite: str
    name: str
    checked: int = 0
    passed: int = 0
    worst_slack: float = math.inf

    def record(self, slack: float, tol: float = SLACK_TOL) -> None:
        self.checked += 1
        self.passed += int(slack >= -tol)
        self.worst_slack = min(self.worst_slack, float(slack))

    @property
    def ok(self) -> bool:
        return self.checked > 0 and self.passed == self.checked

    def to_dict(self) -> dict:
        out = asdict(self)
        out["ok"] = self.ok
        return out


def random_measure(rng, max_points: int, dim: int) -> DiscreteMeasure:
    k = int(rng.integers(1, max_points + 1))
    return make_measure(rng.random((k, dim)), rng.dirichlet(np.ones(k)))


# -- suites -----------------------------------------------------------------

def suite_facts(instances: int = 200, seed: int = 11) -> list[PropertyResult]:
    """Elementary W1/W2 relations on random measures in [0,1]^2 and [0,1]."""
    rng = np.random.default_rng(seed)
    names = ["W1 <= W2", "W1 triangle", "W2 triangle", "W2^2 product subadditivity", "W2^2 <= sqrt2 W1"]
    res = {n: PropertyResult("facts", n) for n in names}
    for _ in range(instances):
        p, q, r = (random_measure(rng, 12, 2) for _ in range(3))
        w1_pq, w2_pq = wasserstein(p, q, 1).value, wasserstein(p, q, 2).value
        res["W1 <= W2"].record(w2_pq - w1_pq)
        res["W2^2 <= sqrt2 W1"].record(math.sqrt(2) * w1_pq - w2_pq**2)
        res["W1 triangle"].record(wasserstein(p, r, 1).value + wasserstein(r, q, 1).value - w1_pq)
        res["W2 triangle"].record(wasserstein(p, r, 2).value + wasserstein(r, q, 2).value - w2_pq)
        p1, p2, q1, q2 = (random_measure(rng, 8, 1) for _ in range(4))
        joint = wasserstein(product_measure(p1, p2), product_measure(q1, q2), 2).value ** 2
        split = wasserstein(p1, q1, 2).value ** 2 + wasserstein(p2, q2, 2).value ** 2
        res["W2^2 product subadditivity"].record(split - joint)
    return list(res.values())


def suite_weedbach(pairs: int = 100, ds=(2, 4, 8), seed: int = 12) -> list[PropertyResult]:
    """Multiresolution bound >= exact W2^2 for every eta in the full grid."""
    rng = np.random.default_rng(seed)
    out = []
    for d in ds:
        res = PropertyResult("weedbach", f"bound >= W2^2, d={d}")
        etas = eta_grid(d).points
        for _ in range(pairs):
            p, q = random_measure(rng, 12, 2), random_measure(rng, 12, 2)
            exact = wasserstein(p, q, 2).value ** 2
            for eta in etas:
                res.record(weed_bach_bound(p, q, eta, d) - exact)
        out.append(res)
    return out


def suite_indykthaper(pairs: int = 200, phis=(0.5, 0.25, 0.125), dims=(1, 2), seed: int = 13) -> list[PropertyResult]:
    """Eta-averaged multiresolution sum against its W1 upper bound."""
    rng = np.random.default_rng(seed)
    out = []
    for q_dim in dims:
        for phi in phis:
            res = PropertyResult("indykthaper", f"q={q_dim}, phi={phi}")
            for _ in range(pairs):
                mu = random_measure(rng, 12 if q_dim == 2 else 8, q_dim)
                nu = random_measure(rng, 12 if q_dim == 2 else 8, q_dim)
                lhs = indyk_thaper_sum(mu, nu, phi, q_dim)
                res.record(indyk_thaper_rhs(wasserstein(mu, nu, 1).value, phi, q_dim) - lhs)
            out.append(res)
    return out


def enumerate_expectation(q, sigma: int = 4) -> float:
    """E[u_naive] over every sigma-tuple of iid draws from the table q."""
    q = np.asarray(q, dtype=float)
    cells = list(zip(*np.nonzero(q > 0)))
    total = 0.0
    for tup in itertools.product(range(len(cells)), repeat=sigma):
        prob = math.prod(q[cells[t]] for t in tup)
        total += prob * u_naive([cells[t] for t in tup])
    return total


UNBIASED_TABLES = (
    ("diagonal", [[0.5, 0.0], [0.0, 0.5]], 0.25),
    ("tilted", [[0.35, 0.15], [0.15, 0.35]], 0.04),
    ("product", np.outer([0.2, 0.8], [0.5, 0.3, 0.2]).tolist(), 0.0),
)


def suite_ustat(instances: int = 500, seed: int = 14) -> list[PropertyResult]:
    rng = np.random.default_rng(seed)
    unb = PropertyResult("ustat", "E[u_naive] = u_expectation (sigma=4)")
    for _, table, value in UNBIASED_TABLES:
        e = enumerate_expectation(table)
        unb.record(1e-12 - max(abs(e - u_expectation(table)), abs(e - value)), tol=0.0)
    agree = PropertyResult("ustat", "u_fast = u_naive")
    for _ in range(instances):
        s = int(rng.integers(4, 11))
        cells = rng.integers(0, rng.integers(1, 5, size=2), size=(s, 2))
        agree.record(1e-10 - abs(u_fast(cells) - u_naive(cells)), tol=0.0)
    return [unb, agree]


def suite_lowerbound(d: int = 8, theta_frac: float = 0.999, mesh: int = 512, nu_seed: int = 0) -> list[PropertyResult]:
    """Certificates for the four-corner perturbation on a z-mesh."""
    basis = make_bump_basis(d, theta_frac * theta_max(d), nu_seed=nu_seed)
    model = alt_four_corner(basis)
    names = ["marginals uniform", "sqrt2|xi| <= W1 <= 2|xi|", "W1 <= W2^2 <= sqrt2 W1", "validity"]
    res = {n: PropertyResult("lowerbound", n) for n in names}
    res["validity"].record(basis.validity_slack, tol=0.0)
    for z in midpoints(mesh):
        joint = model.conditional_xy(z)
        res["validity"].record(float(min(joint.weights.min(), 1 - joint.weights.max())), tol=0.0)
        mx, my = marginal(joint, 0), marginal(joint, 1)
        exact = all(len(m) == 2 and np.all(m.weights == 0.5) for m in (mx, my))
        res["marginals uniform"].record(0.0 if exact else -1.0, tol=0.0)
        prod = product_measure(mx, my)
        w1v = wasserstein(joint, prod, 1).value
        w2sq = wasserstein(joint, prod, 2).value ** 2
        xi = abs(float(basis.xi(np.array([z]))[0]))
        res["sqrt2|xi| <= W1 <= 2|xi|"].record(min(w1v - math.sqrt(2) * xi, 2 * xi - w1v))
        res["W1 <= W2^2 <= sqrt2 W1"].record(min(w2sq - w1v, math.sqrt(2) * w1v - w2sq))
    return list(res.values())


_RUNNERS = {
    "facts": suite_facts,
    "weedbach": suite_weedbach,
    "indykthaper": suite_indykthaper,
    "ustat": suite_ustat,
    "lowerbound": suite_lowerbound,
}


def run_suite(name: str) -> list[PropertyResult]:
    if name == "all":
        return [r for s in SUITES for r in _RUNNERS[s]()]
    if name not in _RUNNERS:
        raise KeyError(f"unknown suite {name!r}; choose from {', '.join(SUITES + ('all',))}")
    return _RUNNERS[name]()
