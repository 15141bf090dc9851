import math

import numpy as np
import pytest
from scipy import integrate

from wci.genmodels import (
    CORNERS, ModelError, alt_deterministic_dependence, alt_four_corner, binned_separation, build_model, bump,
    bump_constants, bump_prime, make_bump_basis, midpoints, null_four_corner, null_independent_uniform,
    separation_tilde_psi, theta_max,
)
from wci.measures import make_measure
from wci.ot import marginal, product_measure, w1, w2


def basis(d=8, frac=0.999, nu_seed=0):
    return make_bump_basis(d, frac * theta_max(d), nu_seed=nu_seed)


class TestBump:
    def test_mean_zero(self):
        val, _ = integrate.quad(lambda u: float(bump(np.array([u]))[0]), 0, 1, epsabs=1e-14, limit=200)
        assert abs(val) < 1e-10

    def test_unit_norm(self):
        val, _ = integrate.quad(lambda u: float(bump(np.array([u]))[0]) ** 2, 0, 1, epsabs=1e-14, limit=200)
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_support_and_antisymmetry(self):
        u = np.linspace(0, 1, 1001)
        h = bump(u)
        assert h[0] == 0 and h[-1] == 0
        assert bump(np.array([-0.2, 1.3])).tolist() == [0.0, 0.0]
        assert np.allclose(h, -h[::-1], atol=1e-12)

    def test_sup_norms_cover_mesh(self):
        _, h_inf, hp_inf = bump_constants()
        u = np.linspace(0, 1, 333_333)
        assert np.abs(bump(u)).max() <= h_inf
        assert np.abs(bump_prime(u)).max() <= hp_inf

    def test_derivative(self):
        u = np.linspace(0.05, 0.95, 50)
        fd = (bump(u + 1e-6) - bump(u - 1e-6)) / 2e-6
        assert np.allclose(fd, bump_prime(u), rtol=1e-5, atol=1e-5)


class TestBasis:
    def test_rho_scaling(self):
        b = make_bump_basis(16, 0.5, nu_seed=1)
        assert b.rho == pytest.approx(0.5 * 16**-1.5)

    def test_slack_example(self):
        _, h_inf, _ = bump_constants()
        theta = 0.2 * 16 / h_inf  # rho sqrt(d) |h| = 0.2
        b = make_bump_basis(16, theta, nu_seed=1)
        assert b.xi_sup() == pytest.approx(0.2)
        assert b.validity_slack == pytest.approx(0.05)

    def test_invalid(self):
        with pytest.raises(ModelError, match="1/4"):
            make_bump_basis(16, 1.01 * theta_max(16))
        with pytest.raises(ModelError):
            make_bump_basis(4, 0.1, nu=[1, -1, 1])
        with pytest.raises(ModelError):
            make_bump_basis(0, 0.1)

    def test_explicit_and_seeded_signs(self):
        assert make_bump_basis(4, 0.1, nu=[1, -1, -1, 1]).nu == (1, -1, -1, 1)
        assert make_bump_basis(9, 0.1, nu_seed=3).nu == make_bump_basis(9, 0.1, nu_seed=3).nu

    def test_xi_vanishes_at_bump_edges(self):
        b = basis(8)
        assert np.all(b.xi(np.arange(9) / 8) == 0.0)


class TestModels:
    def test_uniform_null(self):
        m = null_independent_uniform()
        d = m.sample(0, 20_000)
        assert abs(np.corrcoef(d.x, d.y)[0, 1]) < 0.03
        assert m.ci and m.smoothness_L == 0 and separation_tilde_psi(m) == 0.0
        with pytest.raises(ModelError):
            m.conditional_x(0.3)

    def test_four_corner_null(self):
        m = null_four_corner()
        assert m.conditional_xy(0.5).as_dict() == make_measure(CORNERS, [1, 1, 1, 1]).as_dict()
        assert m.conditional_x(0.2).as_dict() == {(0.0,): 0.5, (1.0,): 0.5}
        assert separation_tilde_psi(m, 16) == pytest.approx(0.0, abs=1e-12)

    def test_alt_marginals_exactly_uniform(self):
        m = alt_four_corner(basis(8))
        for z in midpoints(512):
            for mu in (m.conditional_x(z), m.conditional_y(z)):
                assert mu.as_dict() == {(0.0,): 0.5, (1.0,): 0.5}

    def test_alt_equals_null_at_edges(self):
        m = alt_four_corner(basis(8))
        for z in (0.0, 0.25, 0.5, 1.0):
            assert m.conditional_xy(z).as_dict() == null_four_corner().conditional_xy(z).as_dict()

    def test_alt_w1_sandwich_and_w2(self):
        b = basis(6)
        m = alt_four_corner(b)
        for z in midpoints(64):
            joint = m.conditional_xy(z)
            prod = product_measure(marginal(joint, 0), marginal(joint, 1))
            xi = abs(float(b.xi(np.array([z]))[0]))
            v1, v2 = w1(joint, prod), w2(joint, prod) ** 2
            assert math.sqrt(2) * xi - 1e-12 <= v1 <= 2 * xi + 1e-12
            assert v1 - 1e-12 <= v2 <= math.sqrt(2) * v1 + 1e-12

    def test_alt_smoothness(self):
        b = basis(4)
        m = alt_four_corner(b)
        zs = np.linspace(0, 1, 41)
        worst = max(w1(m.conditional_xy(a), m.conditional_xy(c)) / (c - a) for a, c in zip(zs, zs[1:]))
        assert worst <= 2 * b.lipschitz_xi() == m.smoothness_L

    def test_alt_sampler_frequencies(self):
        """Chi-square style check of sampled corner frequencies inside one bump."""
        b = make_bump_basis(1, 0.999 * theta_max(1), nu=[1])
        m = alt_four_corner(b)
        data = m.sample(3, 200_000)
        sel = (data.z > 0.2) & (data.z < 0.3)
        zs = midpoints(200, 0.2, 0.3)
        p_diag = 0.25 + float(np.mean(b.xi(zs)))
        x, y = data.x[sel], data.y[sel]
        obs = np.array([np.sum((x == a) & (y == c)) for a, c in CORNERS])
        exp = sel.sum() * np.array([p_diag, 0.5 - p_diag, 0.5 - p_diag, p_diag])
        assert np.sum((obs - exp) ** 2 / exp) < 16.3  # chi2(3) 0.999 quantile

    def test_alt_delta_sign(self):
        b = basis(4)
        z = 0.1
        plus = alt_four_corner(b, 1).conditional_xy(z).as_dict()
        minus = alt_four_corner(b, -1).conditional_xy(z).as_dict()
        assert plus[(0.0, 0.0)] == pytest.approx(minus[(0.0, 1.0)])
        with pytest.raises(ModelError):
            alt_four_corner(b, 0)

    def test_deterministic_dependence(self):
        m = alt_deterministic_dependence()
        assert m.conditional_xy(0.3).as_dict() == {(0.25, 0.25): 0.5, (0.75, 0.75): 0.5}
        psi = separation_tilde_psi(m, 8)
        assert psi == pytest.approx(w2(m.conditional_xy(0.0), product_measure(m.conditional_x(0.0), m.conditional_y(0.0))))
        assert psi == pytest.approx(math.sqrt(0.125), abs=1e-12)
        d = m.sample(1, 100)
        assert np.array_equal(d.x, d.y)

    def test_sampler_reproducible(self):
        m = alt_four_corner(basis(5))
        a, b = m.sample(11, 50), m.sample(11, 50)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.z, b.z)


class TestSeparation:
    def test_ci_models_zero(self):
        assert binned_separation(null_independent_uniform(), 4) == 0.0
        assert binned_separation(null_four_corner(), 4) == pytest.approx(0.0, abs=1e-12)

    def test_aligned_bins_erase(self):
        m = alt_four_corner(basis(8))
        assert binned_separation(m, 8) < 1e-6

    def test_finer_bins_positive(self):
        m = alt_four_corner(basis(8))
        assert binned_separation(m, 16) > 0.1

    def test_scaling_in_d(self):
        vals = {d: separation_tilde_psi(alt_four_corner(make_bump_basis(d, 0.5, nu_seed=1)), 512) for d in (4, 16, 64)}
        for a, b in ((4, 16), (16, 64)):
            ratio = vals[a] / vals[b]
            assert 2 / 1.5 <= ratio <= 2 * 1.5

    def test_psi_integrand(self):
        total, zs, vals = separation_tilde_psi(alt_four_corner(basis(4)), 32, return_integrand=True)
        assert len(zs) == 32 and total == pytest.approx(vals.mean())


class TestRegistry:
    def test_build(self):
        m = build_model("alt_four_corner", d=16, theta=0.3, nu_seed=7)
        assert m.params["d"] == 16 and m.key.startswith("alt_four_corner(")
        assert build_model("null_four_corner").name == "null_four_corner"

    def test_errors(self):
        with pytest.raises(ModelError):
            build_model("nope")
        with pytest.raises(ModelError):
            build_model("alt_four_corner")
