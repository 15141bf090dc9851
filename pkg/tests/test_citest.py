import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wci.citest import (
    ConfigError, TestConfig, bin_by_z, calibrate_zeta, default_d, normalized_T, poissonize, run_test, statistic_T,
    threshold, z_bins,
)
from wci.genmodels import alt_deterministic_dependence, null_independent_uniform
from wci.measures import Dataset
from wci.multires import build_grid, cell_labels, eta_grid
from wci.ustat import u_naive


def uniform_data(n, seed=0):
    return Dataset(*np.random.default_rng(seed).random((3, n)))


def dependent_data(n, seed=0):
    rng = np.random.default_rng(seed)
    v = np.where(rng.random(n) < 0.5, 0.25, 0.75)
    return Dataset(v, v.copy(), rng.random(n))


def slow_T(data, d):
    """T straight from its definition with the literal U-statistic."""
    bins = z_bins(data.z, d)
    xy = data.xy()
    total = 0.0
    etas = eta_grid(d).points
    for eta in etas:
        g = build_grid(eta, d)
        for k in g.levels:
            for m in range(d):
                pts = xy[bins == m]
                if len(pts) >= 4:
                    total += 4.0**-k * len(pts) * u_naive(cell_labels(g, k, pts))
    return total / len(etas)


class TestParameters:
    @pytest.mark.parametrize("n,d", [(6, 3), (32, 4), (33, 5), (1000, 16), (2000, 21), (4000, 28), (8000, 37)])
    def test_default_d(self, n, d):
        assert default_d(n) == d == math.ceil(n**0.4 - 1e-12)

    def test_tau_formula(self):
        cfg = TestConfig(n=1000, zeta=1.5)
        assert cfg.bins == 16 and cfg.tau == pytest.approx(1.5 * 4 * 16)
        assert threshold(21, 1.0) == pytest.approx(math.sqrt(21) * math.log2(21) ** 2)

    @pytest.mark.parametrize("kw", [dict(n=5), dict(n=100, d=1), dict(n=100, zeta=0), dict(n=100, eta_subsample=0)])
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigError):
            TestConfig(**kw)


class TestPoissonize:
    def test_mean(self):
        rng = np.random.default_rng(0)
        draws = [poissonize(100, rng) for _ in range(100_000)]
        assert np.mean(draws) == pytest.approx(50, abs=0.5)

    def test_overflow_tail_tiny(self):
        from scipy.stats import poisson
        assert poisson.sf(100, 50) < 1e-6

    def test_bypass(self):
        data = uniform_data(100)
        r = run_test(data, TestConfig(n=100, poissonize=False), 1)
        assert r.N == 100 and not r.poissonized


class TestBinning:
    @pytest.mark.parametrize("z,m", [(0.0, 0), (0.25, 1), (1.0, 3), (0.7499999999, 2), (0.75, 3)])
    def test_edges(self, z, m):
        assert z_bins(np.array([z]), 4)[0] == m

    def test_exact_decimal_edges(self):
        # 0.3 * 10 rounds to 3.0000000000000004 but 0.3 < 3/10 exactly
        assert z_bins(np.array([0.3, 0.7]), 10).tolist() == [2, 6]

    def test_partition(self):
        b = bin_by_z(uniform_data(500), 7)
        assert b.counts.sum() == 500 and len(b.bins) == 7
        assert b.edges(7) == (6 / 7, 1.0)


class TestStatistic:
    def test_small_bins_give_zero(self):
        data = Dataset([0.1, 0.9, 0.2], [0.1, 0.9, 0.3], [0.1, 0.5, 0.9])
        assert statistic_T(data, TestConfig(n=6, d=3)).T == 0.0

    def test_one_cell_gives_zero(self):
        data = Dataset([0.1] * 10, [0.2] * 10, np.linspace(0, 0.2, 10))
        assert statistic_T(data, TestConfig(n=10, d=4)).T == 0.0

    def test_table_sums_to_T(self):
        r = statistic_T(uniform_data(600), TestConfig(n=600))
        assert math.fsum(np.ravel(r.per_level_per_bin)) == pytest.approx(r.T, abs=1e-9)
        assert sum(r.sigma) == 600

    @pytest.mark.parametrize("maker", [uniform_data, dependent_data])
    def test_matches_definition(self, maker):
        data = maker(40, seed=3)
        got = statistic_T(data, TestConfig(n=40, d=4)).T
        assert got == pytest.approx(slow_T(data, 4), abs=1e-12)

    @pytest.mark.parametrize("n,d", [(200, None), (300, 7), (500, 16), (256, 3)])
    def test_engines_agree(self, n, d):
        data = uniform_data(n, seed=n)
        cfg = TestConfig(n=n, d=d)
        a = statistic_T(data, cfg, engine="fast")
        b = statistic_T(data, cfg, engine="reference")
        assert a.T == pytest.approx(b.T, abs=1e-12)
        assert np.allclose(a.per_level_per_bin, b.per_level_per_bin, atol=1e-12)

    def test_engines_agree_on_grid_points(self):
        """Coordinates on dyadic cut lines, including 0 and 1."""
        rng = np.random.default_rng(8)
        x, y = rng.integers(0, 33, size=(2, 300)) / 32
        data = Dataset(x, y, rng.random(300))
        cfg = TestConfig(n=300, d=8)
        assert statistic_T(data, cfg).T == pytest.approx(statistic_T(data, cfg, engine="reference").T, abs=1e-12)

    def test_engines_agree_subsampled(self):
        data = uniform_data(400, seed=4)
        cfg = TestConfig(n=400, eta_subsample=16)
        a = statistic_T(data, cfg, rng=5)
        b = statistic_T(data, cfg, rng=5, engine="reference")
        assert a.eta_approximate and a.eta_count == 16
        assert a.T == pytest.approx(b.T, abs=1e-12)

    def test_dependent_data_value(self):
        """X = Y on {1/4, 3/4}: every level splits the two atoms, so U is about 1/4."""
        data = dependent_data(4000, seed=1)
        cfg = TestConfig(n=4000, d=4)
        r = statistic_T(data, cfg)
        approx = sum(4.0**-k * 0.25 * 4000 for k in (1, 2))
        assert r.T == pytest.approx(approx, rel=0.05)

    def test_permutation_within_bins(self):
        data = uniform_data(300, seed=2)
        cfg = TestConfig(n=300, poissonize=False)
        base = statistic_T(data, cfg).T
        perm = np.random.default_rng(0).permutation(300)
        shuffled = Dataset(data.x[perm], data.y[perm], data.z[perm])
        assert statistic_T(shuffled, cfg).T == pytest.approx(base, abs=1e-12)

    def test_unknown_engine(self):
        with pytest.raises(ConfigError):
            statistic_T(uniform_data(50), TestConfig(n=50), engine="nope")


class TestRunTest:
    def test_deterministic(self):
        data = uniform_data(500)
        cfg = TestConfig(n=500, zeta=0.01)
        assert run_test(data, cfg, 7).to_dict() == run_test(data, cfg, 7).to_dict()

    def test_prefix_used(self):
        data = uniform_data(500)
        r = run_test(data, TestConfig(n=500), 3)
        assert r.T == statistic_T(data.head(r.N), TestConfig(n=500)).T

    def test_overflow_accepts(self):
        cfg = TestConfig(n=8)
        data = uniform_data(8)
        seen = False
        for s in range(400):
            r = run_test(data, cfg, s)
            if r.N > 8:
                seen = True
                assert r.accepted_by_overflow and not r.reject and normalized_T(r) == 0.0
        assert seen

    def test_decision_rule(self):
        data = dependent_data(400)
        r = run_test(data, TestConfig(n=400, zeta=0.01), 0)
        assert r.reject == (r.T >= r.tau and r.N <= r.n)
        assert r.reject

    def test_needs_n_rows(self):
        with pytest.raises(ConfigError):
            run_test(uniform_data(50), TestConfig(n=100), 0)


class TestCalibration:
    def test_median(self):
        z, draws = calibrate_zeta(null_independent_uniform(), 100, 101, 0.5, seed=1, return_draws=True)
        assert z == pytest.approx(max(np.quantile(draws, 0.5, method="higher"), 1e-3))

    def test_stricter_alpha_larger(self):
        kw = dict(seed=2)
        assert calibrate_zeta(null_independent_uniform(), 200, 150, 0.01, **kw) >= \
            calibrate_zeta(null_independent_uniform(), 200, 150, 0.1, **kw)

    def test_deterministic(self):
        m = null_independent_uniform()
        assert calibrate_zeta(m, 100, 100, 0.1, seed=4) == calibrate_zeta(m, 100, 100, 0.1, seed=4)

    def test_seed_stability(self):
        m = null_independent_uniform()
        a = calibrate_zeta(m, 300, 1000, 0.05, seed=1, eta_subsample=16)
        b = calibrate_zeta(m, 300, 1000, 0.05, seed=2, eta_subsample=16)
        assert abs(a - b) / max(a, b) < 0.15

    def test_degenerate_floor(self):
        class Flat:
            key = "flat"

            @staticmethod
            def sample(rng, n):
                return Dataset(np.full(n, 0.5), np.full(n, 0.5), np.random.default_rng(rng).random(n))

        assert calibrate_zeta(Flat, 100, 100, 0.05, zeta_min=0.123) == 0.123

    def test_needs_reps(self):
        with pytest.raises(ConfigError):
            calibrate_zeta(null_independent_uniform(), 100, 50, 0.05)

    def test_power_sanity(self):
        z = calibrate_zeta(null_independent_uniform(), 300, 100, 0.05, seed=0)
        cfg = TestConfig(n=300, zeta=z)
        model = alt_deterministic_dependence()
        rej = [run_test(model.sample(s, 300), cfg, s).reject for s in range(20)]
        assert all(rej)


@settings(max_examples=30, deadline=None)
@given(st.integers(6, 120), st.integers(2, 9), st.integers(0, 10_000))
def test_engine_agreement_property(n, d, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.integers(0, 9, size=(2, n)) / 8
    data = Dataset(x, y, rng.random(n))
    cfg = TestConfig(n=n, d=d)
    assert statistic_T(data, cfg).T == pytest.approx(statistic_T(data, cfg, engine="reference").T, abs=1e-12)
