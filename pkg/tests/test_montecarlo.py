import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from powerdiv.bounds import mu
from powerdiv.montecarlo import (
    ExperimentConfig,
    KolmogorovReport,
    Sampler,
    dkw_margin,
    empirical_dk,
    empirical_survival,
    normal_survival,
    poisson_pmf,
    poisson_survival,
    poisson_tail_cutoff,
    sample_counts,
    simulate,
)
from powerdiv.scheme import power, uniform
from powerdiv.statistic import Counts, StatisticConfig, t_tilde


class TestSampling:
    def test_no_trials(self):
        c = sample_counts(uniform(10), 0, seed=1)
        assert c.n == 0 and c.cells.size == 0

    def test_deterministic(self):
        a = sample_counts(uniform(300), 5, seed=9, replicate=4)
        b = sample_counts(uniform(300), 5, seed=9, replicate=4)
        np.testing.assert_array_equal(a.dense(), b.dense())
        assert a.n == 5

    def test_uniform_frequencies(self):
        n = 10**6
        c = sample_counts(uniform(4), n, seed=2024).dense() / n
        assert np.all(np.abs(c - 0.25) <= 4 * math.sqrt(0.25 * 0.75 / n))

    def test_alias_frequencies(self):
        scheme = power(1.0, 6)
        n = 10**6
        freq = sample_counts(scheme, n, seed=5).dense() / n
        se = np.sqrt(scheme.probs * (1 - scheme.probs) / n)
        assert np.all(np.abs(freq - scheme.probs) <= 4 * se)

    def test_sampler_reuse(self):
        scheme = power(0.5, 100)
        s = Sampler(scheme)
        a = sample_counts(scheme, 50, 3, 7, sampler=s)
        np.testing.assert_array_equal(a.dense(), sample_counts(scheme, 50, 3, 7).dense())


class TestSimulate:
    def test_config_validation(self):
        with pytest.raises(ValueError):
            ExperimentConfig({"kind": "uniform", "r": 4}, 8, 1.0, 0, 1)
        with pytest.raises(ValueError):
            ExperimentConfig({"kind": "uniform", "r": 4}, 8, 1.0, 5, 1, targets=("bogus",))

    @pytest.mark.parametrize("scheme", [{"kind": "uniform", "r": 50}, {"kind": "power", "a": 0.6, "r": 50}])
    @pytest.mark.parametrize("lam", [-0.5, 0.0, 1.0])
    def test_matches_statistic_module(self, scheme, lam):
        config = ExperimentConfig(scheme, 12, lam, 40, seed=77, targets=("t_tilde", "occupancy"))
        batch = simulate(config, workers=1)
        built = power(0.6, 50) if scheme["kind"] == "power" else uniform(50)
        cfg = StatisticConfig(lam, 12)
        for i in range(0, 40, 7):
            counts = sample_counts(built, 12, 77, i)
            expected = t_tilde(cfg, built, counts, method="dense")
            assert batch.t_tilde[i] == pytest.approx(expected, rel=1e-10, abs=1e-10)
            assert batch.occupancy[i] == np.count_nonzero(counts.values == 2)

    def test_forced_balanced_counts(self):
        cfg = StatisticConfig(1.0, 8)
        assert t_tilde(cfg, uniform(4), Counts.from_dense([2, 2, 2, 2])) == 4.0

    def test_uniform_remainder_zero(self):
        batch = simulate(ExperimentConfig({"kind": "uniform", "r": 200}, 20, 2 / 3, 500, 1), workers=2)
        assert np.all(batch.r_part == 0.0)
        np.testing.assert_array_equal(batch.t_tilde, batch.w_part)

    def test_worker_independence(self):
        config = ExperimentConfig({"kind": "power", "a": 0.3, "r": 500}, 40, 0.5, 70_000, 13,
                                  targets=("t_tilde", "occupancy"))
        one = simulate(config, workers=1)
        many = simulate(config, workers=4)
        np.testing.assert_array_equal(one.t_tilde, many.t_tilde)
        np.testing.assert_array_equal(one.occupancy, many.occupancy)

    def test_occupancy_mean(self):
        config = ExperimentConfig({"kind": "uniform", "r": 3000}, 5, 1.0, 10**6, 42, targets=("occupancy",))
        batch = simulate(config)
        assert batch.mu == mu(uniform(3000), 5)
        assert abs(batch.occupancy.mean() - batch.mu) <= 4 * math.sqrt(batch.mu / 10**6)

    def test_higher_level_occupancy(self):
        config = ExperimentConfig({"kind": "uniform", "r": 20}, 30, 1.0, 20_000, 3, targets=("occupancy",), level=3)
        batch = simulate(config)
        assert batch.mu == pytest.approx(mu(uniform(20), 30, 3), rel=1e-15)
        assert abs(batch.occupancy.mean() - batch.mu) <= 4 * math.sqrt(batch.occupancy.var() / 20_000)

    def test_dumps(self, tmp_path):
        config = ExperimentConfig({"kind": "uniform", "r": 30}, 6, 1.0, 25, 4, targets=("t_tilde", "occupancy"))
        batch = simulate(config)
        batch.write(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "t_tilde,occupancy" and len(lines) == 26
        batch.write(tmp_path / "s.npz")
        with np.load(tmp_path / "s.npz") as z:
            np.testing.assert_array_equal(z["t_tilde"], batch.t_tilde)
        first = (tmp_path / "s.npz").read_bytes()
        batch.write(tmp_path / "s.npz")
        assert (tmp_path / "s.npz").read_bytes() == first


class TestReferenceLaws:
    def test_poisson_survival_values(self):
        assert poisson_survival(1.0, 1) == pytest.approx(1 - math.exp(-1), rel=1e-15)
        mu_ = 0.033
        assert poisson_survival(mu_, 2) == pytest.approx(1 - math.exp(-mu_) * (1 + mu_), rel=1e-10)
        assert poisson_survival(mu_, 2) == pytest.approx(5.35e-4, rel=5e-3)
        assert poisson_survival(3.0, 0) == 1.0
        assert poisson_survival(3.0, -2.5) == 1.0
        assert poisson_survival(0.0, 0.5) == 0.0

    def test_poisson_against_scipy(self):
        for mu_ in (0.01, 0.57421875, 5.0, 80.0):
            for y in (0.5, 1, 3, 10, 100):
                assert poisson_survival(mu_, y) == pytest.approx(stats.poisson.sf(math.ceil(y) - 1, mu_), rel=1e-12, abs=1e-300)

    def test_negative_mean(self):
        with pytest.raises(ValueError):
            poisson_survival(-0.1, 1)

    @settings(max_examples=60, deadline=None)
    @given(mu_=st.floats(0.0, 50.0), y=st.integers(0, 80))
    def test_survival_differences_are_pmf(self, mu_, y):
        diff = poisson_survival(mu_, y) - poisson_survival(mu_, y + 1)
        assert diff == pytest.approx(poisson_pmf(mu_, y + 1)[y], abs=1e-14)
        assert poisson_survival(mu_, y + 1) <= poisson_survival(mu_, y)

    def test_tail_cutoff(self):
        for mu_ in (0.0033, 0.574, 5.0):
            k = poisson_tail_cutoff(mu_)
            assert poisson_survival(mu_, k) < 1e-12 <= poisson_survival(mu_, k - 1)

    def test_normal(self):
        assert normal_survival(0.0) == 0.5
        assert normal_survival(40.0) == pytest.approx(0.0, abs=1e-300)
        assert normal_survival(1.959964) == pytest.approx(0.025, abs=1e-6)
        y = np.linspace(-6, 6, 101)
        np.testing.assert_allclose(normal_survival(y), stats.norm.sf(y), rtol=1e-12, atol=1e-15)


class TestKolmogorov:
    def test_two_point_example(self):
        rep = empirical_dk([0.0, 1.0], "poisson", 1.0)
        assert rep.d_hat == pytest.approx(1 - 2 * math.exp(-1), rel=1e-14)
        assert rep.argmax_point == 1.0 and rep.argmax_side == "above"
        assert rep.tail_truncation <= 1e-12

    def test_degenerate(self):
        assert empirical_dk([0, 0, 0], "poisson", 0.0).d_hat == 0.0

    def test_single_sample_uses_ge_convention(self):
        x = np.array([2.5])
        assert empirical_survival(x, 2.5) == 1.0
        assert empirical_survival(x, 2.5000001) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            empirical_dk([], "normal")
        with pytest.raises(ValueError):
            empirical_dk([1.0], "poisson")
        with pytest.raises(ValueError):
            empirical_dk([1.0], "gamma")

    def test_matches_brute_force(self):
        rng = np.random.default_rng(1)
        x = rng.poisson(2.0, 300) + rng.choice([0.0, 0.5], 300)
        rep = empirical_dk(x, "poisson", 2.3)
        grid = np.concatenate([np.arange(-1, 30, 0.25), np.arange(-1, 30, 0.25) + 1e-9])
        brute = max(abs(empirical_survival(np.sort(x), y) - poisson_survival(2.3, y)) for y in grid)
        assert rep.d_hat == pytest.approx(brute, rel=1e-12)

    def test_normal_matches_scipy_ks(self):
        x = np.random.default_rng(2).normal(size=2000)
        assert empirical_dk(x, "normal").d_hat == pytest.approx(stats.kstest(x, "norm").statistic, rel=1e-10)

    def test_dkw_holds_for_reference_samples(self):
        hits = 0
        for seed in range(20):
            x = np.random.default_rng(seed).poisson(0.8, 10**5)
            rep = empirical_dk(x, "poisson", 0.8)
            hits += rep.d_hat <= rep.dkw_margin
        assert hits >= 17

    def test_report_fields(self):
        rep = empirical_dk([0.1, 0.2], "normal")
        assert isinstance(rep, KolmogorovReport)
        assert set(rep.to_dict()) >= {"d_hat", "argmax_point", "dkw_margin", "tail_truncation"}
        assert 0.0 <= rep.d_hat <= 1.0
        assert rep.dkw_margin == dkw_margin(2) == pytest.approx(math.sqrt(math.log(40) / 4))
