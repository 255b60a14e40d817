import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powerdiv.scheme import explicit, power, uniform
from powerdiv.statistic import (
    Counts,
    StatisticConfig,
    g_lambda,
    kernel_inputs,
    log_likelihood_ratio,
    normalization,
    occupancy_count,
    pearson,
    read_assignments,
    representation_split,
    t_lambda,
    t_tilde,
)

lambdas = st.floats(min_value=-0.95, max_value=3.0, allow_nan=False)


def multiplicativity_gap(a, b, lam):
    lhs = g_lambda(a * b, lam)
    rhs = b ** (lam + 1) * g_lambda(a, lam) + a * g_lambda(b, lam)
    scale = max(abs(lhs), abs(b ** (lam + 1) * g_lambda(a, lam)), abs(a * g_lambda(b, lam)), 1e-300)
    return abs(lhs - rhs) / scale


class TestKernel:
    @pytest.mark.parametrize(
        "lam, x, expected",
        [(1, 2, 2.0), (-0.5, 4, 16.0), (0, 2, 4 * math.log(2)), (2 / 3, 1, 0.0), (0, 1, 0.0)],
    )
    def test_values(self, lam, x, expected):
        assert g_lambda(x, lam) == pytest.approx(expected, rel=1e-15, abs=0)

    @pytest.mark.parametrize("lam", [-0.9, -0.5, 0.0, 1e-9, 1.0, 2.5])
    def test_zero_and_one(self, lam):
        assert g_lambda(0.0, lam) == 0.0
        assert g_lambda(1.0, lam) == 0.0

    def test_negative_argument(self):
        with pytest.raises(ValueError):
            g_lambda(-1.0, 1.0)

    @pytest.mark.parametrize("lam", [-1.0, -2.0])
    def test_lambda_range(self, lam):
        with pytest.raises(ValueError):
            StatisticConfig(lam, 5)

    def test_array_in_array_out(self):
        out = g_lambda(np.array([0.0, 1.0, 2.0]), 1.0)
        np.testing.assert_array_equal(out, [0.0, 0.0, 2.0])

    def test_continuity_near_zero_lambda(self):
        x = np.linspace(0.1, 10, 200)
        for lam in (1e-8, -1e-8, 1e-12):
            assert np.max(np.abs(g_lambda(x, lam) - g_lambda(x, 0.0))) <= 1e-6

    @pytest.mark.parametrize("lam", [5e-324, -5e-324, 1e-300])
    def test_subnormal_lambda(self, lam):
        assert g_lambda(2.0, lam) == pytest.approx(4 * math.log(2), rel=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(a=st.floats(1e-3, 10.0), b=st.floats(1e-3, 10.0), lam=lambdas)
    def test_multiplicativity(self, a, b, lam):
        assert multiplicativity_gap(a, b, lam) <= 1e-12


class TestCounts:
    def test_dense_sparse_round_trip(self):
        c = Counts.from_dense([0, 3, 0, 1])
        np.testing.assert_array_equal(c.cells, [1, 3])
        np.testing.assert_array_equal(c.dense(), [0, 3, 0, 1])
        assert c.n == 4

    def test_from_mapping_drops_zeros(self):
        c = Counts.from_mapping({2: 1, 0: 0, 1: 2}, 5)
        np.testing.assert_array_equal(c.cells, [1, 2])

    def test_csv_round_trip(self, tmp_path):
        c = Counts.from_dense([4, 0, 2, 1, 1])
        path = tmp_path / "c.csv"
        c.to_csv(path)
        assert path.read_text().splitlines()[1] == "1,4"
        back = Counts.read_csv(path, 5)
        np.testing.assert_array_equal(back.dense(), c.dense())

    def test_assignment_file_is_one_based(self, tmp_path):
        path = tmp_path / "a.txt"
        path.write_text("1 1 2\n4\n")
        np.testing.assert_array_equal(read_assignments(path), [0, 0, 1, 3])

    def test_invalid(self):
        with pytest.raises(ValueError):
            Counts.from_dense([1, -1])
        with pytest.raises(ValueError):
            Counts.from_assignments([0, 4], 4)
        with pytest.raises(ValueError):
            Counts(np.array([0, 0]), np.array([1, 1]), 3)

    def test_occupancy(self):
        c = Counts.from_dense([4, 2, 1, 1])
        assert occupancy_count(c, 2) == 1
        assert occupancy_count(c, 3) == 0
        assert occupancy_count(Counts.from_dense([2, 2, 2, 2]), 2) == 4
        assert occupancy_count(Counts.from_dense([0, 2, 0]), 0) == 2


class TestStatistic:
    s4 = uniform(4)

    def test_balanced_counts(self):
        cfg = StatisticConfig(1.0, 8)
        c = Counts.from_dense([2, 2, 2, 2])
        assert t_lambda(cfg, self.s4, c) == 0.0
        assert t_tilde(cfg, self.s4, c) == 4.0

    def test_hand_values(self):
        c = Counts.from_dense([4, 2, 1, 1])
        cfg1 = StatisticConfig(1.0, 8)
        assert t_lambda(cfg1, self.s4, c) == pytest.approx(3.0, rel=1e-15)
        assert t_tilde(cfg1, self.s4, c) == pytest.approx(7.0, rel=1e-15)
        cfg0 = StatisticConfig(0.0, 8)
        assert t_lambda(cfg0, self.s4, c) == pytest.approx(4 * math.log(2), rel=1e-14)

    def test_normalization(self):
        center, scale = normalization(StatisticConfig(1.0, 8), self.s4)
        assert (center, scale) == (-4.0, 1.0)
        _, scale0 = normalization(StatisticConfig(0.0, 7), power(0.4, 20))
        assert scale0 == pytest.approx(1 / (4 * math.log(2)), rel=1e-14)

    @pytest.mark.parametrize("lam", [-0.5, 0.0, 2 / 3, 1.0, 2.0])
    @pytest.mark.parametrize("r", [5, 300])
    def test_uniform_closed_form_matches_generic(self, lam, r):
        cfg = StatisticConfig(lam, 17)
        closed = normalization(cfg, uniform(r))
        generic = normalization(cfg, uniform(r), generic=True)
        np.testing.assert_allclose(closed, generic, rtol=1e-12)

    def test_all_singletons_vanish_under_llr(self):
        c = Counts.from_dense([1, 1, 0, 1, 0, 1])
        assert t_tilde(StatisticConfig(0.0, 4), uniform(6), c) == 0.0

    def test_mismatched_inputs(self):
        cfg = StatisticConfig(1.0, 8)
        with pytest.raises(ValueError):
            t_lambda(cfg, uniform(5), Counts.from_dense([2, 2, 2, 2]))
        with pytest.raises(ValueError):
            t_lambda(cfg, self.s4, Counts.from_dense([2, 2, 2, 1]))

    @pytest.mark.parametrize("lam", [-0.5, 0.0, 1.0, 2.5])
    def test_sparse_matches_dense(self, lam):
        rng = np.random.default_rng(3)
        scheme = power(0.7, 60)
        cfg = StatisticConfig(lam, 25)
        for _ in range(20):
            c = Counts.from_dense(rng.multinomial(25, scheme.probs))
            dense = t_lambda(cfg, scheme, c, method="dense")
            sparse = t_lambda(cfg, scheme, c, method="sparse")
            assert sparse == pytest.approx(dense, rel=1e-10, abs=1e-10)
            assert t_tilde(cfg, scheme, c, "sparse") == pytest.approx(t_tilde(cfg, scheme, c, "dense"), rel=1e-10, abs=1e-9)


class TestIdentities:
    def test_pearson_and_llr(self):
        rng = np.random.default_rng(11)
        scheme = explicit(rng.dirichlet(np.ones(12)))
        for _ in range(100):
            c = Counts.from_dense(rng.multinomial(40, scheme.probs))
            assert t_lambda(StatisticConfig(1.0, 40), scheme, c) == pytest.approx(pearson(scheme, c), rel=1e-10)
            assert t_lambda(StatisticConfig(0.0, 40), scheme, c) == pytest.approx(
                log_likelihood_ratio(scheme, c), rel=1e-10
            )


class TestSplit:
    def test_uniform_hand_value(self):
        cfg = StatisticConfig(1.0, 8)
        split = representation_split(cfg, uniform(4), [0, 0, 0, 0, 1, 1, 2, 3])
        assert split.w_part == 7.0
        assert split.r_part == 0.0

    def test_two_cell_power_scheme(self):
        scheme = power(1, 2)
        cfg = StatisticConfig(1.0, 4)
        split = representation_split(cfg, scheme, [0, 0, 1, 1])
        expected = t_tilde(cfg, scheme, Counts.from_dense([2, 2]), method="dense")
        assert split.total == pytest.approx(expected, rel=1e-10)

    def test_uniform_remainder_is_exactly_zero(self):
        rng = np.random.default_rng(0)
        cfg = StatisticConfig(2 / 3, 30)
        for _ in range(50):
            assert representation_split(cfg, uniform(100), rng.integers(0, 100, 30)).r_part == 0.0

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            representation_split(StatisticConfig(1.0, 3), uniform(4), [0, 1])

    @settings(max_examples=60, deadline=None)
    @given(a=st.floats(0.05, 1.0), lam=lambdas, seed=st.integers(0, 2**32 - 1))
    def test_split_matches_dense(self, a, lam, seed):
        rng = np.random.default_rng(seed)
        scheme = power(a, 40)
        cfg = StatisticConfig(lam, 15)
        x = rng.choice(40, size=15, p=scheme.probs)
        split = representation_split(cfg, scheme, x)
        dense = t_tilde(cfg, scheme, Counts.from_assignments(x, 40), method="dense")
        assert split.total == pytest.approx(dense, rel=1e-10, abs=1e-9)

    def test_kernel_inputs_empty_for_uniform(self):
        inputs = kernel_inputs(StatisticConfig(1.0, 5), uniform(10))
        assert inputs["wcell"].size == 0 and inputs["rscale"] == 0.0
