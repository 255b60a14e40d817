import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from powerdiv.scheme import (
    build_scheme,
    explicit,
    harmonic,
    load_probs,
    moment,
    power,
    uniform,
    var_log,
    var_power,
)


class TestHarmonic:
    def test_exact_small_case(self):
        assert harmonic(4, 1) == pytest.approx(float(Fraction(25, 12)), rel=1e-15)

    def test_zero_exponent_counts_cells(self):
        assert harmonic(12345, 0) == 12345.0

    def test_matches_fraction_oracle(self):
        exact = sum(Fraction(1, k * k) for k in range(1, 201))
        assert harmonic(200, 2) == pytest.approx(float(exact), rel=1e-15)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            harmonic(0, 1)


class TestConstructors:
    def test_power_two_cells(self):
        np.testing.assert_allclose(power(1, 2).probs, [2 / 3, 1 / 3], rtol=1e-15)

    def test_power_zero_is_uniform(self):
        s = power(0.0, 7)
        assert s.is_uniform
        np.testing.assert_array_equal(s.probs, np.full(7, 1 / 7))

    def test_power_probabilities_sum_to_one(self):
        s = power(0.6, 10_000)
        assert math.fsum(s.probs) == pytest.approx(1.0, abs=1e-12)
        assert s.max_prob == pytest.approx(s.probs[0], rel=1e-15)
        assert s.min_prob == pytest.approx(s.probs[-1], rel=1e-14)

    @pytest.mark.parametrize("a", [-0.1, 1.5])
    def test_power_exponent_range(self, a):
        with pytest.raises(ValueError):
            power(a, 10)

    def test_explicit_validation(self):
        with pytest.raises(ValueError):
            explicit([0.5, 0.6])
        with pytest.raises(ValueError):
            explicit([1.0, 0.0])
        with pytest.raises(ValueError):
            explicit([])
        s = explicit([0.25, 0.25, 0.5])
        assert s.r == 3 and s.max_prob == 0.5

    def test_probs_are_read_only(self):
        s = power(0.5, 10)
        with pytest.raises(ValueError):
            s.probs[0] = 1.0


class TestDescriptors:
    def test_round_trip(self):
        for s in (uniform(9), power(0.3, 40), explicit([0.1, 0.9])):
            t = build_scheme(s.descriptor())
            np.testing.assert_array_equal(s.probs, t.probs)

    def test_file(self, tmp_path):
        f = tmp_path / "p.txt"
        f.write_text("# weights\n0.5\n\n0.25\n0.25  # last\n")
        np.testing.assert_array_equal(load_probs(f), [0.5, 0.25, 0.25])
        assert build_scheme({"kind": "explicit", "file": str(f)}).r == 3

    @pytest.mark.parametrize("bad", [{"kind": "zipf", "r": 3}, {"kind": "uniform"}, {"kind": "explicit"}])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            build_scheme(bad)


class TestMoments:
    def test_uniform_closed_form(self):
        assert moment(uniform(50), -1.0) == 50.0
        assert moment(uniform(50), 2.0) == pytest.approx(50.0**-2, rel=1e-15)

    def test_explicit_matches_direct_sum(self):
        p = np.array([0.1, 0.2, 0.3, 0.4])
        s = explicit(p)
        assert moment(s, -0.5) == pytest.approx(np.sum(p**0.5), rel=1e-15)
        assert moment(s, 0.0) == pytest.approx(1.0, rel=1e-15)

    def test_variances_vanish_for_uniform(self):
        assert var_log(uniform(30)) == 0.0
        assert var_power(power(0.0, 30), -1.0) == 0.0

    def test_var_log_two_cells(self):
        s = power(1, 2)
        # log P takes log(2/3) and log(1/3) with weights 2/3, 1/3
        expected = (2 / 3) * (1 / 3) * math.log(2) ** 2
        assert var_log(s) == pytest.approx(expected, rel=1e-13)

    @settings(max_examples=50, deadline=None)
    @given(a=st.floats(0.0, 1.0), r=st.integers(1, 300), x=st.floats(-2.0, 2.0))
    def test_variance_non_negative(self, a, r, x):
        s = power(a, r)
        assert var_power(s, x) >= 0.0
        assert var_log(s) >= 0.0
