import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize, stats

from dualsprt.stats import (
    ExponentialSpec,
    GaussianSpec,
    Hypothesis,
    RandomSource,
    amplitude_to_db,
    db_to_amplitude,
    gaussian_llr,
    kl_balance_point,
    kl_number,
    llr_drift_and_variance,
)

F0, F1 = GaussianSpec(0.0, 1.0), GaussianSpec(1.0, 1.0)
means = st.floats(-5, 5, allow_nan=False)
variances = st.floats(0.1, 10, allow_nan=False)


def density_log_oracle(x, f0, f1):
    return stats.norm.logpdf(x, f1.mean, f1.sd) - stats.norm.logpdf(x, f0.mean, f0.sd)


class TestSpecs:
    def test_gaussian_rejects_nonpositive_variance(self):
        with pytest.raises(ValueError):
            GaussianSpec(0.0, 0.0)
        with pytest.raises(ValueError):
            GaussianSpec(0.0, -1.0)

    def test_exponential(self):
        e = ExponentialSpec(2.0)
        assert e.mean == 0.5
        assert e.median == pytest.approx(math.log(2) / 2)
        with pytest.raises(ValueError):
            ExponentialSpec(0.0)

    def test_hypothesis_parse(self):
        assert Hypothesis.parse("h1") is Hypothesis.H1
        assert Hypothesis.parse(0) is Hypothesis.H0
        assert Hypothesis.H0.other is Hypothesis.H1
        with pytest.raises(ValueError):
            Hypothesis.parse("H2")


class TestGaussianLlr:
    @pytest.mark.parametrize("x, expected", [(0.5, 0.0), (1.0, 0.5), (0.0, -0.5)])
    def test_examples(self, x, expected):
        assert gaussian_llr(x, F0, F1) == pytest.approx(expected, abs=1e-12)
        assert gaussian_llr(x, F0, F1) == pytest.approx(density_log_oracle(x, F0, F1), abs=1e-12)

    def test_non_finite_rejected(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ValueError):
                gaussian_llr(bad, F0, F1)

    def test_large_argument_no_underflow(self):
        # density quotients underflow here; the closed form does not
        assert gaussian_llr(1e4, F0, F1) == pytest.approx(1e4 - 0.5)

    @given(x=st.floats(-50, 50), m0=means, v0=variances, m1=means, v1=variances)
    def test_matches_density_logs_and_antisymmetric(self, x, m0, v0, m1, v1):
        f0, f1 = GaussianSpec(m0, v0), GaussianSpec(m1, v1)
        assert gaussian_llr(x, f0, f1) == pytest.approx(density_log_oracle(x, f0, f1), rel=1e-9, abs=1e-9)
        assert gaussian_llr(x, f0, f1) == pytest.approx(-gaussian_llr(x, f1, f0), rel=1e-12, abs=1e-12)


class TestDriftAndVariance:
    def test_examples(self):
        assert llr_drift_and_variance(F0, F1, "H1") == pytest.approx((0.5, 1.0))
        assert llr_drift_and_variance(F0, F1, "H0") == pytest.approx((-0.5, 1.0))
        assert llr_drift_and_variance(F0, F0, "H1") == pytest.approx((0.0, 0.0))

    @pytest.mark.parametrize("f0, f1", [(F0, F1), (GaussianSpec(0, 0.02), GaussianSpec(1, 0.08))])
    @pytest.mark.parametrize("h", ["H0", "H1"])
    def test_monte_carlo_moments(self, f0, f1, h):
        src = f1 if h == "H1" else f0
        x = np.random.default_rng(1).normal(src.mean, src.sd, 400_000)
        z = gaussian_llr(x, f0, f1)
        mean, var = llr_drift_and_variance(f0, f1, h)
        se = z.std() / math.sqrt(z.size)
        assert z.mean() == pytest.approx(mean, abs=5 * se)
        assert z.var() == pytest.approx(var, rel=0.02)

    @given(m0=means, v0=variances, m1=means, v1=variances)
    def test_drift_sign(self, m0, v0, m1, v1):
        f0, f1 = GaussianSpec(m0, v0), GaussianSpec(m1, v1)
        if abs(m0 - m1) < 1e-3 and abs(v0 - v1) < 1e-3:
            return
        assert llr_drift_and_variance(f0, f1, "H1")[0] > 0
        assert llr_drift_and_variance(f0, f1, "H0")[0] < 0


class TestKl:
    @pytest.mark.parametrize("args, expected", [((1, 0, 1), 0.5), ((0, 1, 2), 0.25), ((3.3, 3.3, 7), 0.0)])
    def test_examples(self, args, expected):
        assert kl_number(*args) == pytest.approx(expected)

    @pytest.mark.parametrize("theta, lam, v", [(1, 0, 1), (0, 1, 2)])
    def test_numeric_integration_oracle(self, theta, lam, v):
        sd = math.sqrt(v)

        def integrand(x):
            return stats.norm.pdf(x, theta, sd) * (
                stats.norm.logpdf(x, theta, sd) - stats.norm.logpdf(x, lam, sd))

        value, _ = integrate.quad(integrand, -np.inf, np.inf)
        assert kl_number(theta, lam, v) == pytest.approx(value, rel=1e-7)

    @given(t=means, l=means, v=variances)
    def test_nonnegative(self, t, l, v):
        k = kl_number(t, l, v)
        assert k >= 0
        if t == l:
            assert k == 0
        elif (t - l) ** 2 / (2 * v) > 0:  # gaps near 1e-160 underflow to zero
            assert k > 0

    @pytest.mark.parametrize("args, expected", [((0, 1, 1), 0.5), ((0, 2, 5), 1.0), ((-1, 3, 1), 1.0)])
    def test_balance_point(self, args, expected):
        t0, t1, v = args
        root = optimize.brentq(lambda t: kl_number(t, t0, v) - kl_number(t, t1, v), t0, t1)
        assert kl_balance_point(*args) == pytest.approx(expected)
        assert kl_balance_point(*args) == pytest.approx(root, abs=1e-10)

    def test_balance_point_equal_rejected(self):
        with pytest.raises(ValueError):
            kl_balance_point(1.0, 1.0, 1.0)


class TestDecibels:
    def test_printed_means(self):
        amp = db_to_amplitude(np.array([0, -1.5, -2.5, -4, -6]))
        assert np.round(amp, 2).tolist() == [1.0, 0.84, 0.75, 0.63, 0.5]

    @given(st.floats(1e-6, 1e6))
    def test_round_trip(self, a):
        assert db_to_amplitude(amplitude_to_db(a)) == pytest.approx(a, rel=1e-12)


class TestRandomSource:
    def test_reproducible(self):
        a = RandomSource(42, (3, 1)).generator().standard_normal(100)
        b = RandomSource(42, (3, 1)).generator().standard_normal(100)
        assert np.array_equal(a, b)

    def test_distinct_streams(self):
        a = RandomSource(42, 0).generator().standard_normal(100)
        b = RandomSource(42, 1).generator().standard_normal(100)
        c = RandomSource(43, 0).generator().standard_normal(100)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_int_and_tuple_ids_agree(self):
        assert RandomSource(5, 7).generator().random() == RandomSource(5, (7,)).generator().random()
        assert RandomSource(5, 7).child(2) == RandomSource(5, (7, 2))

    @settings(max_examples=20)
    @given(seed=st.integers(0, 2**64 - 1), sid=st.integers(0, 2**32))
    def test_any_u64_seed(self, seed, sid):
        g1, g2 = RandomSource(seed, sid).generator(), RandomSource(seed, sid).generator()
        assert g1.integers(0, 2**63) == g2.integers(0, 2**63)
