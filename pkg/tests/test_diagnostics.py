import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rptrellis.codec import IDENTITY_SEED, build_decoder, simulate
from rptrellis.diagnostics import (
    DiagnosticsReport,
    covariance_sequence,
    default_word_length,
    marginal_t2,
    marton_bound,
    moment_conditions,
    plug_in_entropy_rate,
    scatter_pairs,
    symbols_to_bits,
    whiteness_band,
)
from rptrellis.ratedist import ReproductionDistribution
from rptrellis.sources import make_rng


class TestMoments:
    def test_identity_reproduction(self, rng):
        x = rng.standard_normal(1000)
        m = moment_conditions(x, x, 0.0)
        assert m["error_mean"] == 0 and m["error_var"] == 0 and m["error_xhat_corr"] == 0
        assert m["cov_ratio"] == pytest.approx(1.0)
        assert m["var_hat"] == pytest.approx(x.var())

    def test_constant_offset(self, rng):
        x = rng.standard_normal(1000)
        m = moment_conditions(x, x + 0.3, 0.0)
        assert m["error_mean"] == pytest.approx(0.3)
        assert m["cov_ratio"] == pytest.approx(1.0)
        assert m["dev_mean"] == pytest.approx(0.3, abs=1e-12) or m["dev_mean"] == pytest.approx(
            0.3 + x.mean() - x.mean())

    def test_targets(self, rng):
        x = rng.standard_normal(10_000)
        xhat = 0.5 * x
        m = moment_conditions(x, xhat, 0.25, source_mean=0.0, source_variance=1.0)
        assert m["dev_var_hat"] == pytest.approx(xhat.var() - 0.75)
        assert m["dev_error_var"] == pytest.approx((xhat - x).var() - 0.25)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            moment_conditions([1.0, 2.0], [1.0], 0.0)


class TestCovariance:
    def test_constant_sequence(self):
        assert np.all(covariance_sequence(np.full(100, 3.0), 5) == 0)

    def test_lag_zero_is_variance(self, rng):
        x = rng.standard_normal(500)
        k = covariance_sequence(x, 5, include_zero=True)
        assert k[0] == pytest.approx(x.var())

    def test_unbiased_normalization(self):
        x = np.array([1.0, -1.0] * 50)
        k = covariance_sequence(x, 2)
        assert k[0] == pytest.approx(-1.0) and k[1] == pytest.approx(1.0)

    def test_too_short(self):
        with pytest.raises(ValueError):
            covariance_sequence(np.ones(50), 5)

    def test_identity_permutation_is_correlated(self, gauss_r1):
        y = simulate(build_decoder(gauss_r1, 10, 1, IDENTITY_SEED), 100_000, 3)
        assert abs(covariance_sequence(y, 1)[0]) > whiteness_band(y)
        pairs = scatter_pairs(y)
        assert np.corrcoef(pairs[:, 0], pairs[:, 1])[0, 1] > 0.5


class TestEntropy:
    def test_all_zero(self):
        h, k = plug_in_entropy_rate(np.zeros(100_000, dtype=int))
        assert h == 0.0 and k == default_word_length(100_000)

    def test_iid_bits_near_one(self):
        bits = make_rng(1).integers(0, 2, 200_000)
        h, k = plug_in_entropy_rate(bits)
        assert 0.998 < h <= 1.0
        # leading-order plug-in bias (2^k - 1) / (2 n ln 2) per word
        assert h == pytest.approx(1 - (2 ** k - 1) / (2 * bits.size * math.log(2)) / k, abs=3e-4)

    def test_periodic_sequence(self):
        bits = np.tile([0, 1], 10_000)
        h, _ = plug_in_entropy_rate(bits, 4)
        assert h == pytest.approx(1 / 4, abs=1e-3)

    def test_coverage_guard(self):
        with pytest.raises(ValueError):
            plug_in_entropy_rate(np.zeros(10_000, dtype=int), 8)

    @given(st.lists(st.integers(0, 1), min_size=400, max_size=2000))
    @settings(max_examples=40, deadline=None)
    def test_bounded(self, bits):
        h, _ = plug_in_entropy_rate(bits)
        assert 0.0 <= h <= 1.0

    def test_symbols_to_bits(self):
        assert symbols_to_bits([2, 1, 3], 2).tolist() == [1, 0, 0, 1, 1, 1]


class TestMarton:
    def test_examples(self):
        assert marton_bound(1, 1) == 0
        assert marton_bound(1, 0.9994) == pytest.approx(math.sqrt(math.log(2) / 2 * 0.0006), abs=1e-12)
        assert marton_bound(1, 0.9994) == pytest.approx(0.01442, abs=1e-5)
        assert marton_bound(2, 0) == pytest.approx(math.sqrt(math.log(2)))

    def test_clamps_and_monotone(self):
        assert marton_bound(1, 1.2) == 0
        vals = [marton_bound(1, h) for h in np.linspace(0, 1, 21)]
        assert all(a >= b for a, b in zip(vals, vals[1:]))


class TestMarginalT2:
    def test_exact_frequencies(self):
        target = ReproductionDistribution.discrete([0.0, 1.0, 3.0], [0.25, 0.5, 0.25])
        s = np.array([0.0] * 25 + [1.0] * 50 + [3.0] * 25)
        assert marginal_t2(s, target) == pytest.approx(0.0, abs=1e-15)

    def test_point_mass(self):
        target = ReproductionDistribution.discrete([2.0], [1.0])
        assert marginal_t2(np.full(200, 5.0), target) == pytest.approx(9.0)
        assert marginal_t2(np.full(200, 5.0), ReproductionDistribution.gaussian(2.0, 0.0)) == pytest.approx(9.0)

    def test_partial_mismatch(self):
        target = ReproductionDistribution.discrete([0.0, 1.0], [0.5, 0.5])
        s = np.array([0.0] * 40 + [1.0] * 60)
        # 10% of the mass moves from 0 to 1
        assert marginal_t2(s, target) == pytest.approx(0.1)

    def test_order_invariant(self, rng):
        s = rng.standard_normal(1000)
        g = ReproductionDistribution.gaussian(0, 1)
        assert marginal_t2(s, g) == marginal_t2(s[::-1].copy(), g)

    def test_gaussian_against_quadrature(self):
        # samples on a coarse grid; compare the exact piecewise integral with brute-force quadrature
        from scipy import special
        s = np.repeat(np.linspace(-2, 2, 10), 20)
        g = ReproductionDistribution.gaussian(0.1, 0.8)
        u = (np.arange(2_000_000) + 0.5) / 2_000_000
        brute = np.mean((np.sort(s)[(u * s.size).astype(int)] - 0.1 - math.sqrt(0.8) * special.ndtri(u)) ** 2)
        assert marginal_t2(s, g) == pytest.approx(brute, rel=1e-4)

    def test_requires_samples(self):
        with pytest.raises(ValueError):
            marginal_t2(np.zeros(10), ReproductionDistribution.gaussian(0, 1))


def test_scatter_pairs():
    assert scatter_pairs([1, 2, 3]).tolist() == [[1, 2], [2, 3]]
    p = scatter_pairs(np.full(5, 7.0))
    assert np.all(p[:, 0] == p[:, 1])


def test_report_serializes(gauss_r1, rng):
    x = rng.standard_normal(5000)
    rep = DiagnosticsReport.build(0.8 * x, x=x, d_target=0.25, symbols=(x > 0).astype(int), R=1,
                                  target=gauss_r1)
    d = json.loads(rep.to_json())
    assert 0 <= d["entropy_rate_estimate"] <= 1
    assert d["marton_bound"] == pytest.approx(marton_bound(1, d["entropy_rate_estimate"]))
    assert d["marginal_t2"] >= 0
    assert len(d["covariance_seq"]) == 10
    assert rep.covariance_csv().startswith("lag,autocovariance\n")
