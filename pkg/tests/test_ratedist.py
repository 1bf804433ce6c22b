import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rptrellis.ratedist import (
    ConvergenceError,
    Kind,
    ReproductionDistribution,
    blahut,
    blahut_at_rate,
    cdf_of_reproduction,
    cluster_support,
    discretize_source,
    gaussian_distortion_rate,
    inverse_cdf_of_reproduction,
    refine_support,
    support_condition,
)
from rptrellis.sources import SourceModel


@pytest.mark.parametrize("rate,expected", [(0, 1.0), (1, 0.25), (2, 0.0625), (3, 0.015625), (4, 0.00390625)])
def test_gaussian_distortion_rate(rate, expected):
    pt = gaussian_distortion_rate(1.0, rate)
    assert pt.distortion == expected
    assert pt.reproduction.kind is Kind.GAUSSIAN
    assert pt.reproduction.variance == pytest.approx(1.0 - expected)


def test_gaussian_distortion_rate_scales():
    pt = gaussian_distortion_rate(4.0, 1)
    assert pt.distortion == 1.0 and pt.reproduction.variance == 3.0


class TestReproductionDistribution:
    def test_validation(self):
        with pytest.raises(ValueError):
            ReproductionDistribution.discrete([0.5, 0.2], [0.5, 0.5])
        with pytest.raises(ValueError):
            ReproductionDistribution(Kind.DISCRETE, (0.0, 1.0), (0.5, 0.6))
        with pytest.raises(ValueError):
            ReproductionDistribution(Kind.DISCRETE, (0.0, 1.0), (1.0, 0.0))
        with pytest.raises(ValueError):
            ReproductionDistribution.gaussian(0.0, -1.0)

    def test_json_round_trip(self, uniform_r1, gauss_r1):
        for d in (uniform_r1, gauss_r1):
            back = ReproductionDistribution.from_json(d.to_json())
            assert back.to_dict() == d.to_dict()
            assert json.loads(d.to_json())["kind"] in ("discrete_pmf", "gaussian_cdf")

    @pytest.mark.parametrize("u,y", [(0.30, 0.2), (0.50, 0.5), (0.70, 0.8)])
    def test_inverse_cdf_examples(self, uniform_r1, u, y):
        assert inverse_cdf_of_reproduction(uniform_r1, u) == y

    def test_inverse_cdf_boundary_takes_lower_point(self, uniform_r1):
        assert inverse_cdf_of_reproduction(uniform_r1, 0.368) == 0.2
        assert inverse_cdf_of_reproduction(uniform_r1, 0.3680001) == 0.5

    def test_cdf_steps(self, uniform_r1):
        assert cdf_of_reproduction(uniform_r1, 0.1) == 0.0
        assert cdf_of_reproduction(uniform_r1, 0.2) == pytest.approx(0.368)
        assert cdf_of_reproduction(uniform_r1, 0.9) == pytest.approx(1.0)

    @pytest.mark.parametrize("bad", [0.0, 1.0])
    def test_inverse_cdf_domain(self, uniform_r1, bad):
        with pytest.raises(ValueError):
            inverse_cdf_of_reproduction(uniform_r1, bad)

    @given(u=st.floats(min_value=1e-9, max_value=1 - 1e-9))
    @settings(max_examples=100, deadline=None)
    def test_generalized_inverse_property(self, u):
        d = ReproductionDistribution.discrete([-1.0, 0.0, 2.0, 3.0], [0.1, 0.4, 0.3, 0.2])
        y = inverse_cdf_of_reproduction(d, u)
        # smallest support point whose cdf reaches u
        assert cdf_of_reproduction(d, y) >= u - 1e-12
        below = [s for s in d.support if s < y]
        if below:
            assert cdf_of_reproduction(d, below[-1]) < u

    def test_gaussian_inverse_symmetry(self, gauss_r1):
        assert inverse_cdf_of_reproduction(gauss_r1, 0.25) == pytest.approx(-inverse_cdf_of_reproduction(gauss_r1, 0.75))


def test_discretize_masses_sum_to_one():
    for m in (SourceModel.uniform01(), SourceModel.laplacian(), SourceModel.gaussian()):
        x, w = discretize_source(m, 500)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(x) > 0)


def test_blahut_two_point_lossless():
    x = np.array([-1.0, 1.0])
    w = np.array([0.5, 0.5])
    res = blahut(x, w, beta=50.0, tol=1e-9)
    assert res.rate == pytest.approx(1.0, abs=1e-6)
    assert res.distortion < 1e-12


def test_blahut_rejects_bad_weights():
    with pytest.raises(ValueError):
        blahut(np.array([0.0, 1.0]), np.array([0.5, 0.6]), 1.0)


def test_blahut_reports_gap_when_out_of_iterations():
    x, w = discretize_source(SourceModel.uniform01(), 200)
    with pytest.raises(ConvergenceError) as info:
        blahut(x, w, beta=200.0, max_iter=2, tol=1e-12)
    assert info.value.gap > 0


def test_blahut_objective_nonincreasing():
    x, w = discretize_source(SourceModel.laplacian(), 400)
    res = blahut(x, w, beta=3.0, tol=1e-3)
    obj = np.asarray(res.objective)
    assert obj.size > 3
    assert np.all(np.diff(obj) <= 1e-12)


def test_rd_curve_monotone_in_beta():
    x, w = discretize_source(SourceModel.uniform01(), 400)
    pts = [blahut(x, w, b, tol=1e-4) for b in (20.0, 40.0, 80.0)]
    d = [p.distortion for p in pts]
    r = [p.rate for p in pts]
    assert d[0] >= d[1] >= d[2]
    assert r[0] <= r[1] <= r[2]


def test_blahut_gaussian_cross_check():
    x, w = discretize_source(SourceModel.gaussian(), 1000)
    res = blahut_at_rate(x, w, 1.0)
    assert res.distortion == pytest.approx(0.25, rel=0.01)


def test_uniform_distortion_rate_r1():
    x, w = discretize_source(SourceModel.uniform01(), 2000)
    res = blahut_at_rate(x, w, 1.0)
    assert abs(res.rate - 1.0) <= 1e-3
    assert res.distortion == pytest.approx(0.0173, abs=2e-4)


def test_cluster_support_groups_runs():
    x = np.arange(10.0)
    pmf = np.array([0.1, 0.1, 0, 0, 0.3, 0, 0, 0.25, 0.25, 0])
    y, q = cluster_support(x, pmf)
    assert np.allclose(y, [0.5, 4.0, 7.5])
    assert np.allclose(q, [0.2, 0.3, 0.5])
    assert q.sum() == pytest.approx(1.0, abs=1e-12)


def test_refine_uniform_r1_matches_known_support():
    x, w = discretize_source(SourceModel.uniform01(), 2000)
    m = refine_support(x, w, [0.25, 0.5, 0.75], [0.3, 0.4, 0.3], 1.0, beta0=28.0, center=0.5)
    assert np.allclose(m.support, [0.2, 0.5, 0.8], atol=0.01)
    assert np.allclose(m.pmf, [0.368, 0.264, 0.368], atol=0.01)
    assert m.rate == pytest.approx(1.0, abs=1e-5)
    assert m.pmf.sum() == pytest.approx(1.0, abs=1e-9)
    assert float(m.pmf @ m.support) == pytest.approx(0.5, abs=1e-3)
    c = support_condition(x, w, m.support, m.pmf, m.beta)
    assert c.max() <= 1 + 1e-4


def test_squarem_reaches_mapping_fixed_point():
    from rptrellis._kernels import _mapping_step, mapping_squarem

    x, p = discretize_source(SourceModel.laplacian(), 800, 5.2)
    y = np.linspace(-4.0, 4.0, 7)
    q = np.full(7, 1 / 7)
    used = mapping_squarem(x, p, 2.3, y, q, 20_000, 1e-12)
    assert used < 20_000
    y1, q1 = np.empty(7), np.empty(7)
    _mapping_step(x, p, 2.3, y, q, y1, q1)
    assert np.allclose(y1, y, atol=1e-9) and np.allclose(q1, q, atol=1e-10)
    assert np.allclose(y, -y[::-1], atol=1e-7)


def test_squarem_survives_dead_atom():
    from rptrellis._kernels import mapping_squarem

    x, p = discretize_source(SourceModel.uniform01(), 400)
    y = np.array([0.25, 0.75, 1e6])
    q = np.array([0.5, 0.5 - 1e-12, 1e-12])
    mapping_squarem(x, p, 50.0, y, q, 200, 1e-10)
    assert np.all(np.isfinite(y)) and q[2] < 1e-200
