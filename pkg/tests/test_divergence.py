import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from misspec.divergence import (
    KLNeighborhoodSpec,
    expansion_residual,
    golden_section_max,
    hellinger,
    hellinger_sq,
    hellinger_transform,
    in_kl_neighborhood,
    kl_divergence,
    kl_envelope_check,
    kl_moments,
    l1_distance,
    min_transform,
    misspec_margin,
    transform_curve,
    weighted_hellinger_sq,
)
from misspec.measures import laplace, normal, q_of_p, scaled
from misspec.settings import boundary_margin, transform_oracle, transform_setting

means = st.floats(-2, 2)
variances = st.floats(0.4, 3)


def kl_normal(m0, v0, m1, v1):
    return 0.5 * (math.log(v1 / v0) + (v0 + (m0 - m1) ** 2) / v1 - 1)


def affinity_normal(m0, v0, m1, v1):
    return math.sqrt(2 * math.sqrt(v0 * v1) / (v0 + v1)) * math.exp(-((m0 - m1) ** 2) / (4 * (v0 + v1)))


@given(means, variances, means, variances)
def test_kl_closed_form(m0, v0, m1, v1):
    assert kl_divergence(normal(m0, v0), normal(m1, v1)) == pytest.approx(kl_normal(m0, v0, m1, v1), abs=1e-10)


@given(means, variances, means, variances)
def test_hellinger_closed_form(m0, v0, m1, v1):
    h2 = hellinger_sq(normal(m0, v0), normal(m1, v1))
    assert h2 == pytest.approx(1 - affinity_normal(m0, v0, m1, v1), abs=1e-12)
    assert 0 <= hellinger(normal(m0, v0), normal(m1, v1)) <= 1


def test_l1_unit_shift():
    # ||N(0,1) - N(1,1)||_1 = 2 (2 Phi(1/2) - 1)
    from scipy.stats import norm

    assert l1_distance(normal(0, 1), normal(1, 1)) == pytest.approx(2 * (2 * norm.cdf(0.5) - 1), abs=1e-12)


@given(means, variances, means, variances)
def test_kl_dominates_hellinger(m0, v0, m1, v1):
    # 2 h^2 <= KL in the 1/2 convention
    p, q = normal(m0, v0), normal(m1, v1)
    assert 2 * hellinger_sq(p, q) <= kl_divergence(p, q) + 1e-12


@given(st.floats(0.02, 0.98), means, variances, means, variances)
def test_hellinger_transform_gaussian(a, m0, v0, m1, v1):
    # int p^a q^(1-a) for normals
    v = 1 / (a / v0 + (1 - a) / v1)
    log_val = (
        0.5 * math.log(v) - a * 0.5 * math.log(v0) - (1 - a) * 0.5 * math.log(v1)
        - 0.5 * a * (1 - a) * (m0 - m1) ** 2 / ((1 - a) * v0 + a * v1)
    )
    assert hellinger_transform(normal(m0, v0), normal(m1, v1), a) == pytest.approx(math.exp(log_val), rel=1e-10)


def test_hellinger_transform_half_on_settings():
    # at a = 1/2 the right setting's transform equals exp(1/16 - 5/16)
    p0, q = transform_setting("right")
    assert hellinger_transform(q, p0, 0.5) == pytest.approx(transform_oracle("right", 0.5), abs=1e-12)
    assert transform_oracle("right", 0.5) == pytest.approx(math.exp(-0.25), abs=1e-15)


def test_weighted_hellinger_factor_and_equal_weights():
    p, q = normal(0, 1), normal(0.5, 1)
    # with p0 = p* the weighted distance reduces to factor * int (sqrt p - sqrt q)^2
    w = weighted_hellinger_sq(p, q, normal(0, 1), normal(0, 1), factor=0.5)
    assert w == pytest.approx(hellinger_sq(p, q), abs=1e-13)
    assert weighted_hellinger_sq(p, q, normal(0, 1), normal(0, 1)) == pytest.approx(0.5 * w, abs=1e-13)
    with pytest.raises(ValueError):
        weighted_hellinger_sq(p, q, p, p, factor=1.0)


def test_golden_section_quadratic():
    x, fx = golden_section_max(lambda t: -(t - 0.3) ** 2 + 2, 0, 1)
    assert x == pytest.approx(0.3, abs=1e-7)
    assert fx == pytest.approx(2, abs=1e-15)


@pytest.mark.parametrize("theta", [1.2, 1.5, 2.0])
def test_margin_boundary_closed_form(theta):
    # sup of a(theta - 1)(theta + 1 - a(theta - 1))/2 on a in (0,1)
    margin, a = misspec_margin(normal(0, 1), normal(theta, 1), normal(1, 1), return_alpha=True)
    grid = np.linspace(1e-6, 1 - 1e-6, 100001)
    expect = max(boundary_margin(theta, 1.0, t) for t in grid)
    assert margin == pytest.approx(expect, abs=1e-9)
    assert 0 < a < 1


def test_margin_zero_at_projection():
    assert misspec_margin(normal(0, 1), normal(1, 1), normal(1, 1)) == pytest.approx(0.0, abs=1e-14)


@given(st.floats(1.01, 3.0))
def test_margin_positive_away_from_projection(theta):
    assert misspec_margin(normal(0, 1), normal(theta, 1), normal(1, 1)) > 0


def test_min_transform_normal_pair():
    # min over a of int q^a p^(1-a) for unit shift is exp(-1/8) at a = 1/2
    val, a = min_transform(normal(0, 1), normal(1, 1))
    assert val == pytest.approx(math.exp(-1 / 8), rel=1e-12)
    assert a == pytest.approx(0.5, abs=1e-6)


@pytest.mark.parametrize("side", ["left", "right"])
def test_transform_curve_oracle(side):
    p0, q = transform_setting(side)
    c = transform_curve(p0, q, 49, include_endpoints=True)
    oracle = np.array([transform_oracle(side, a) for a in c.alphas])
    np.testing.assert_allclose(c.values, oracle, atol=1e-9)
    assert c.is_convex()


@given(means, variances, means, variances, st.floats(0.3, 3))
def test_transform_curve_convex_with_limits(m0, v0, m1, v1, c):
    p0, q = normal(m0, v0), scaled(normal(m1, v1), c)
    curve = transform_curve(p0, q, 17, include_endpoints=True)
    assert curve.is_convex()
    assert curve.left_limit == pytest.approx(1.0, abs=1e-10)
    assert curve.right_limit == pytest.approx(c, rel=1e-10)
    # slope at zero is P0 log(q/p0)
    assert curve.slope_at_zero == pytest.approx(math.log(c) - kl_normal(m0, v0, m1, v1), abs=1e-8)


def test_kl_moments_and_neighbourhood():
    p0, ps = normal(0, 1), normal(0, 1)
    m1, m2 = kl_moments(p0, normal(0.1, 1), ps)
    assert m1 == pytest.approx(0.005, abs=1e-12)
    assert m2 == pytest.approx(0.01 * 1 + 0.005**2, abs=1e-12)
    spec = KLNeighborhoodSpec(0.2, ps, p0)
    assert in_kl_neighborhood(spec, normal(0.1, 1))
    assert not in_kl_neighborhood(spec, normal(0.5, 1))


@pytest.mark.parametrize("form", ["hellinger", "log"])
def test_expansion_residual_is_second_order(form):
    p0, p, q = normal(0, 1), normal(0, 1), normal(0.3, 1)
    r1, _ = expansion_residual(p0, p, q, 0.1, form=form)
    r2, _ = expansion_residual(p0, p, q, 0.05, form=form)
    # halving alpha quarters the residual
    assert r2 / r1 == pytest.approx(0.25, rel=0.05)


def test_expansion_residual_convex_combination():
    p0, p = normal(0, 1), normal(0, 1)
    qs = [normal(0.3, 1), normal(-0.3, 1)]
    lhs, env = expansion_residual(p0, p, qs, 0.2, lambdas=[0.5, 0.5])
    assert 0 <= lhs <= 2 * env
    with pytest.raises(ValueError):
        expansion_residual(p0, p, qs, 0.2, lambdas=[0.5, 0.6])


def test_kl_envelope_regime():
    kl, sq, r1, r2 = kl_envelope_check(normal(0, 1), normal(0.05, 1), 0.5)
    assert kl == pytest.approx(0.00125, rel=1e-9)
    assert kl <= r1 and sq <= 2 * r2
    with pytest.raises(ValueError, match="small-Hellinger"):
        kl_envelope_check(normal(0, 1), scaled(normal(0, 1), 9.0), 0.5)


def test_laplace_pair_kl():
    # KL(Laplace(0,1) || Laplace(m,1)) = |m| + exp(-|m|) - 1
    m = 0.7
    p, q = laplace(0, 1), laplace(m, 1)
    from misspec.measures import default_grid

    g = default_grid(p, q, breakpoints=(0.0, m))
    assert kl_divergence(p, q, g) == pytest.approx(m + math.exp(-m) - 1, abs=1e-12)


def test_q_measure_transform_mass():
    # P0(p/p*) equals the mass of Q(P)
    p0, p, ps = normal(0, 2), normal(1.5, 1), normal(1, 1)
    q = q_of_p(p, p0, ps)
    assert hellinger_transform(q, p0, 1 - 1e-12) == pytest.approx(math.exp(1 / 4 - 5 / 8), rel=1e-9)
