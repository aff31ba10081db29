import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from misspec.measures import normal, q_of_p, scaled
from misspec.models import normal_location_family
from misspec.testing import (
    build_shell_cover,
    cell_margin,
    constant_test,
    factorization_check,
    iid_power_bound,
    lr_test,
    shell_test,
    tabulated_sampler,
    test_risk as risk_of,
    verify_cell,
)


def test_lr_risk_oracle():
    risk = risk_of(lr_test(normal(0, 1), normal(1, 1)), normal(0, 1), normal(1, 1))
    assert risk == pytest.approx(2 * (1 - special.ndtr(0.5)), abs=1e-10)
    assert risk <= math.exp(-1 / 8)


def test_constant_tests_have_risk_equal_to_mass():
    p, q = normal(0, 1), scaled(normal(1, 1), 0.5)
    assert risk_of(constant_test(0.0), p, q) == pytest.approx(0.5, abs=1e-12)
    assert risk_of(constant_test(1.0), p, q) == pytest.approx(1.0, abs=1e-12)


def test_test_function_range_is_checked():
    from misspec.testing import TestFunction

    bad = TestFunction(lambda s: np.full(s.shape[:-1], 2.0))
    with pytest.raises(ValueError):
        bad(np.zeros((3, 2)))


@given(st.floats(-2, 2), st.floats(0.5, 2), st.floats(-2, 2), st.floats(0.5, 2), st.floats(0.05, 0.95))
def test_lr_risk_below_every_transform(m0, v0, m1, v1, a):
    # P(p < q) + Q(p >= q) <= int p^(1-a) q^a for every a
    p, q = normal(m0, v0), normal(m1, v1)
    risk = risk_of(lr_test(p, q), p, q)
    from misspec.divergence import hellinger_transform

    assert risk <= hellinger_transform(q, p, a) + 1e-10


def test_lr_test_minimises_risk():
    p, q = normal(0, 1), normal(0.7, 1.5)
    best = risk_of(lr_test(p, q), p, q)
    for c in np.linspace(-1, 2, 13):
        from misspec.testing import TestFunction

        t = TestFunction(lambda s, c=c: (s[..., 0] > c).astype(float))
        assert risk_of(t, p, q) >= best - 1e-12


def test_iid_power_bound_at_n20():
    r = iid_power_bound(normal(0, 1), normal(1, 1), 20, n_reps=40_000, seed=5)
    assert r.bound == pytest.approx(math.exp(-2.5), rel=1e-10)
    assert r.total <= r.bound + 3 * r.stderr
    assert r.type1 == pytest.approx(1 - special.ndtr(math.sqrt(20) / 2), abs=5 * r.stderr + 1e-3)


def test_iid_power_bound_reproducible():
    a = iid_power_bound(normal(0, 1), normal(1, 1), 5, n_reps=5_000, seed=11)
    b = iid_power_bound(normal(0, 1), normal(1, 1), 5, n_reps=5_000, seed=11)
    assert a == b


def test_iid_power_bound_refuses_degenerate_weights():
    with pytest.raises(ArithmeticError, match="ESS"):
        iid_power_bound(normal(0, 1), normal(3, 1), 60, n_reps=2_000, seed=0)


def test_factorization_singleton():
    p, q = normal(0, 1), normal(1, 1)
    lhs, rhs = factorization_check(p, q, p, q, 0.5)
    assert lhs == pytest.approx(rhs, abs=1e-8)
    assert lhs == pytest.approx(math.exp(-0.25), abs=1e-8)


@given(st.floats(0.1, 0.9), st.floats(-1, 1))
def test_factorization_hull_inequality(a, shift):
    p = normal(0, 1)
    lhs, rhs = factorization_check(p, normal(shift, 1), p, [normal(1, 1), normal(-0.5, 1)], a, step=0.25)
    assert lhs <= rhs * (1 + 1e-8)


def test_cell_margin_boundary_family():
    fam = normal_location_family(1, 2.5)
    p0, pstar = normal(0, 1), normal(1, 1)
    # the margin at theta is increasing in theta, so a far cell certifies at a larger eps
    near = cell_margin((1.1, 1.2), p0, pstar, fam, n_probe=20, seed=1)
    far = cell_margin((1.8, 1.9), p0, pstar, fam, n_probe=20, seed=1)
    assert 0 < near < far
    assert verify_cell((1.8, 1.9), p0, pstar, fam, eps=0.3, j=2, n_probe=20)


def test_shell_cover_and_test_bounds():
    fam = normal_location_family(1, 2.5)
    p0, pstar = normal(0, 1), normal(1, 1)
    cover = build_shell_cover(fam, p0, pstar, 1.0, 0.3, 4, n_probe=15, seed=2)
    assert set(cover.counts) <= {1, 2, 3, 4}
    assert all(a >= 1.0 for _, cells in cover.shells for a, _ in cells)
    rep = shell_test(cover, fam, p0, pstar, 40, 2, [1.7, 2.0, 2.4], n_reps=5_000, seed=3)
    assert rep.passed
    assert rep.type1_bound <= rep.type1_bound_uniform + 1e-12
    assert set(rep.type2) == {1.7, 2.0, 2.4}


def test_tabulated_sampler_mass_and_mean():
    q = q_of_p(normal(1.5, 1), normal(0, 2), normal(1, 1))
    draw, mass = tabulated_sampler(q)
    assert mass == pytest.approx(math.exp(1 / 4 - 5 / 8), rel=1e-8)
    x = draw(np.random.default_rng(0), 200_000)
    # p p0 / p* is proportional to exp(-x^2/4 + x/2): normalised it is N(1, 2)
    assert x.mean() == pytest.approx(1.0, abs=0.02)
    assert x.var() == pytest.approx(2.0, rel=0.02)
