import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from misspec.entropy import (
    brute_force_cover,
    covering_number,
    euclidean,
    fit_entropy_exponent,
    lemma_radius_factor,
    local_cover_for_testing,
    mixture_density_of,
    mixture_entropy_curve,
    mixture_metric_embedding,
    random_mixtures,
    sup_norm,
)
from misspec.measures import default_grid, mixture_density, normal
from misspec.projection import project_mixture

point_sets = st.integers(1, 12).flatmap(
    lambda n: arrays(np.float64, (n, 2), elements=st.floats(0, 1, allow_subnormal=False))
)


def _is_cover(points, centers, eps, d=euclidean):
    return np.all(d(np.asarray(centers), points).min(axis=0) <= eps * (1 + 1e-12))


@given(point_sets, st.floats(0.05, 0.6))
def test_greedy_is_a_cover_within_factor_two(pts, eps):
    rep = covering_number(pts, eps=eps)
    assert _is_cover(pts, rep.centers, eps)
    assert rep.n_balls <= 2 * brute_force_cover(pts, eps=eps)


def test_unit_interval_grid():
    # 11 equispaced points in [0, 1] at radius 0.05 need exactly 6 midpoint-centred balls
    pts = np.linspace(0, 1, 11)
    assert covering_number(pts, eps=0.05).n_balls == 6
    assert brute_force_cover(pts, eps=0.05) == 6


def test_sup_norm_and_custom_metric():
    pts = np.array([[0.0, 0.0], [0.1, 0.3], [0.25, 0.0]])
    assert covering_number(pts, sup_norm, eps=0.15).n_balls <= 2
    d = lambda a, b: math.sqrt(abs(a - b))
    rep = covering_number([1.0, 1.04, 1.5, 1.6], d, eps=0.33, candidates="points")
    assert rep.n_balls == 2


def test_brute_force_limit():
    with pytest.raises(ValueError):
        brute_force_cover(np.zeros((17, 1)))


def test_radius_factor():
    assert lemma_radius_factor(6, 1) == pytest.approx(1 / (4 * math.sqrt(6)))
    assert lemma_radius_factor(0.5, 1) == 0.125
    assert lemma_radius_factor(1, 0.1) == 0.05


def test_fit_entropy_exponent_recovers_power():
    eps = np.array([0.2, 0.1, 0.05, 0.02])
    c, g = fit_entropy_exponent(eps, 1.5 * np.log(1 / eps) ** 2)
    assert g == pytest.approx(2.0, abs=1e-10)
    assert c == pytest.approx(1.5, rel=1e-10)


def test_random_mixtures_on_simplex():
    W = random_mixtures(200, np.linspace(-2, 2, 11), seed=3)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((W > 0).sum(axis=1) <= 5)


def test_local_cover_normal_family_certifies():
    th = np.linspace(1, 2, 101)
    rep = local_cover_for_testing(
        list(th), lambda i: normal(float(th[i]), 1), normal(0, 1), normal(1, 1), 0.5,
        np.sqrt(th - 1), d=lambda a, b: math.sqrt(abs(a - b)), n_probe=10, seed=1,
    )
    assert rep.certified and rep.n_balls > 0
    assert min(rep.margins) >= 0.25**2


def test_local_cover_mixture_certifies():
    z = np.linspace(-2, 2, 9)
    p0 = normal(0, 2.25)
    F = project_mixture(p0, z, tol=1e-9)
    ps = mixture_density(F)
    W = np.concatenate([F.weights[None, :], random_mixtures(40, z, seed=4)])
    g = default_grid(p0, ps, normal(-12, 1), normal(12, 1))
    V = mixture_metric_embedding(W, z, p0, ps, g, 0.5)
    ds = np.linalg.norm(V - V[0], axis=1)
    for eps in (0.05, 0.1):
        rep = local_cover_for_testing(V, mixture_density_of(W, z), p0, ps, eps, ds, n_probe=10, seed=1, grid=g)
        assert rep.certified


def test_local_cover_reports_failure():
    # a ring far too wide for its radius cannot certify at eps = 0.5 under the Euclidean parameter metric
    th = np.linspace(1, 2, 101)
    rep = local_cover_for_testing(
        list(th), lambda i: normal(float(th[i]), 1), normal(0, 1), normal(1, 1), 0.5,
        th - 1 + 0.45, n_probe=5, seed=1, raise_on_failure=False,
    )
    assert not rep.certified
    with pytest.raises(ArithmeticError):
        local_cover_for_testing(
            list(th), lambda i: normal(float(th[i]), 1), normal(0, 1), normal(1, 1), 0.5,
            th - 1 + 0.45, n_probe=5, seed=1,
        )


def test_mixture_entropy_small():
    ec = mixture_entropy_curve(eps_list=(0.2, 0.1, 0.05), n_mixtures=800, seed=0)
    assert np.all(np.diff(ec.log_cover) >= 0)
    assert ec.gamma > 0
