"""Property suite behind ``misspec verify``: every check returns a pass flag and a detail line."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from .bounds import check_constants
from .divergence import (
    hellinger_transform,
    misspec_margin,
    transform_curve,
    weighted_hellinger_sq,
)
from .entropy import brute_force_cover, covering_number
from .measures import (
    MixingDistribution,
    default_grid,
    derive_seed,
    make_rng,
    mixture_density,
    mixture_of,
    normal,
    q_of_p,
    scaled,
)
from .models import normal_location_family
from .posterior import boundary_posterior_mass, evidence_bound_check, grid_posterior, interval_mass
from .projection import mixture_gap, project_mixture, project_parametric
from .settings import ORACLE_LIMITS, boundary_margin, transform_oracle, transform_setting
from .testing import factorization_check, iid_power_bound, lr_test, test_risk


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _closed_form_transform(scale):
    worst = 0.0
    p0, ps = normal(0.0, 1.0), normal(1.0, 1.0)
    for theta in (1.2, 1.5, 2.0):
        p = normal(theta, 1.0)
        q = q_of_p(p, p0, ps)
        for a in np.arange(1, 10) / 10:
            num = hellinger_transform(q, p0, a)
            worst = max(worst, abs(num - math.exp(-boundary_margin(theta, 1.0, a))))
    return worst <= 1e-8, f"max abs error {worst:.3e}"


def _transform_settings(scale):
    worst = 0.0
    ok = True
    for side in ("left", "right"):
        p0, q = transform_setting(side)
        c = transform_curve(p0, q, 99)
        oracle = np.array([transform_oracle(side, a) for a in c.alphas])
        worst = max(worst, float(np.max(np.abs(c.values - oracle))))
        lim = ORACLE_LIMITS[side]
        worst = max(worst, abs(c.left_limit - lim[0]), abs(c.right_limit - lim[1]), abs(c.slope_at_zero - lim[2]))
        ok &= c.is_convex()
    return ok and worst <= 1e-6, f"max deviation {worst:.3e}, convex={ok}"


def _random_pair(rng):
    p0 = normal(float(rng.uniform(-1, 1)), float(rng.uniform(0.5, 2)))
    q = normal(float(rng.uniform(-1, 1)), float(rng.uniform(0.5, 2)))
    return p0, q


def _transform_properties(scale):
    rng = make_rng(derive_seed(0, "verify/transform"))
    n = 50 if scale == "full" else 10
    bad = 0
    for _ in range(n):
        p0, q = _random_pair(rng)
        mass = float(rng.uniform(0.5, 1.5))
        q = scaled(q, mass)
        c = transform_curve(p0, q, 33)
        if not c.is_convex():
            bad += 1
            continue
        slope_num = (hellinger_transform(p0, q, 1 - 1e-4) - c.left_limit) / 1e-4
        if abs(slope_num - c.slope_at_zero) > max(1e-3, 1e-2 * abs(c.slope_at_zero)):
            bad += 1
            continue
        # limits: P0(q > 0) = 1 at alpha -> 0 and the total mass of Q at alpha -> 1
        lim_err = max(
            abs(hellinger_transform(p0, q, 1 - 1e-8) - c.left_limit),
            abs(hellinger_transform(p0, q, 1e-8) - c.right_limit),
            abs(c.left_limit - 1.0),
            abs(c.right_limit - mass),
        )
        if lim_err > 1e-6:
            bad += 1
    return bad == 0, f"{bad} of {n} pairs failed convexity, limits or slope"


def _lr_risk(scale):
    p, q = normal(0, 1), normal(1, 1)
    risk = test_risk(lr_test(p, q), p, q)
    exact = 2 * (1 - special.ndtr(0.5))
    ok = abs(risk - exact) <= 1e-10 and risk <= math.exp(-1 / 8)
    return ok, f"risk {risk:.12f} vs {exact:.12f}"


def _iid_power(scale):
    reps = 100_000 if scale == "full" else 20_000
    r = iid_power_bound(normal(0, 1), normal(1, 1), 20, reps, derive_seed(0, "verify/power"))
    ok = r.total <= r.bound + 3 * r.stderr
    return ok, f"type1+type2 {r.total:.5f} vs bound {r.bound:.5f} (se {r.stderr:.2e})"


def _factorization(scale):
    p, q = normal(0, 1), normal(1, 1)
    lhs, rhs = factorization_check(p, q, p, q, 0.5)
    ok = abs(lhs - rhs) <= 1e-8 and abs(lhs - math.exp(-0.25)) <= 1e-8
    lhs2, rhs2 = factorization_check(p, q, p, [normal(1, 1), normal(-1, 1)], 0.5, step=0.1)
    ok &= lhs2 <= rhs2 * (1 + 1e-8)
    return ok, f"singleton {lhs:.10f}/{rhs:.10f}, hull {lhs2:.10f}<={rhs2:.10f}"


def _mixture_geometry(scale):
    z = np.linspace(-2, 2, 21)
    p0 = normal(0, 2.25)
    F = project_mixture(p0, z, tol=1e-8)
    gmax = float(mixture_gap(p0, F).max())
    ps = mixture_density(F)
    grid = default_grid(p0, ps)
    rng = make_rng(derive_seed(0, "verify/mixture"))
    n = 100 if scale == "full" else 20
    bad = 0
    for _ in range(n):
        k = int(rng.integers(1, 5))
        idx = rng.choice(z.size, k, replace=False)
        w = np.zeros(z.size)
        w[idx] = rng.dirichlet(np.ones(k))
        pf = mixture_density(MixingDistribution(z, w))
        if weighted_hellinger_sq(pf, ps, p0, ps, grid) > misspec_margin(p0, pf, ps, grid) + 1e-10:
            bad += 1
    bad_c = sum(combination_slack(p0, ps, z, rng, grid) < -1e-10 for _ in range(n))
    ok = gmax <= 1 + 1e-6 and bad == 0 and bad_c == 0
    return ok, f"max_j gradient {gmax:.9f}; {bad} of {n} margin violations; {bad_c} of {n} combination violations"


def _random_weights(z, rng):
    k = int(rng.integers(1, 5))
    w = np.zeros(z.size)
    w[rng.choice(z.size, k, replace=False)] = rng.dirichlet(np.ones(k))
    return w


def combination_slack(p0, pstar, z, rng, grid, C=6.0):
    """margin(sum_i l_i P_i) - [sum_i l_i d2(P_i, P*) - C sum_i l_i d2(P_i, P)] for random mixtures.

    d2 is a quarter of the weighted Hellinger square (factor 1/4), the halved
    distance for which the convex-combination inequality holds with C = 6.
    """
    m = int(rng.integers(1, 4))
    ps = [mixture_density(MixingDistribution(z, _random_weights(z, rng))) for _ in range(m)]
    p = mixture_density(MixingDistribution(z, _random_weights(z, rng)))
    lam = rng.dirichlet(np.ones(m))
    d2 = lambda a, b: weighted_hellinger_sq(a, b, p0, pstar, grid) / 4.0
    lhs = sum(l * (d2(pi, pstar) - C * d2(pi, p)) for l, pi in zip(lam, ps))
    mix = mixture_of(ps, lam) if m > 1 else ps[0]
    return misspec_margin(p0, mix, pstar, grid) - lhs


def _projection(scale):
    t1, _ = project_parametric(normal_location_family(1, 2), normal(0, 1))
    t2, _ = project_parametric(normal_location_family(-3, 3), normal(0, 2))
    ok = t1 == 1.0 and abs(t2) < 1e-6
    return ok, f"boundary theta*={t1!r}, interior theta*={t2:.3e}"


def _boundary_mass(scale):
    rng = make_rng(derive_seed(0, "verify/boundary"))
    fam = normal_location_family(1, 2)
    m = 10_000
    th = 1 + (np.arange(m) + 0.5) / m
    prior = np.full(m, 1 / m)
    worst = 0.0
    for _ in range(50 if scale == "full" else 10):
        n = int(rng.integers(1, 200))
        zn = float(rng.normal())
        c = float(rng.uniform(1, 2))
        x = np.full(n, zn / math.sqrt(n))
        w = grid_posterior(fam, th, prior, x)
        worst = max(worst, abs(interval_mass(th, w, c, 2.0) - boundary_posterior_mass(n, zn, c)))
    masses = [boundary_posterior_mass(n, 0.0, 1 + 2.0 / n) for n in (100, 400, 1600)]
    ok = worst <= 1e-4 and max(masses) / min(masses) < 3
    return ok, f"max grid discrepancy {worst:.2e}; masses at c=1+2/n {masses}"


def _evidence(scale):
    reps = 400 if scale == "full" else 100
    fam = normal_location_family(-3, 3)
    r1 = evidence_bound_check(fam, normal(0, 2), 0.0, 200, 0.15, 2.0, reps, 20_000, derive_seed(0, "verify/ev1"))
    r2 = evidence_bound_check(fam, normal(0, 1), 0.0, 200, 0.075, 2.0, reps, 20_000, derive_seed(0, "verify/ev2"))
    return r1.passed and r2.passed, f"misspecified {r1.violation_freq:.4f}, well-specified {r2.violation_freq:.4f}, bounds {r1.bound:.4f}/{r2.bound:.4f}"


def _harness(scale):
    r = check_constants(500 if scale == "full" else 100, seed=derive_seed(0, "verify/harness"))
    return r.passed, f"violations {r.violations}; {r.in_regime} tuples in the KL-envelope regime"


def _greedy(scale):
    rng = make_rng(derive_seed(0, "verify/greedy"))
    worst = 0.0
    for _ in range(100 if scale == "full" else 30):
        n = int(rng.integers(1, 13))
        pts = rng.uniform(0, 1, (n, int(rng.integers(1, 3))))
        eps = float(rng.uniform(0.05, 0.5))
        worst = max(worst, covering_number(pts, eps=eps).n_balls / brute_force_cover(pts, eps=eps))
    return worst <= 2.0, f"worst greedy/optimal ratio {worst:.3f}"


CHECKS: list[tuple[str, Callable]] = [
    ("closed_form_transform", _closed_form_transform),
    ("transform_settings", _transform_settings),
    ("transform_properties", _transform_properties),
    ("lr_risk", _lr_risk),
    ("iid_power", _iid_power),
    ("factorization", _factorization),
    ("mixture_geometry", _mixture_geometry),
    ("projection", _projection),
    ("boundary_mass", _boundary_mass),
    ("evidence", _evidence),
    ("inequality_harness", _harness),
    ("greedy_cover", _greedy),
]


def run_checks(scale: str = "quick", only=None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS:
        if only and name not in only:
            continue
        try:
            ok, detail = fn(scale)
        except Exception as exc:  # a crash is a failed contract, reported as such
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail))
    return out
