"""End-to-end acceptance criteria, one test each, at the stated tolerances.

Each test prints ``criterion <k>: PASS|FAIL <detail>``; the lines are
repeated in the terminal summary.
"""
import math
import os
import time

import numpy as np
from scipy import special

from conftest import ACCEPTANCE_LINES
from misspec import posterior as post
from misspec.bounds import CALIBRATION_SEED, check_constants
from misspec.cli import main as cli_main
from misspec.divergence import hellinger_transform, transform_curve
from misspec.entropy import (
    brute_force_cover,
    covering_number,
    local_cover_for_testing,
    mixture_density_of,
    mixture_entropy_curve,
    mixture_metric_embedding,
    random_mixtures,
)
from misspec.measures import default_grid, derive_seed, make_rng, mixture_density, normal, q_of_p
from misspec.models import normal_location_family
from misspec.projection import project_mixture
from misspec.settings import ORACLE_LIMITS, boundary_margin, transform_oracle, transform_setting
from misspec.testing import build_shell_cover, factorization_check, iid_power_bound, lr_test, shell_test
from misspec.testing import test_risk as risk_of
from misspec.verify import run_checks

THREADS = int(os.environ.get("MISSPEC_THREADS", "1"))


def record(k, ok, detail):
    line = f"criterion {k}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_criterion_01_closed_form_transform():
    t0 = time.perf_counter()
    p0, ps = normal(0, 1), normal(1, 1)
    worst = 0.0
    for theta in (1.2, 1.5, 2.0):
        q = q_of_p(normal(theta, 1), p0, ps)
        for a in np.arange(1, 10) / 10:
            worst = max(worst, abs(hellinger_transform(q, p0, a) - math.exp(-boundary_margin(theta, 1.0, a))))
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-8 and dt < 1.0, f"max error {worst:.2e}, {dt:.2f} s")


def test_criterion_02_transform_curves():
    t0 = time.perf_counter()
    worst, convex = 0.0, True
    for side in ("left", "right"):
        p0, q = transform_setting(side)
        c = transform_curve(p0, q, 99)
        worst = max(worst, max(abs(v - transform_oracle(side, a)) for a, v in zip(c.alphas, c.values)))
        lim = ORACLE_LIMITS[side]
        worst = max(worst, abs(c.left_limit - lim[0]), abs(c.right_limit - lim[1]), abs(c.slope_at_zero - lim[2]))
        convex &= c.is_convex()
    dt = time.perf_counter() - t0
    record(2, worst <= 1e-6 and convex and dt < 5.0, f"max deviation {worst:.2e}, convex={convex}, {dt:.2f} s")


def test_criterion_03_transform_properties():
    (r,) = run_checks("full", ["transform_properties"])
    record(3, r.passed, r.detail)


def test_criterion_04_testing_bounds():
    t0 = time.perf_counter()
    p, q = normal(0, 1), normal(1, 1)
    risk = risk_of(lr_test(p, q), p, q)
    ok_risk = abs(risk - 2 * (1 - special.ndtr(0.5))) <= 1e-10 and risk <= math.exp(-1 / 8)
    pw = iid_power_bound(p, q, 20, 100_000, derive_seed(0, "acceptance/power"))
    ok_pw = pw.total <= math.exp(-2.5) + 3 * pw.stderr
    fam = normal_location_family(1.0, 2.5)
    p0, pstar = normal(0, 1), normal(1, 1)
    cover = build_shell_cover(fam, p0, pstar, 1.0, 0.3, 5, seed=derive_seed(0, "acceptance/cover"))
    probes = [t for t in np.linspace(1.0, 2.5, 16) if abs(t - 1.0) > 2 * 0.3]
    rep = shell_test(cover, fam, p0, pstar, 50, 2, probes, 20_000, derive_seed(0, "acceptance/shell"))
    dt = time.perf_counter() - t0
    ok = ok_risk and ok_pw and rep.passed and dt < 120
    record(4, ok, f"risk {risk:.10f}; n=20 errors {pw.total:.5f} <= {math.exp(-2.5):.5f}+3*{pw.stderr:.1e}; "
                  f"shell type I {rep.type1:.2e} <= {rep.type1_bound:.3f}; {dt:.1f} s")


def test_criterion_05_factorization():
    p, q = normal(0, 1), normal(1, 1)
    lhs, rhs = factorization_check(p, q, p, q, 0.5)
    ok = abs(lhs - rhs) <= 1e-8
    cases = [
        ([normal(1, 1)], [normal(1, 1), normal(-1, 1)], 0.5),
        ([normal(0.5, 1), normal(-0.5, 2)], [normal(1, 1)], 0.3),
        ([normal(1, 1), normal(2, 1)], [normal(-1, 1), normal(0.5, 1.5)], 0.7),
    ]
    worst = -math.inf
    for qa, qb, a in cases:
        l2, r2 = factorization_check(p, qa, p, qb, a, step=0.1)
        worst = max(worst, l2 / r2 - 1)
    ok &= worst <= 1e-8
    record(5, ok, f"singleton |lhs-rhs| {abs(lhs - rhs):.1e}; hull max lhs/rhs-1 {worst:.1e}")


def test_criterion_06_convex_geometry():
    (r,) = run_checks("full", ["mixture_geometry"])
    record(6, r.passed, r.detail)


def test_criterion_07_evidence_bound():
    t0 = time.perf_counter()
    fam = normal_location_family(-3, 3)
    mis = post.evidence_bound_check(fam, normal(0, 2), 0.0, 200, 0.15, 2.0, 400, 20_000, derive_seed(0, "acceptance/ev-mis"))
    wel = post.evidence_bound_check(fam, normal(0, 1), 0.0, 200, 0.075, 2.0, 400, 20_000, derive_seed(0, "acceptance/ev-well"))
    dt = time.perf_counter() - t0
    record(7, mis.passed and wel.passed and dt < 180,
           f"violations {mis.violation_freq:.4f} (bound {mis.bound:.4f}) misspecified, "
           f"{wel.violation_freq:.4f} (bound {wel.bound:.4f}) well-specified; {dt:.1f} s")


def test_criterion_08_inequality_harness():
    seed = derive_seed(0, "acceptance/harness")
    assert seed != CALIBRATION_SEED
    r = check_constants(500, seed=seed)
    worst = max(r.worst.values())
    record(8, r.passed, f"500 fresh tuples, violations {sum(r.violations.values())}, worst ratio/constant {worst:.3f}")


def _rate(model, n_list, reps, **options):
    spec = post.ScenarioSpec(model, tuple(n_list), reps, 0, options)
    return post.run_scenario(spec, THREADS)


def test_criterion_09_rates():
    t0 = time.perf_counter()
    n_all = (100, 200, 400, 800, 1600, 3200, 6400)
    parts = []
    a = post.rate_fit(_rate("parametric_interior", n_all, 32))
    ok_a = -0.65 <= a.beta <= -0.35
    parts.append(f"(a) beta {a.beta:.3f}")
    b = post.rate_fit(_rate("parametric_boundary", n_all, 32))
    masses = [post.boundary_posterior_mass(n, 0.0, 1 + 2.0 / n) for n in n_all]
    ok_b = -1.2 <= b.beta <= -0.8 and max(masses) / min(masses) < 3
    parts.append(f"(b) beta {b.beta:.3f}, mass ratio {max(masses) / min(masses):.3f}")
    c = post.rate_fit(_rate("mixture", (100, 200, 400, 800), 8), log_rate_ratio=True, attr="median_radius")
    K = 1.25 * float(c.log_ratio[0])
    ok_c = bool(np.all(c.log_ratio <= K))
    parts.append(f"(c) ratios {np.round(c.log_ratio, 4).tolist()} <= K {K:.4f}")
    n_reg = (100, 200, 400, 800, 1600, 3200)
    d = post.rate_fit(_rate("regression_normal", n_reg, 16))
    ok_d = -0.7 <= d.beta <= -0.3
    parts.append(f"(d) beta {d.beta:.3f}")
    summ = _rate("regression_laplace", n_reg, 16)
    e = post.rate_fit(summ)
    last = [s.diagnostics for s in summ if s.n == n_reg[-1]]
    dist = {k: float(np.median([g[k] for g in last])) for k in ("mean_dist_target", "mean_dist_f0", "mean_dist_f0_plus_mean")}
    ok_e = -0.7 <= e.beta <= -0.3 and dist["mean_dist_target"] < 0.25 * min(dist["mean_dist_f0"], dist["mean_dist_f0_plus_mean"])
    parts.append(f"(e) beta {e.beta:.3f}, distance to f0+median {dist['mean_dist_target']:.4f} vs f0 {dist['mean_dist_f0']:.3f}")
    dt = time.perf_counter() - t0
    record(9, ok_a and ok_b and ok_c and ok_d and ok_e and dt < 1800, "; ".join(parts) + f"; {dt:.0f} s")


def test_criterion_10_entropy():
    rng = make_rng(derive_seed(0, "acceptance/greedy"))
    worst = 0.0
    for _ in range(300):
        n = int(rng.integers(1, 13))
        pts = rng.uniform(0, 1, (n, int(rng.integers(1, 3))))
        eps = float(rng.uniform(0.05, 0.5))
        worst = max(worst, covering_number(pts, eps=eps).n_balls / brute_force_cover(pts, eps=eps))
    ec = mixture_entropy_curve(seed=derive_seed(0, "acceptance/entropy"))
    th = np.linspace(1.0, 2.0, 201)
    certified = []
    for eps in (0.3, 0.5, 0.6):
        rep = local_cover_for_testing(
            list(th), lambda i: normal(float(th[i]), 1.0), normal(0, 1), normal(1, 1), eps, np.sqrt(th - 1.0),
            d=lambda x, y: math.sqrt(abs(x - y)), n_probe=30, seed=1, raise_on_failure=False,
        )
        certified.append(rep.certified)
    z = np.linspace(-2, 2, 9)
    p0 = normal(0, 2.25)
    F = project_mixture(p0, z, tol=1e-9)
    ps = mixture_density(F)
    W = np.concatenate([F.weights[None, :], random_mixtures(60, z, seed=4)])
    g = default_grid(p0, ps, normal(-12, 1), normal(12, 1))
    V = mixture_metric_embedding(W, z, p0, ps, g, 0.5)
    ds = np.linalg.norm(V - V[0], axis=1)
    for eps in (0.05, 0.1):
        rep = local_cover_for_testing(V, mixture_density_of(W, z), p0, ps, eps, ds, n_probe=100, seed=1, grid=g, raise_on_failure=False)
        certified.append(rep.certified)
    ok = worst <= 2 and 1.3 <= ec.gamma <= 2.7 and all(certified)
    record(10, ok, f"greedy/optimal worst {worst:.2f}; gamma {ec.gamma:.3f}; local covers certified {sum(certified)}/{len(certified)}")


def _outputs(d):
    out = {}
    for f in sorted(os.listdir(d)):
        lines = open(os.path.join(d, f), encoding="utf-8").read().splitlines(keepends=True)
        assert lines[0].startswith("# misspec ")
        out[f] = "".join(lines[1:])
    return out


def test_criterion_11_determinism(tmp_path, monkeypatch):
    rate_args = ["--set", "model=mixture", "--set", "n_list=100,200,400,800", "--set", "reps=8", "--seed", "17"]
    runs = {}
    for k, threads in enumerate(("1", "2")):
        monkeypatch.setenv("MISSPEC_THREADS", threads)
        cli_main(["verify", "--out", str(tmp_path / f"v{k}"), "--seed", "17"])
        cli_main(["rate", "--out", str(tmp_path / f"r{k}")] + rate_args)
        runs[k] = (_outputs(tmp_path / f"v{k}"), _outputs(tmp_path / f"r{k}"))
    same = runs[0] == runs[1]
    record(11, same, f"verify and rate outputs identical after the timestamp line across runs "
                     f"({len(runs[0][0]) + len(runs[0][1])} files; 1 vs 2 worker processes)")
