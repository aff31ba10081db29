"""Posteriors for parametric, mixture and regression models and their concentration.

Parametric and regression posteriors are computed on grids; the mixture
posterior uses a finite Dirichlet prior on a fixed support grid, explored by
a logistic-normal Metropolis random walk.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .divergence import kl_moments
from .measures import (
    LOG_SQRT_2PI,
    DensityHandle,
    MixingDistribution,
    default_grid,
    derive_seed,
    kernel_matrix,
    make_rng,
    mixture_density,
    normal,
)
from .models import (
    ParametricFamily,
    RegressionSpec,
    indicator_basis,
    laplace_unit_variance,
    normal_location_family,
    shifted_exponential,
)
from .projection import npmle, project_mixture

QUANTILE = 0.9
MODELS = ("parametric_interior", "parametric_boundary", "mixture", "regression_normal", "regression_laplace")


@dataclass
class PosteriorSummary:
    n: int
    tail_mass: float
    quantile_radius: float
    evidence: float
    seed: int
    median_radius: float = float("nan")
    tail_radius: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.tail_mass <= 1.0):
            raise ValueError("tail_mass outside [0, 1]")
        if self.quantile_radius < 0:
            raise ValueError("negative radius")


# ---------------------------------------------------------------------------
# grid posteriors

def normalize_log_weights(logw) -> np.ndarray:
    """exp(logw - max) normalised; an all-zero result is an error."""
    logw = np.asarray(logw, dtype=float)
    top = np.max(logw)
    if not np.isfinite(top):
        raise ArithmeticError("posterior weights are all zero: data impossible under every grid point")
    w = np.exp(logw - top)
    s = w.sum()
    if s == 0.0:
        raise ArithmeticError("posterior weights underflow to zero")
    return w / s


def grid_posterior(family: ParametricFamily, thetas, prior, data) -> np.ndarray:
    """Posterior weights on a parameter grid: prior_j * prod_i p_theta_j(X_i), normalised."""
    prior = np.asarray(prior, dtype=float)
    if np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
        raise ValueError("prior must be a probability vector")
    with np.errstate(divide="ignore"):
        logw = np.log(prior) + family.log_likelihood(np.asarray(thetas, dtype=float), data)
    return normalize_log_weights(logw)


def radius_quantile(radii, weights, level: float = QUANTILE) -> float:
    """Smallest r with posterior mass of {d <= r} >= level (ties: smallest index)."""
    radii = np.asarray(radii, dtype=float)
    order = np.argsort(radii, kind="stable")
    cum = np.cumsum(np.asarray(weights, dtype=float)[order])
    k = int(np.searchsorted(cum, level * cum[-1] * (1 - 1e-15)))
    return float(radii[order][min(k, radii.size - 1)])


def interval_mass(cell_midpoints, weights, lo: float, hi: float) -> float:
    """Mass of [lo, hi] when each weight is spread uniformly over its grid cell."""
    x = np.asarray(cell_midpoints, dtype=float)
    h = x[1] - x[0]
    left = np.clip((x + 0.5 * h - lo) / h, 0.0, 1.0)
    right = np.clip((hi - (x - 0.5 * h)) / h, 0.0, 1.0)
    return float(np.sum(np.asarray(weights) * np.clip(left + right - 1.0, 0.0, 1.0)))


def _log_diff_ndtr(a, b):
    """log(Phi(b) - Phi(a)) for a < b, accurate in both tails."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    upper = a > 0
    # upper tail: Phi(-a) - Phi(-b); lower tail: Phi(b) - Phi(a)
    hi = np.where(upper, special.log_ndtr(-a), special.log_ndtr(b))
    lo = np.where(upper, special.log_ndtr(-b), special.log_ndtr(a))
    with np.errstate(divide="ignore"):
        return hi + np.log(-np.expm1(lo - hi))


def boundary_posterior_mass(n: int, zn: float, c: float) -> float:
    """Posterior mass of [c, 2] under a uniform prior on [1, 2], N(theta, 1) model, Z_n = sqrt(n) Xbar."""
    if not 1.0 <= c <= 2.0:
        raise ValueError("c must lie in [1, 2]")
    if n < 1:
        raise ValueError("n must be positive")
    if c == 1.0:
        return 1.0
    if c == 2.0:
        return 0.0
    r = math.sqrt(n)
    num = _log_diff_ndtr(c * r - zn, 2 * r - zn)
    den = _log_diff_ndtr(r - zn, 2 * r - zn)
    return float(np.exp(num - den))


# ---------------------------------------------------------------------------
# mixture posterior

@dataclass
class MCMCConfig:
    steps: int = 6000
    burnin: int = 2000
    thin: int = 4
    proposal_scale: float = 0.3
    adapt: bool = True
    target_accept: float = 0.25


@dataclass
class MixtureDraws:
    weights: np.ndarray  # draws x grid
    support: np.ndarray
    acceptance: float
    proposal_scale: float
    M: float = 2.0

    def mixing(self, i: int) -> MixingDistribution:
        return MixingDistribution(self.support, self.weights[i] / self.weights[i].sum(), self.M)


def dirichlet_base_masses(support, total: float = 1.0, M: float = 2.0) -> np.ndarray:
    """alpha_j: total mass times the uniform-base mass of the grid cell of z_j in [-M, M]."""
    z = np.asarray(support, dtype=float)
    edges = np.concatenate([[-M], 0.5 * (z[1:] + z[:-1]), [M]])
    return total * np.diff(edges) / (2.0 * M)


def mixture_posterior(
    data,
    support,
    dirichlet_alpha,
    mcmc: MCMCConfig | None = None,
    seed=0,
    M: float = 2.0,
) -> MixtureDraws:
    """Metropolis random walk on centred log-weights targeting Dirichlet(alpha) x likelihood.

    In log-ratio coordinates the Dirichlet density carries the Jacobian
    prod w_j, so the target is prod w_j^alpha_j * prod_i p_w(X_i); a move
    w -> w' proportional to w * exp(s xi) is symmetric there.
    """
    mcmc = mcmc or MCMCConfig()
    z = np.asarray(support, dtype=float)
    alpha = np.asarray(dirichlet_alpha, dtype=float)
    if alpha.shape != z.shape or np.any(alpha <= 0):
        raise ValueError("dirichlet_alpha must be positive, one per support point")
    x = np.asarray(data, dtype=float)
    rng = make_rng(seed)
    K = kernel_matrix(x, z) if x.size else np.zeros((0, z.size))

    def loglik(w):
        return float(np.sum(np.log(K @ w))) if x.size else 0.0

    if x.size:
        start = 0.99 * npmle(x, z, M, tol=1e-6).weights + 0.01 / z.size
    else:
        start = alpha / alpha.sum()
    y = np.log(start)
    y -= y.mean()
    w = np.exp(y) / np.exp(y).sum()
    cur = loglik(w) + float(alpha @ np.log(w))
    s = mcmc.proposal_scale
    draws = []
    accepted = 0
    window_acc = 0
    for t in range(mcmc.steps):
        xi = rng.standard_normal(z.size)
        y_new = y + s * (xi - xi.mean())
        e = np.exp(y_new - y_new.max())
        w_new = e / e.sum()
        new = loglik(w_new) + float(alpha @ np.log(w_new))
        if math.log(rng.uniform()) < new - cur:
            y, w, cur = y_new, w_new, new
            accepted += t >= mcmc.burnin
            window_acc += 1
        if mcmc.adapt and t < mcmc.burnin and (t + 1) % 100 == 0:
            rate = window_acc / 100
            s *= math.exp(rate - mcmc.target_accept)
            window_acc = 0
        if t >= mcmc.burnin and (t - mcmc.burnin) % mcmc.thin == 0:
            draws.append(w.copy())
    acc = accepted / max(1, mcmc.steps - mcmc.burnin)
    if not 0.02 <= acc <= 0.95:
        raise ArithmeticError(f"acceptance rate {acc:.3f} outside [0.02, 0.95]; change proposal_scale")
    return MixtureDraws(np.array(draws), z, acc, s, M)


def weighted_hellinger_radii(draw_weights, support, p0: DensityHandle, pstar: DensityHandle, factor: float = 0.25, grid=None) -> np.ndarray:
    """(factor * int (sqrt p_F - sqrt p*)^2 p0/p*)^(1/2) for every row of weights."""
    grid = grid or default_grid(p0, pstar, normal(-2.0 - 10.0, 1.0), normal(2.0 + 10.0, 1.0))
    Kg = kernel_matrix(grid.nodes, support)
    pf = np.atleast_2d(draw_weights) @ Kg.T
    ls = pstar.logpdf(grid.nodes)
    wt = grid.weights * np.exp(p0.logpdf(grid.nodes) - ls)
    diff = np.sqrt(pf) - np.exp(0.5 * ls)[None, :]
    return np.sqrt(factor * (diff * diff) @ wt)


# ---------------------------------------------------------------------------
# regression posterior

@dataclass
class RegressionPosterior:
    coefs: np.ndarray  # grid points x dim
    weights: np.ndarray
    box_lower: np.ndarray
    box_upper: np.ndarray
    edge_mass: float

    @property
    def mean(self) -> np.ndarray:
        return self.weights @ self.coefs

    @property
    def sd(self) -> np.ndarray:
        m = self.mean
        return np.sqrt(self.weights @ (self.coefs - m) ** 2)


def _regression_loglik(spec: RegressionSpec, C: np.ndarray, x, y, chunk: int = 2048) -> np.ndarray:
    B = spec.basis(x)
    if spec.likelihood == "normal":
        G = B.T @ B
        by = B.T @ y
        quad = np.einsum("ij,jk,ik->i", C, G, C)
        return -0.5 * (float(y @ y) - 2.0 * C @ by + quad) - y.size * LOG_SQRT_2PI
    out = np.empty(C.shape[0])
    for s in range(0, C.shape[0], chunk):
        R = y[:, None] - B @ C[s:s + chunk].T
        out[s:s + chunk] = -np.abs(R).sum(axis=0)
    return out - y.size * math.log(2.0)


def _tensor(lo, hi, m):
    axes = [np.linspace(a, b, m) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1), axes


def regression_posterior(spec: RegressionSpec, x, y, points_per_axis: int = 31, zoom_sds: float = 10.0, max_zoom: int = 8) -> RegressionPosterior:
    """Uniform prior on the coefficient box, posterior on a tensor grid.

    After a pass over the whole box the grid is re-centred on mean +- zoom_sds
    posterior sds (inside the box) until it stops shrinking.  The posterior is
    log-concave in the coefficients, so a negligible mass on the outer faces
    of the final grid bounds the truncated mass; that face mass is reported.
    """
    if spec.dim > 3:
        raise ValueError("tensor-grid posterior supports at most 3 coefficients")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    lo, hi = spec.box_lower.copy(), spec.box_upper.copy()
    m = points_per_axis
    for _ in range(max_zoom + 1):
        C, _ = _tensor(lo, hi, m)
        w = normalize_log_weights(_regression_loglik(spec, C, x, y)) if y.size else np.full(C.shape[0], 1.0 / C.shape[0])
        post = RegressionPosterior(C, w, lo, hi, 0.0)
        if not y.size:
            return post
        post.edge_mass = _face_mass(w, lo, hi, spec, m)
        mu, sd = post.mean, post.sd
        span = np.maximum(sd, (hi - lo) / (4 * m))
        new_lo = np.maximum(spec.box_lower, mu - zoom_sds * span)
        new_hi = np.minimum(spec.box_upper, mu + zoom_sds * span)
        # stop once the window no longer shrinks and holds the mass
        if post.edge_mass <= FACE_MASS_TOL and np.all(new_hi - new_lo >= 0.7 * (hi - lo)):
            break
        lo, hi = new_lo, new_hi
    return post


FACE_MASS_TOL = 1e-14


def _face_mass(w, lo, hi, spec: RegressionSpec, m: int) -> float:
    """Posterior mass on grid faces that cut through the box interior."""
    idx = np.stack(np.unravel_index(np.arange(w.size), (m,) * spec.dim), axis=1)
    face = np.zeros(w.size, dtype=bool)
    for k in range(spec.dim):
        if lo[k] > spec.box_lower[k]:
            face |= idx[:, k] == 0
        if hi[k] < spec.box_upper[k]:
            face |= idx[:, k] == m - 1
    return float(w[face].sum())


def l2_gram(spec: RegressionSpec, n_mc: int = 200_000, seed=12345) -> np.ndarray:
    """E B(X) B(X)^T under the covariate law (exact for indicator bases on U(0,1))."""
    if getattr(spec.basis, "kind", None) == "indicator" and spec.covariate.params == ("uniform", 0.0, 1.0):
        return np.eye(spec.dim) / spec.dim
    x = spec.covariate.sample(make_rng(seed), n_mc)
    B = spec.basis(x)
    return B.T @ B / n_mc


def l2_radii(coefs, center, gram) -> np.ndarray:
    d = np.atleast_2d(coefs) - np.asarray(center)[None, :]
    return np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", d, gram, d), 0.0))


# ---------------------------------------------------------------------------
# evidence lower bound

@dataclass
class EvidenceCheck:
    violation_freq: float
    bound: float
    stderr: float
    prior_mass: float
    reps: int

    @property
    def passed(self) -> bool:
        return self.violation_freq <= self.bound + 3.0 * self.stderr


def kl_ball_mask(family: ParametricFamily, p0: DensityHandle, pstar: DensityHandle, eps: float, thetas) -> np.ndarray:
    """Membership of B(eps, P*; P0) for each theta, from moments on a fine grid."""
    table = np.linspace(family.lower, family.upper, 4001)
    grid = default_grid(p0, pstar, family.density(family.lower), family.density(family.upper))
    m1 = np.empty(table.size)
    m2 = np.empty(table.size)
    for i, t in enumerate(table):
        m1[i], m2[i] = kl_moments(p0, family.density(float(t)), pstar, grid)
    inside = (m1 <= eps * eps) & (m2 <= eps * eps)
    return np.interp(thetas, table, inside.astype(float)) >= 0.5


def evidence_bound_check(
    family: ParametricFamily,
    p0: DensityHandle,
    theta_star: float,
    n: int,
    eps: float,
    C: float,
    reps: int = 400,
    prior_draws: int = 100_000,
    seed=0,
) -> EvidenceCheck:
    """Frequency of evidence < Pi(B(eps)) exp(-n eps^2 (1 + C)) against 1/(C^2 n eps^2).

    Uniform prior on the family's interval; the evidence int prod (p/p*)(X_i)
    dPi is estimated by prior Monte Carlo for each simulated data set.
    """
    pstar = family.density(theta_star)
    rng = make_rng(derive_seed(seed, "prior-mass"))
    th = rng.uniform(family.lower, family.upper, prior_draws)
    hits = int(kl_ball_mask(family, p0, pstar, eps, th).sum())
    if hits < 30:
        raise ArithmeticError(f"only {hits} prior draws fell in the KL ball; use a larger eps")
    mass = hits / prior_draws
    log_thresh = math.log(mass) - n * eps * eps * (1.0 + C)
    bad = 0
    for r in range(reps):
        g = make_rng(derive_seed(seed, "evidence", r))
        x = p0.sample(g, n)
        th = g.uniform(family.lower, family.upper, prior_draws)
        ll = family.log_likelihood(th, x) - float(family.log_likelihood(np.array([theta_star]), x)[0])
        log_ev = float(special.logsumexp(ll) - math.log(prior_draws))
        bad += log_ev < log_thresh
    freq = bad / reps
    bound = 1.0 / (C * C * n * eps * eps)
    se = math.sqrt(max(bound * (1 - bound), 0.0) / reps)
    return EvidenceCheck(freq, bound, se, mass, reps)


# ---------------------------------------------------------------------------
# scenarios and rates

@dataclass(frozen=True)
class ScenarioSpec:
    model: str
    n_list: tuple
    reps: int = 8
    master_seed: int = 0
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; valid: {', '.join(MODELS)}")
        n = list(self.n_list)
        if len(n) == 0 or any(b <= a for a, b in zip(n, n[1:])):
            raise ValueError("n_list must be strictly increasing")
        if self.reps < 8:
            raise ValueError("reps must be >= 8")

    def option(self, key, default):
        return self.options.get(key, default)


def _parametric_setup(spec: ScenarioSpec):
    if spec.model == "parametric_interior":
        lo, hi = spec.option("theta_lower", -3.0), spec.option("theta_upper", 3.0)
        p0 = normal(0.0, spec.option("truth_var", 2.0))
        theta_star = 0.0
        rate = lambda n: 1.0 / math.sqrt(n)
    else:
        lo, hi = 1.0, 2.0
        p0 = normal(0.0, 1.0)
        theta_star = 1.0
        rate = lambda n: 1.0 / n
    family = normal_location_family(lo, hi)
    m = int(spec.option("grid_points", 200_001))
    h = (hi - lo) / m
    thetas = lo + h * (np.arange(m) + 0.5)
    return family, p0, theta_star, thetas, rate


def _run_parametric(spec: ScenarioSpec, n: int, seed: int) -> PosteriorSummary:
    family, p0, theta_star, thetas, rate = _parametric_setup(spec)
    x = p0.sample(make_rng(seed), n)
    prior = np.full(thetas.size, 1.0 / thetas.size)
    w = grid_posterior(family, thetas, prior, x)
    r = np.abs(thetas - theta_star)
    tail_r = spec.option("tail_factor", 3.0) * rate(n)
    ll = family.log_likelihood(thetas, x) - float(family.log_likelihood(np.array([theta_star]), x)[0])
    log_ev = float(special.logsumexp(ll) - math.log(thetas.size))
    mode = float(thetas[int(np.argmax(w))])
    mean = float(w @ thetas)
    sd = float(math.sqrt(max(w @ (thetas - mean) ** 2, 0.0)))
    q = radius_quantile(r, w)
    return PosteriorSummary(
        n=n,
        tail_mass=float(w[r >= tail_r].sum()),
        quantile_radius=q,
        evidence=math.exp(log_ev) if log_ev < 700 else math.inf,
        seed=seed,
        median_radius=radius_quantile(r, w, 0.5),
        tail_radius=tail_r,
        diagnostics={"mode": mode, "sd": sd, "sqrt_radius": math.sqrt(q), "log_evidence": log_ev},
    )


def _mixture_setup(spec: ScenarioSpec):
    M = spec.option("M", 2.0)
    z = np.linspace(-M, M, int(spec.option("support_points", 21)))
    p0 = normal(0.0, spec.option("truth_var", 2.25))
    Fstar = project_mixture(p0, z, tol=1e-9, M=M)
    return M, z, p0, Fstar


def _run_mixture(spec: ScenarioSpec, n: int, seed: int, setup=None) -> PosteriorSummary:
    M, z, p0, Fstar = setup or _mixture_setup(spec)
    x = p0.sample(make_rng(derive_seed(seed, "data")), n)
    alpha = dirichlet_base_masses(z, spec.option("base_mass", 1.0), M)
    cfg = MCMCConfig(
        steps=int(spec.option("mcmc_steps", 6000)),
        burnin=int(spec.option("mcmc_burnin", 2000)),
        thin=int(spec.option("mcmc_thin", 4)),
        proposal_scale=spec.option("proposal_scale", 0.3),
    )
    draws = mixture_posterior(x, z, alpha, cfg, derive_seed(seed, "mcmc"), M)
    pstar = mixture_density(Fstar)
    radii = weighted_hellinger_radii(draws.weights, z, p0, pstar)
    w = np.full(radii.size, 1.0 / radii.size)
    tail_r = spec.option("tail_factor", 3.0) * math.log(n) / math.sqrt(n)
    return PosteriorSummary(
        n=n,
        tail_mass=float(np.mean(radii >= tail_r)),
        quantile_radius=radius_quantile(radii, w),
        evidence=float("nan"),
        seed=seed,
        median_radius=float(np.median(radii)),
        tail_radius=tail_r,
        diagnostics={"acceptance": draws.acceptance, "proposal_scale": draws.proposal_scale},
    )


def regression_scenario_spec(spec: ScenarioSpec) -> RegressionSpec:
    k = int(spec.option("bins", 2))
    levels = np.array(spec.option("f0_levels", [0.5, -0.3, 0.2][:k]), dtype=float)
    basis = indicator_basis(k)
    f0 = lambda x: basis(x) @ levels
    bound = float(spec.option("box", 2.0))
    if spec.model == "regression_normal":
        err = laplace_unit_variance()
        return RegressionSpec(f0, err, basis, -bound * np.ones(k), bound * np.ones(k), "normal", error_mean=0.0, error_median=0.0)
    med = float(spec.option("error_median", 0.5))
    err = shifted_exponential(med - math.log(2.0))
    return RegressionSpec(f0, err, basis, -bound * np.ones(k), bound * np.ones(k), "laplace",
                          error_mean=med - math.log(2.0) + 1.0, error_median=med)


def regression_target(rspec: RegressionSpec, levels) -> np.ndarray:
    """Coefficients of f* for an indicator basis: f0 + mu (normal) or f0 + median (Laplace)."""
    shift = rspec.error_mean if rspec.likelihood == "normal" else rspec.error_median
    return np.clip(np.asarray(levels, dtype=float) + shift, rspec.box_lower, rspec.box_upper)


def _run_regression(spec: ScenarioSpec, n: int, seed: int) -> PosteriorSummary:
    rspec = regression_scenario_spec(spec)
    k = rspec.dim
    levels = np.array(spec.option("f0_levels", [0.5, -0.3, 0.2][:k]), dtype=float)
    target = regression_target(rspec, levels)
    x, y = rspec.simulate(n, make_rng(seed))
    post = regression_posterior(rspec, x, y, int(spec.option("points_per_axis", 31)))
    if post.edge_mass > 1e-10:
        raise ArithmeticError(f"posterior mass {post.edge_mass:.3g} on the zoomed grid faces")
    G = l2_gram(rspec)
    r = l2_radii(post.coefs, target, G)
    tail_r = spec.option("tail_factor", 3.0) / math.sqrt(n)
    return PosteriorSummary(
        n=n,
        tail_mass=float(post.weights[r >= tail_r].sum()),
        quantile_radius=radius_quantile(r, post.weights),
        evidence=float("nan"),
        seed=seed,
        median_radius=radius_quantile(r, post.weights, 0.5),
        tail_radius=tail_r,
        diagnostics={
            "mean_dist_target": float(l2_radii(post.mean, target, G)[0]),
            "mean_dist_f0": float(l2_radii(post.mean, levels, G)[0]),
            "mean_dist_f0_plus_mean": float(l2_radii(post.mean, levels + rspec.error_mean, G)[0]),
            "edge_mass": post.edge_mass,
        },
    )


def run_replication(spec: ScenarioSpec, n: int, rep: int, setup=None) -> PosteriorSummary:
    seed = derive_seed(spec.master_seed, f"{spec.model}/n={n}", rep)
    if spec.model.startswith("parametric"):
        return _run_parametric(spec, n, seed)
    if spec.model == "mixture":
        return _run_mixture(spec, n, seed, setup)
    return _run_regression(spec, n, seed)


def _task(args):
    spec, n, rep = args
    return run_replication(spec, n, rep)


def run_scenario(spec: ScenarioSpec, threads: int | None = None) -> list[PosteriorSummary]:
    """All (n, rep) replications, ordered by (n, rep); MISSPEC_THREADS > 1 uses processes."""
    if threads is None:
        threads = int(os.environ.get("MISSPEC_THREADS", "1"))
    jobs = [(spec, n, r) for n in spec.n_list for r in range(spec.reps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(_task, jobs))
    setup = _mixture_setup(spec) if spec.model == "mixture" else None
    return [run_replication(s, n, r, setup) for s, n, r in jobs]


@dataclass
class RateFit:
    beta: float
    intercept: float
    r2: float
    n: np.ndarray
    radius: np.ndarray
    log_ratio: np.ndarray | None = None  # radius / (log n / sqrt n) for mixtures


def rate_fit(summaries, log_rate_ratio: bool = False, attr: str = "quantile_radius") -> RateFit:
    """Least squares of log(median radius over reps) on log n."""
    by_n: dict[int, list[float]] = {}
    for s in summaries:
        by_n.setdefault(int(s.n), []).append(float(getattr(s, attr)))
    ns = np.array(sorted(by_n), dtype=float)
    if ns.size < 4:
        raise ValueError("need at least 4 distinct n")
    med = np.array([np.median(by_n[int(n)]) for n in ns])
    if np.any(med <= 0):
        raise ArithmeticError("zero posterior radius: the posterior collapsed onto a grid point; use a finer grid")
    X, Y = np.log(ns), np.log(med)
    beta, icpt = np.polyfit(X, Y, 1)
    resid = Y - (beta * X + icpt)
    ss = float(np.sum((Y - Y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / ss if ss > 0 else 1.0
    ratio = med / (np.log(ns) / np.sqrt(ns)) if log_rate_ratio else None
    return RateFit(float(beta), float(icpt), float(r2), ns, med, ratio)
