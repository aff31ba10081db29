"""Minimal Kullback-Leibler points for parametric, mixture and regression models."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .divergence import golden_section_max
from .measures import (
    TAIL_SDS,
    DensityHandle,
    MixingDistribution,
    QuadratureGrid,
    default_grid,
    gauss_legendre_grid,
    make_rng,
)
from .models import ParametricFamily, RegressionSpec

__all__ = [
    "ConvergenceError",
    "MixingDistribution",
    "MixtureProjection",
    "RegressionSpec",
    "coefficient_table",
    "error_cdf",
    "mixing_table",
    "mixture_gap",
    "mixture_objective",
    "npmle",
    "phi_laplace",
    "phi_quadratic_constant",
    "project_mixture",
    "project_parametric",
    "project_regression",
    "pythagoras_check",
    "regression_kl",
]


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (final residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# parametric families

def _cross_entropy_fn(p0: DensityHandle, family: ParametricFamily, grid: QuadratureGrid):
    l0 = p0.logpdf(grid.nodes)
    pos = l0 > -np.inf
    w0 = grid.weights[pos] * np.exp(l0[pos])
    ent = float(w0 @ l0[pos])
    x = grid.nodes[pos]

    def kl(theta: float) -> float:
        lp = family.density(float(theta)).logpdf(x)
        if np.any(lp == -np.inf):
            return math.inf
        return ent - float(w0 @ lp)

    return kl


def project_parametric(
    family: ParametricFamily,
    p0: DensityHandle,
    tol: float = 1e-9,
    n_scan: int = 201,
    grid: QuadratureGrid | None = None,
) -> tuple[float, float]:
    """(theta*, KL(p0, p_theta*)) over the family's closed interval.

    A coarse scan brackets the minimiser and golden-section search refines
    it; no interior stationarity is assumed, so minima at an end point come
    back exactly at that end point.
    """
    lo, hi = float(family.lower), float(family.upper)
    if not (math.isfinite(lo) and math.isfinite(hi) and hi >= lo):
        raise ValueError("family needs a finite closed interval")
    if grid is None:
        grid = default_grid(p0, family.density(lo), family.density(hi))
    kl = _cross_entropy_fn(p0, family, grid)
    thetas = np.linspace(lo, hi, n_scan) if hi > lo else np.array([lo])
    vals = np.array([kl(t) for t in thetas])
    if not np.any(np.isfinite(vals)):
        raise ValueError("KL(p0, p_theta) is infinite on the whole probe grid")
    i = int(np.argmin(vals))
    if thetas.size == 1:
        return lo, float(vals[0])
    a = thetas[max(i - 1, 0)]
    b = thetas[min(i + 1, thetas.size - 1)]
    t, neg = golden_section_max(lambda s: -kl(s), a, b, tol=tol)
    best_t, best_v = t, -neg
    for edge in (lo, hi):
        if abs(edge - t) <= 2 * tol or edge in (a, b):
            v = kl(edge)
            if v <= best_v:
                best_t, best_v = edge, v
    return float(best_t), float(best_v)


# ---------------------------------------------------------------------------
# convex Gaussian-mixture model

@dataclass
class MixtureProjection:
    F: MixingDistribution
    gap: float
    iterations: int
    objectives: list[float] = field(default_factory=list)


def _mixture_setup(p0: DensityHandle, z: np.ndarray, M: float, grid: QuadratureGrid | None):
    if grid is None:
        lo = min(p0.span[0], -M - TAIL_SDS)
        hi = max(p0.span[1], M + TAIL_SDS)
        grid = gauss_legendre_grid(math.floor(lo), math.ceil(hi))
    l0 = p0.logpdf(grid.nodes)
    pos = l0 > -np.inf
    x = grid.nodes[pos]
    w0 = grid.weights[pos] * np.exp(l0[pos])
    w0 = w0 / w0.sum()
    # kernel kept relative to a per-node scale so tails do not underflow
    d = x[:, None] - z[None, :]
    logk = -0.5 * d * d
    shift = logk.max(axis=1, keepdims=True)
    K = np.exp(logk - shift)
    const = float(w0 @ (l0[pos] + 0.5 * math.log(2 * math.pi) - shift[:, 0]))
    return K, w0, const


def project_mixture(
    p0: DensityHandle,
    grid_points,
    tol: float = 1e-6,
    max_iters: int = 200_000,
    M: float = 2.0,
    init=None,
    accelerate: bool = True,
    grid: QuadratureGrid | None = None,
    return_info: bool = False,
):
    """Minimise F -> -P0 log(p_F / p0) over mixing weights on ``grid_points``.

    Each step is the multiplicative update w_j <- w_j * P0[phi(. - z_j) / p_F].
    A multiplicative update never revives a zero weight and slows down once
    the active atoms are nearly collinear, so with ``accelerate`` each update
    is followed by a Newton step on the face of active weights, and a grid
    point with the largest gradient but zero weight is brought in by a
    Frank-Wolfe line search.  Every step is kept only if it does not raise
    the objective, so the recorded objective sequence is non-increasing.  Iteration
    stops once the duality gap max_j P0[phi(. - z_j) / p_F] - 1 is <= tol.
    """
    z = np.asarray(grid_points, dtype=float)
    if np.any(np.abs(z) > M + 1e-12):
        raise ValueError(f"grid points outside [-{M}, {M}]")
    K, w0, const = _mixture_setup(p0, z, M, grid)
    return _solve_mixture(K, w0, const, z, M, tol, max_iters, init, accelerate, return_info)


def npmle(data, grid_points, M: float = 2.0, tol: float = 1e-8, max_iters: int = 100_000) -> MixingDistribution:
    """Maximum-likelihood mixing weights on the grid: the same solver with P0 the empirical law."""
    x = np.asarray(data, dtype=float)
    z = np.asarray(grid_points, dtype=float)
    logk = -0.5 * (x[:, None] - z[None, :]) ** 2
    K = np.exp(logk - logk.max(axis=1, keepdims=True))
    w0 = np.full(x.size, 1.0 / x.size)
    return _solve_mixture(K, w0, 0.0, z, M, tol, max_iters, None, True, False)


def _solve_mixture(K, w0, const, z, M, tol, max_iters, init, accelerate, return_info):
    def objective(w):
        pf = K @ w
        if np.any(pf <= 0):
            return math.inf
        return const - float(w0 @ np.log(pf))

    def em(w):
        g = K.T @ (w0 / (K @ w))
        w_new = w * g
        return w_new / w_new.sum(), g

    def newton(w):
        # Newton step on the face of active weights; a step that would leave
        # the simplex is cut at the face boundary and zeroes the blocking
        # weight.  Kept only under a sufficient-decrease test.
        S = w > 0
        if S.sum() < 2:
            return w
        pf = K @ w
        r = w0 / pf
        grad = -(K[:, S].T @ r)
        H = K[:, S].T @ (K[:, S] * (r / pf)[:, None])
        m = int(S.sum())
        A = np.zeros((m + 1, m + 1))
        A[:m, :m] = H
        A[:m, m] = A[m, :m] = 1.0
        try:
            d = np.linalg.lstsq(A, np.concatenate([-grad, [0.0]]), rcond=1e-14)[0][:m]
        except np.linalg.LinAlgError:
            return w
        slope = float(grad @ d)
        if not slope < 0:
            return w
        ws = w[S]
        neg = d < 0
        t = 1.0
        if neg.any():
            ratios = -ws[neg] / d[neg]
            t = min(1.0, float(ratios.min()))
        f_old = objective(w)
        while t > 1e-14:
            step = ws + t * d
            step[step < 1e-14 * ws.max()] = 0.0
            cand = np.zeros_like(w)
            cand[S] = np.maximum(step, 0.0)
            cand /= cand.sum()
            f_new = objective(cand)
            if f_new <= f_old + 1e-4 * t * slope:
                return cand
            t *= 0.5
        return w

    def vertex_step(w, j):
        # line search along the direction e_j - w (a Frank-Wolfe step)
        e = np.zeros_like(w)
        e[j] = 1.0
        f = lambda t: -objective((1 - t) * w + t * e)
        t, _ = golden_section_max(f, 0.0, 1.0, tol=1e-12)
        cand = (1 - t) * w + t * e
        return cand if objective(cand) <= objective(w) else w

    w = np.full(z.size, 1.0 / z.size) if init is None else np.asarray(init, dtype=float).copy()
    if w.shape != z.shape or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise ValueError("init must be a probability vector on the grid")
    obj = objective(w)
    if not math.isfinite(obj):
        raise ValueError("-P0 log(p_F/p0) is infinite at the starting mixing distribution")
    history = [obj]
    gap = math.inf
    it = 0
    while it < max_iters:
        w1, g = em(w)
        gap = float(g.max() - 1.0)
        if gap <= tol:
            break
        it += 1
        cand = w1
        if accelerate:
            j = int(np.argmax(g))
            if w[j] == 0.0:
                cand = vertex_step(w, j)
                if objective(w1) < objective(cand):
                    cand = w1
            cand = newton(cand)
        new_obj = objective(cand)
        if new_obj > history[-1] + 1e-15 * max(1.0, abs(history[-1])):
            raise ArithmeticError(f"mixture objective increased at iteration {it}")
        history.append(new_obj)
        w = cand
    else:
        raise ConvergenceError(f"project_mixture hit max_iters={max_iters}", gap)
    w = np.where(w < 0, 0.0, w)
    F = MixingDistribution(z, w / w.sum(), M)
    if return_info:
        return MixtureProjection(F, gap, it, history)
    return F


def mixture_gap(p0: DensityHandle, F: MixingDistribution, grid: QuadratureGrid | None = None) -> np.ndarray:
    """P0[phi(. - z_j) / p_F] for every support point z_j of F."""
    K, w0, _ = _mixture_setup(p0, F.support, F.M, grid)
    return K.T @ (w0 / (K @ F.weights))


def mixture_objective(p0: DensityHandle, F: MixingDistribution, grid: QuadratureGrid | None = None) -> float:
    """-P0 log(p_F / p0)."""
    K, w0, const = _mixture_setup(p0, F.support, F.M, grid)
    return const - float(w0 @ np.log(K @ F.weights))


def mixing_table(F: MixingDistribution) -> str:
    rows = ["support,weight"] + [f"{z:.17g},{w:.17g}" for z, w in zip(F.support, F.weights)]
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# regression

def error_cdf(e0: DensityHandle):
    """(cdf, pdf) of the error law; closed form for normal and Laplace."""
    kind = e0.params[0] if e0.params else None
    if kind == "normal":
        _, m, v = e0.params
        s = math.sqrt(v)
        return (lambda t: special.ndtr((np.asarray(t) - m) / s)), e0.pdf
    if kind == "laplace":
        _, m, b = e0.params
        def cdf(t):
            u = (np.asarray(t, dtype=float) - m) / b
            return np.where(u < 0, 0.5 * np.exp(np.minimum(u, 0)), 1 - 0.5 * np.exp(-np.maximum(u, 0)))
        return cdf, e0.pdf
    if kind == "exponential":
        _, shift, rate = e0.params
        def cdf(t):
            u = np.maximum(np.asarray(t, dtype=float) - shift, 0.0)
            return -np.expm1(-rate * u)
        return cdf, e0.pdf
    lo, hi = e0.span
    xs = np.linspace(lo, hi, 200_001)
    f = e0.pdf(xs)
    c = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(xs))])
    c /= c[-1]
    return (lambda t: np.interp(t, xs, c)), e0.pdf


def _design(spec: RegressionSpec, n_mc: int, seed):
    x = spec.covariate.sample(make_rng(seed), n_mc)
    return x, spec.basis(x)


def _box_project(c, spec):
    return np.clip(c, spec.box_lower, spec.box_upper)


def project_regression(spec: RegressionSpec, n_mc: int = 20_000, seed=0, tol: float = 1e-8, max_iters: int = 100_000):
    """Coefficients of the projection f* under a Monte Carlo covariate design.

    Normal likelihood: box-constrained least squares of f0 + mu.  Laplace
    likelihood: minimiser of the average of Phi(f - f0), Phi the convex
    function nu -> E|e0 - nu| - |e0|.  Both use projected gradient descent,
    stopping when the projected-gradient step is below ``tol``.
    """
    x, B = _design(spec, n_mc, seed)
    f0x = spec.f0(x)
    G = B.T @ B / n_mc
    lam = float(np.linalg.eigvalsh(G).max())
    if spec.likelihood == "normal":
        target = f0x + spec.error_mean

        def grad(c):
            return 2.0 * B.T @ (B @ c - target) / n_mc

        L = 2.0 * lam
    else:
        cdf, pdf = error_cdf(spec.error)

        def grad(c):
            return B.T @ (2.0 * cdf(B @ c - f0x) - 1.0) / n_mc

        fmax = float(np.max(pdf(np.linspace(*spec.error.span, 20_001)))) if math.isfinite(spec.error.span[0]) else 1.0
        L = 2.0 * fmax * lam
    c = _box_project(np.zeros(spec.dim), spec)
    step = 1.0 / L
    res = math.inf
    for _ in range(max_iters):
        c_new = _box_project(c - step * grad(c), spec)
        res = float(np.linalg.norm(c_new - c) / step)
        c = c_new
        if res <= tol:
            return c
    raise ConvergenceError("project_regression did not converge", res)


def phi_laplace(nu: float, e0: DensityHandle, grid: QuadratureGrid | None = None) -> float:
    """E(|e0 - nu| - |e0|)."""
    nu = float(nu)
    if nu == 0.0:
        return 0.0
    kind = e0.params[0] if e0.params else None
    if kind == "normal":
        _, m, v = e0.params
        s = math.sqrt(v)

        def abs_mean(d):
            return s * math.sqrt(2 / math.pi) * math.exp(-d * d / (2 * v)) + d * (1 - 2 * special.ndtr(-d / s))

        return abs_mean(m - nu) - abs_mean(m)
    if kind == "laplace":
        _, m, b = e0.params

        def abs_mean(d):
            return abs(d) + b * math.exp(-abs(d) / b)

        return abs_mean(m - nu) - abs_mean(m)
    g = grid or default_grid(e0, breakpoints=(0.0, nu, *e0.span))
    f = e0.pdf(g.nodes)
    return float(g.weights @ ((np.abs(g.nodes - nu) - np.abs(g.nodes)) * f))


def phi_quadratic_constant(e0: DensityHandle, radius: float = 1.0, n: int = 2001) -> float:
    """min of Phi(nu)/nu^2 over 0 < |nu| <= radius.

    Also checks that Phi'' = 2 * density of e0 stays positive on the range.
    """
    nus = np.linspace(-radius, radius, n)
    nus = nus[nus != 0.0]
    _, pdf = error_cdf(e0)
    curv = 2.0 * pdf(nus)
    if np.any(curv <= 0):
        raise ArithmeticError("Phi'' is not positive on the scan range")
    return float(min(phi_laplace(v, e0) / (v * v) for v in nus))


def regression_kl(spec: RegressionSpec, coef, n_mc: int, seed) -> tuple[float, float]:
    """Monte Carlo estimate of -P0 log(p_f / p_f0) with its standard error."""
    rng = make_rng(seed)
    x = spec.covariate.sample(rng, n_mc)
    e = spec.error.sample(rng, n_mc)
    fx = spec.basis(x) @ np.asarray(coef, dtype=float)
    f0x = spec.f0(x)
    y = f0x + e
    vals = spec.log_error_density(y - f0x) - spec.log_error_density(y - fx)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_mc))


def pythagoras_check(f_star, spec: RegressionSpec, n_mc: int = 20_000, seed=0, max_vertices: int = 1024) -> tuple[float, float]:
    """max over box vertices f of |P0 (f - f*)(f* - f0 - mu)|, with its standard error."""
    if 2 ** spec.dim > max_vertices:
        raise ValueError("too many box vertices to enumerate")
    x, B = _design(spec, n_mc, seed)
    c = np.asarray(f_star, dtype=float)
    resid = B @ c - spec.f0(x) - spec.error_mean
    best, best_se = -1.0, 0.0
    for corner in itertools.product(*zip(spec.box_lower, spec.box_upper)):
        vals = (B @ (np.array(corner) - c)) * resid
        m = abs(float(vals.mean()))
        if m > best:
            best, best_se = m, float(vals.std(ddof=1) / math.sqrt(n_mc))
    return best, best_se


def coefficient_table(coef) -> str:
    rows = ["index,coefficient"] + [f"{i},{v:.17g}" for i, v in enumerate(np.asarray(coef, dtype=float))]
    return "\n".join(rows) + "\n"
