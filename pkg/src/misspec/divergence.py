"""Divergences, Hellinger transforms and the misspecification margin.

Conventions
-----------
* ``hellinger`` uses h^2 = 1/2 * int (sqrt p - sqrt q)^2, so h <= 1 for
  probability pairs.
* ``hellinger_transform(p0, q, a)`` is int p0^a q^(1-a).
* ``transform_curve`` and ``misspec_transform`` put the exponent on the
  alternative: a -> int q^a p0^(1-a), which for q = Q(P) equals
  P0 (p/p*)^a.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import special

from .measures import DensityHandle, QuadratureGrid, default_grid, log_integrate

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
ALPHA_DELTA = 1e-6
CONVEXITY_TOL = 1e-8


def _grid(grid, *handles):
    return grid if grid is not None else default_grid(*handles)


def _xlogy_weighted(w, logp0, diff):
    # sum of w * p0 * diff over nodes where p0 > 0
    pos = logp0 > -np.inf
    return float(np.sum(w[pos] * np.exp(logp0[pos]) * diff[pos]))


# ---------------------------------------------------------------------------
# distances

def kl_divergence(p0: DensityHandle, p: DensityHandle, grid: QuadratureGrid | None = None) -> float:
    """int p0 log(p0/p); +inf if p vanishes where p0 does not."""
    g = _grid(grid, p0, p)
    l0 = p0.logpdf(g.nodes)
    lp = p.logpdf(g.nodes)
    pos = l0 > -np.inf
    if np.any(pos & (lp == -np.inf)):
        return math.inf
    return _xlogy_weighted(g.weights, l0, l0 - np.where(pos, lp, 0.0))


def hellinger_sq(p: DensityHandle, q: DensityHandle, grid: QuadratureGrid | None = None) -> float:
    g = _grid(grid, p, q)
    d = np.exp(0.5 * p.logpdf(g.nodes)) - np.exp(0.5 * q.logpdf(g.nodes))
    return 0.5 * float(g.weights @ (d * d))


def hellinger(p: DensityHandle, q: DensityHandle, grid: QuadratureGrid | None = None) -> float:
    return math.sqrt(max(hellinger_sq(p, q, grid), 0.0))


def _crossings(p: DensityHandle, q: DensityHandle, g: QuadratureGrid, steps: int = 60) -> np.ndarray:
    """Points where p - q changes sign between grid nodes, refined by bisection."""
    x = g.nodes
    s = np.sign(p.pdf(x) - q.pdf(x))
    k = np.flatnonzero(s[:-1] * s[1:] < 0)
    a, b = x[k].copy(), x[k + 1].copy()
    sa = s[k]
    for _ in range(steps):
        m = 0.5 * (a + b)
        sm = np.sign(p.pdf(m) - q.pdf(m))
        left = sm == sa
        a = np.where(left, m, a)
        b = np.where(left, b, m)
    return 0.5 * (a + b)


def l1_distance(p: DensityHandle, q: DensityHandle, grid: QuadratureGrid | None = None) -> float:
    """int |p - q|; the default grid gets breakpoints at the crossings of p and q."""
    if grid is None:
        g0 = default_grid(p, q)
        grid = default_grid(p, q, breakpoints=tuple(_crossings(p, q, g0)))
    return float(grid.weights @ np.abs(p.pdf(grid.nodes) - q.pdf(grid.nodes)))


def weighted_hellinger_sq(
    p1: DensityHandle,
    p2: DensityHandle,
    p0: DensityHandle,
    pstar: DensityHandle,
    grid: QuadratureGrid | None = None,
    factor: float = 0.25,
) -> float:
    """factor * int (sqrt p1 - sqrt p2)^2 p0 / p*."""
    if factor not in (0.25, 0.5):
        raise ValueError("factor must be 1/4 or 1/2")
    g = _grid(grid, p1, p2, p0, pstar)
    l0 = p0.logpdf(g.nodes)
    ls = pstar.logpdf(g.nodes)
    pos = l0 > -np.inf
    if np.any(pos & (ls == -np.inf)):
        raise ValueError("p0 > 0 where p* = 0: P0 is not dominated by P*")
    lw = np.where(pos, l0 - np.where(pos, ls, 0.0), -np.inf)
    d = (np.exp(0.5 * (p1.logpdf(g.nodes) + lw)) - np.exp(0.5 * (p2.logpdf(g.nodes) + lw)))
    return factor * float(g.weights @ (d * d))


# ---------------------------------------------------------------------------
# Hellinger transforms

def log_hellinger_transform(p0: DensityHandle, q: DensityHandle, alpha: float, grid: QuadratureGrid | None = None) -> float:
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    g = _grid(grid, p0, q)
    return log_integrate(alpha * p0.logpdf(g.nodes) + (1.0 - alpha) * q.logpdf(g.nodes), g)


def hellinger_transform(p0: DensityHandle, q: DensityHandle, alpha: float, grid: QuadratureGrid | None = None) -> float:
    """int p0^alpha q^(1 - alpha)."""
    return math.exp(log_hellinger_transform(p0, q, alpha, grid))


class _MarginCurve:
    """alpha -> log P0 (p/p*)^alpha from precomputed node values."""

    def __init__(self, p0, p, pstar, grid):
        g = _grid(grid, p0, p, pstar)
        l0 = p0.logpdf(g.nodes)
        ls = pstar.logpdf(g.nodes)
        lp = p.logpdf(g.nodes)
        pos = l0 > -np.inf
        if np.any(pos & (ls == -np.inf)):
            raise ValueError("p0 > 0 where p* = 0: P0 is not dominated by P*")
        self.base = (l0 + g.log_weights)[pos]
        with np.errstate(invalid="ignore"):
            self.ratio = (lp - ls)[pos]

    def log_rho(self, alpha: float) -> float:
        if alpha == 0.0:
            terms = np.where(self.ratio > -np.inf, self.base, -np.inf)
        else:
            terms = self.base + alpha * self.ratio
        if np.all(terms == -np.inf):
            return -math.inf
        return float(special.logsumexp(terms))


def misspec_transform(p0, p, pstar, alpha: float, grid: QuadratureGrid | None = None) -> float:
    """P0 (p/p*)^alpha."""
    return math.exp(_MarginCurve(p0, p, pstar, grid).log_rho(alpha))


def golden_section_max(f, a: float, b: float, tol: float = 1e-10, max_iter: int = 200):
    """Maximiser of a unimodal f on [a, b]; returns (x, f(x))."""
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def _check_convex(values: np.ndarray, what: str):
    v = np.asarray(values, dtype=float)
    scale = max(1.0, float(np.max(np.abs(v[np.isfinite(v)]), initial=1.0)))
    second = v[:-2] - 2.0 * v[1:-1] + v[2:]
    if np.any(second < -CONVEXITY_TOL * scale):
        raise ArithmeticError(f"{what}: sampled transform is not convex (min second difference {second.min():.3g}); "
                              "quadrature grid is probably too coarse")


def misspec_margin(
    p0: DensityHandle,
    p: DensityHandle,
    pstar: DensityHandle,
    grid: QuadratureGrid | None = None,
    return_alpha: bool = False,
):
    """sup over alpha in (0,1) of -log P0 (p/p*)^alpha.

    Golden-section search on [delta, 1 - delta] plus the two endpoint probes;
    -log of a log-convex function is concave, so the search is exact up to
    tolerance.  The result is never negative: the limit at alpha = 0 is
    -log P0(p > 0) >= 0.
    """
    curve = _MarginCurve(p0, p, pstar, grid)
    if not math.isfinite(curve.log_rho(1.0)):
        raise ValueError("P0(p/p*) is not finite")
    probe = np.linspace(ALPHA_DELTA, 1.0 - ALPHA_DELTA, 17)
    _check_convex(np.exp([curve.log_rho(a) for a in probe]), "misspec_margin")
    neg = lambda a: -curve.log_rho(a)
    a_opt, best = golden_section_max(neg, ALPHA_DELTA, 1.0 - ALPHA_DELTA)
    for a in (ALPHA_DELTA, 1.0 - ALPHA_DELTA):
        v = neg(a)
        if v > best:
            a_opt, best = a, v
    if best < 0.0:
        best = max(best, -curve.log_rho(0.0), 0.0)
    return (best, a_opt) if return_alpha else best


def min_transform(p0: DensityHandle, q: DensityHandle, grid: QuadratureGrid | None = None) -> tuple[float, float]:
    """(min over alpha of int q^alpha p0^(1-alpha), minimiser)."""
    g = _grid(grid, p0, q)
    l0 = p0.logpdf(g.nodes)
    lq = q.logpdf(g.nodes)
    lw = g.log_weights

    def neg_log_rho(a):
        t = a * lq + (1.0 - a) * l0
        if np.all(t == -np.inf):
            return math.inf
        return -float(special.logsumexp(t + lw))

    a_opt, best = golden_section_max(neg_log_rho, ALPHA_DELTA, 1.0 - ALPHA_DELTA)
    return math.exp(-best), a_opt


@dataclass(frozen=True)
class TransformCurve:
    alphas: np.ndarray
    values: np.ndarray
    left_limit: float
    right_limit: float
    slope_at_zero: float

    def second_differences(self) -> np.ndarray:
        v = self.values
        return v[:-2] - 2.0 * v[1:-1] + v[2:]

    def is_convex(self, tol: float = CONVEXITY_TOL) -> bool:
        return bool(np.all(self.second_differences() >= -tol))

    def to_table(self) -> str:
        lines = ["alpha,rho"]
        lines += [f"{a:.17g},{v:.17g}" for a, v in zip(self.alphas, self.values)]
        return "\n".join(lines) + "\n"


def transform_curve(
    p0: DensityHandle,
    q: DensityHandle,
    n_alphas: int = 99,
    grid: QuadratureGrid | None = None,
    include_endpoints: bool = False,
) -> TransformCurve:
    """alpha -> int q^alpha p0^(1-alpha) on equispaced alphas, with limits and slope at 0.

    With ``include_endpoints`` the grid is [0, 1] and the end values are the
    limits ``P0(q > 0)`` and ``Q(p0 > 0)``.
    """
    if n_alphas < 8:
        raise ValueError("n_alphas must be at least 8")
    g = _grid(grid, p0, q)
    l0 = p0.logpdf(g.nodes)
    lq = q.logpdf(g.nodes)
    lw = g.log_weights
    both = (l0 > -np.inf) & (lq > -np.inf)
    left = math.exp(log_integrate(np.where(lq > -np.inf, l0, -np.inf), g))
    right = math.exp(log_integrate(np.where(l0 > -np.inf, lq, -np.inf), g))
    slope = float(np.sum(np.exp(l0[both] + lw[both]) * (lq[both] - l0[both])))
    if include_endpoints:
        alphas = np.linspace(0.0, 1.0, n_alphas)
        inner = alphas[1:-1]
    else:
        alphas = np.linspace(0.0, 1.0, n_alphas + 2)[1:-1]
        inner = alphas
    vals = []
    for a in inner:
        t = np.where(both, a * lq + (1.0 - a) * l0, -np.inf)
        vals.append(math.exp(log_integrate(t, g)))
    vals = np.array(vals)
    if include_endpoints:
        vals = np.concatenate([[left], vals, [right]])
    return TransformCurve(alphas, vals, left, right, slope)


# ---------------------------------------------------------------------------
# Kullback-Leibler neighbourhoods

def kl_moments(p0: DensityHandle, p: DensityHandle, pstar: DensityHandle, grid: QuadratureGrid | None = None):
    """(-P0 log(p/p*), P0 (log(p/p*))^2)."""
    g = _grid(grid, p0, p, pstar)
    l0 = p0.logpdf(g.nodes)
    pos = l0 > -np.inf
    lp = p.logpdf(g.nodes)[pos]
    ls = pstar.logpdf(g.nodes)[pos]
    if np.any(lp == -np.inf):
        return math.inf, math.inf
    w = g.weights[pos] * np.exp(l0[pos])
    r = lp - ls
    return float(-(w @ r)), float(w @ (r * r))


@dataclass(frozen=True, eq=False)
class KLNeighborhoodSpec:
    epsilon: float
    pstar: DensityHandle
    p0: DensityHandle
    grid: QuadratureGrid | None = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not math.isfinite(kl_divergence(self.p0, self.pstar, self.grid)):
            raise ValueError("-P0 log(p*/p0) is infinite")


def in_kl_neighborhood(spec: KLNeighborhoodSpec, p: DensityHandle, grid: QuadratureGrid | None = None) -> bool:
    m1, m2 = kl_moments(spec.p0, p, spec.pstar, grid if grid is not None else spec.grid)
    e2 = spec.epsilon ** 2
    return m1 <= e2 and m2 <= e2


# ---------------------------------------------------------------------------
# second-order expansion of alpha -> P0 (q/p)^alpha

def _as_list(q, lambdas):
    if isinstance(q, DensityHandle):
        return [q], np.array([1.0])
    lam = np.asarray(lambdas, dtype=float)
    if lam.shape != (len(q),) or np.any(lam < 0) or abs(lam.sum() - 1.0) > 1e-12:
        raise ValueError("lambdas must be a probability vector matching q")
    return list(q), lam


def expansion_residual(
    p0: DensityHandle,
    p: DensityHandle,
    q: DensityHandle | Sequence[DensityHandle],
    alpha: float,
    grid: QuadratureGrid | None = None,
    lambdas: Sequence[float] | None = None,
    form: str = "hellinger",
) -> tuple[float, float]:
    """(|1 - P0 (q/p)^a - a P0 log(p/q)|, envelope).

    ``q`` may be a list of measures with mixing weights ``lambdas``; the
    left side then uses the mixture and the envelope is the weighted sum of
    per-component terms (times 2).  ``form`` picks the envelope:

    * ``"hellinger"``: a^2 P0[(sqrt(q/p) - 1)^2 1{q > p} + log(p/q)^2 1{q <= p}];
      convex version 2 a^2 sum_i l_i P0[(sqrt(q_i/p) - 1)^2 + log(q_i/p)^2].
    * ``"log"``: a^2 P0[log(p/q)^2 ((q/p)^a 1{q > p} + 1{q <= p})];
      convex version 2 a^2 sum_i l_i P0[log(q_i/p)^2 ((q_i/p)^2 + 1)].
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if form not in ("hellinger", "log"):
        raise ValueError("form must be 'hellinger' or 'log'")
    qs, lam = _as_list(q, lambdas)
    g = _grid(grid, p0, p, *qs)
    l0 = p0.logpdf(g.nodes)
    pos = l0 > -np.inf
    w = g.weights[pos] * np.exp(l0[pos])
    lp = p.logpdf(g.nodes)[pos]
    lqs = np.stack([qi.logpdf(g.nodes)[pos] for qi in qs])
    lmix = special.logsumexp(lqs, b=lam[:, None], axis=0)
    r = lmix - lp  # log(q/p)
    lhs = abs(1.0 - float(w @ np.exp(alpha * r)) + alpha * float(w @ r))
    a2 = alpha * alpha
    if len(qs) == 1:
        up = r > 0
        if form == "hellinger":
            env = np.where(up, np.expm1(0.5 * r) ** 2, r * r)
        else:
            env = r * r * np.where(up, np.exp(alpha * r), 1.0)
        return lhs, a2 * float(w @ env)
    env = 0.0
    for li, lq in zip(lam, lqs):
        ri = lq - lp
        if form == "hellinger":
            term = np.expm1(0.5 * ri) ** 2 + ri * ri
        else:
            term = ri * ri * (np.exp(2.0 * ri) + 1.0)
        env += li * float(w @ term)
    return lhs, 2.0 * a2 * env


# ---------------------------------------------------------------------------
# KL and squared-log bounds in terms of Hellinger and L1

def _r_function(x):
    """r defined by log x = 2(sqrt x - 1) - r(x)(sqrt x - 1)^2."""
    x = np.asarray(x, dtype=float)
    s = np.sqrt(x)
    u = s - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (2.0 * u - np.log(x)) / (u * u)
    # series in u near x = 1: r = 1 - 2u/3 + u^2/2 - 2u^3/5 + ...
    series = 1.0 - 2.0 * u / 3.0 + u * u / 2.0 - 2.0 * u ** 3 / 5.0
    return np.where(np.abs(u) < 1e-3, series, direct)


@lru_cache(maxsize=None)
def increasing_range(b: float) -> float:
    """Largest e <= 1 with x -> x^b r(x) increasing on (0, e], found by a scan."""
    if b >= 1.0:
        return 1.0
    x = np.logspace(-300.0, 0.0, 30001)
    with np.errstate(over="ignore", under="ignore"):
        logv = b * np.log(x) + np.log(_r_function(x))
    dec = np.flatnonzero(np.diff(logv) < 0)
    if dec.size == 0:
        return 1.0
    return float(x[dec[0]])


def small_hellinger_threshold(b: float) -> float:
    """Upper bound on h^2 / P(p/q)^b under which both KL bounds are claimed."""
    return min(0.4, increasing_range(b) / 2.0, 4.0) ** b


def kl_envelope_check(
    p: DensityHandle,
    q: DensityHandle,
    b: float,
    grid: QuadratureGrid | None = None,
) -> tuple[float, float, float, float]:
    """(P log(p/q), P log(p/q)^2, rhs1, rhs2) for a probability p and finite q.

    With h^2 = int (sqrt p - sqrt q)^2 and L = 1 + log+(1/h)/b + log+(P(p/q)^b)/b:
    rhs1 = h^2 L + ||p - q||_1 and rhs2 = h^2 L^2.  Raises ValueError outside the
    regime 0 < h^2 < eps_b P(p/q)^b.
    """
    if not b > 0:
        raise ValueError("b must be positive")
    g = _grid(grid, p, q)
    lp = p.logpdf(g.nodes)
    lq = q.logpdf(g.nodes)
    d = np.exp(0.5 * lp) - np.exp(0.5 * lq)
    h2 = float(g.weights @ (d * d))
    if h2 == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    pos = lp > -np.inf
    if np.any(pos & (lq == -np.inf)):
        raise ValueError("q vanishes where p does not")
    wp = g.weights[pos] * np.exp(lp[pos])
    r = lp[pos] - lq[pos]  # log(p/q)
    pb = float(wp @ np.exp(b * r))
    if not (0.0 < h2 < small_hellinger_threshold(b) * pb):
        raise ValueError(f"outside the small-Hellinger regime (h^2={h2:.3g}, bound={small_hellinger_threshold(b) * pb:.3g})")
    kl = float(wp @ r)
    sqlog = float(wp @ (r * r))
    l1 = float(g.weights @ np.abs(np.exp(lp) - np.exp(lq)))
    h = math.sqrt(h2)
    L = 1.0 + max(math.log(1.0 / h), 0.0) / b + max(math.log(pb), 0.0) / b
    return kl, sqlog, h2 * L + l1, h2 * L * L
