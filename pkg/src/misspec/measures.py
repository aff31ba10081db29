"""Densities, samplers, quadrature and seeded Monte Carlo.

Every density is carried in log space.  Ratios such as ``p / p*`` are formed
as ``exp(log p - log p*)`` so that powers ``(p / p*) ** alpha`` for small
``alpha`` do not lose precision to underflow.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import special

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# default quadrature: 64-node Gauss-Legendre panels of unit width
GL_ORDER = 64
PANEL_WIDTH = 1.0
TAIL_SDS = 12.0


# ---------------------------------------------------------------------------
# random numbers

def make_rng(seed) -> np.random.Generator:
    """Counter-based generator; ``seed`` may be an int or a SeedSequence."""
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master_seed: int, scenario: str = "", rep: int = 0) -> int:
    """Seed for replication ``rep`` of ``scenario``, stable across runs and platforms."""
    tag = zlib.crc32(scenario.encode("utf-8"))
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, tag, int(rep)])
    return int(ss.generate_state(2, dtype=np.uint64)[0] >> np.uint64(1))


# ---------------------------------------------------------------------------
# densities

def _everywhere(x):
    x = np.asarray(x, dtype=float)
    if x.ndim >= 2 and x.shape[-1] == 2:
        return np.ones(x.shape[:-1], dtype=bool)
    return np.ones(x.shape, dtype=bool)


@dataclass(frozen=True, eq=False)
class DensityHandle:
    """A (possibly non-probability) measure given by its log-density.

    ``span`` is the interval outside of which the density is negligible; it
    only steers the default quadrature range.  ``sample`` draws from the
    measure when it is a probability measure.
    """

    log_density: Callable[[np.ndarray], np.ndarray]
    support: Callable[[np.ndarray], np.ndarray] = _everywhere
    total_mass: float = 1.0
    label: str = ""
    span: tuple[float, float] = (-np.inf, np.inf)
    dim: int = 1
    sample: Callable[[np.random.Generator, int], np.ndarray] | None = None
    is_probability: bool = True
    params: tuple | None = None  # ("normal", mean, var) etc., when known in closed form

    def logpdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.asarray(self.support(x), dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = np.asarray(self.log_density(x), dtype=float)
        return np.where(inside, out, -np.inf)

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.logpdf(x))

    __call__ = pdf


def normal(mean: float = 0.0, var: float = 1.0, label: str | None = None) -> DensityHandle:
    sd = math.sqrt(var)
    const = -math.log(sd) - LOG_SQRT_2PI

    def logf(x):
        z = (np.asarray(x, dtype=float) - mean) / sd
        return const - 0.5 * z * z

    def draw(rng, count):
        return rng.normal(mean, sd, size=count)

    return DensityHandle(
        log_density=logf,
        label=label or f"N({mean:g},{var:g})",
        span=(mean - TAIL_SDS * sd, mean + TAIL_SDS * sd),
        sample=draw,
        params=("normal", float(mean), float(var)),
    )


def laplace(loc: float = 0.0, scale: float = 1.0, label: str | None = None) -> DensityHandle:
    const = -math.log(2.0 * scale)

    def logf(x):
        return const - np.abs(np.asarray(x, dtype=float) - loc) / scale

    def draw(rng, count):
        return rng.laplace(loc, scale, size=count)

    # exp(-40) ~ 4e-18 relative to the peak
    return DensityHandle(
        log_density=logf,
        label=label or f"Laplace({loc:g},{scale:g})",
        span=(loc - 40.0 * scale, loc + 40.0 * scale),
        sample=draw,
        params=("laplace", float(loc), float(scale)),
    )


def scaled(h: DensityHandle, factor: float, label: str | None = None) -> DensityHandle:
    """The measure ``factor * h`` (not a probability measure unless factor is 1)."""
    lf = math.log(factor)
    return DensityHandle(
        log_density=lambda x: h.log_density(x) + lf,
        support=h.support,
        total_mass=h.total_mass * factor,
        label=label or f"{factor:g}*{h.label}",
        span=h.span,
        dim=h.dim,
        sample=None,
        is_probability=False,
    )


def mixture_of(handles: Sequence[DensityHandle], weights: Sequence[float], label: str | None = None) -> DensityHandle:
    """Convex (or nonnegative) combination of measures, evaluated by logsumexp."""
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("mixture weights must be nonnegative")
    keep = [(h, wi) for h, wi in zip(handles, w) if wi > 0]
    logw = np.log([wi for _, wi in keep])
    hs = [h for h, _ in keep]

    def logf(x):
        stack = np.stack([h.logpdf(x) for h in hs])
        return special.logsumexp(stack + logw.reshape((-1,) + (1,) * (stack.ndim - 1)), axis=0)

    def support(x):
        return np.any(np.stack([np.asarray(h.support(x), dtype=bool) for h in hs]), axis=0)

    total = float(sum(wi * h.total_mass for h, wi in keep))
    lo = min(h.span[0] for h in hs)
    hi = max(h.span[1] for h in hs)
    probs = all(h.is_probability for h in hs) and abs(w.sum() - 1.0) < 1e-12
    draw = None
    if probs and all(h.sample is not None for h in hs):
        pw = np.array([wi for _, wi in keep]) / sum(wi for _, wi in keep)

        def draw(rng, count):
            comp = rng.choice(len(hs), size=count, p=pw)
            out = np.empty(count)
            for j, h in enumerate(hs):
                idx = np.flatnonzero(comp == j)
                if idx.size:
                    out[idx] = h.sample(rng, idx.size)
            return out

    return DensityHandle(
        log_density=logf,
        support=support,
        total_mass=total,
        label=label or "mix(" + ",".join(h.label for h in hs) + ")",
        span=(lo, hi),
        dim=hs[0].dim,
        sample=draw,
        is_probability=probs,
    )


def product(a: DensityHandle, b: DensityHandle) -> DensityHandle:
    """Product measure on the plane; points are arrays of shape (..., 2)."""

    def logf(x):
        x = np.asarray(x, dtype=float)
        return a.logpdf(x[..., 0]) + b.logpdf(x[..., 1])

    def support(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(a.support(x[..., 0]), bool) & np.asarray(b.support(x[..., 1]), bool)

    return DensityHandle(
        log_density=logf,
        support=support,
        total_mass=a.total_mass * b.total_mass,
        label=f"{a.label}x{b.label}",
        span=(min(a.span[0], b.span[0]), max(a.span[1], b.span[1])),
        dim=2,
        is_probability=a.is_probability and b.is_probability,
    )


# ---------------------------------------------------------------------------
# mixing distributions and Gaussian location mixtures

@dataclass(frozen=True, eq=False)
class MixingDistribution:
    """Discrete mixing measure on [-M, M]."""

    support: np.ndarray
    weights: np.ndarray
    M: float = 2.0

    def __post_init__(self):
        z = np.asarray(self.support, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "support", z)
        object.__setattr__(self, "weights", w)
        if z.shape != w.shape or z.ndim != 1:
            raise ValueError("support and weights must be 1-d arrays of equal length")
        if np.any(w < 0):
            raise ValueError("mixing weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-10:
            raise ValueError(f"mixing weights sum to {w.sum():.17g}, not 1")
        if np.any(np.abs(z) > self.M + 1e-12):
            raise ValueError(f"support points outside [-{self.M}, {self.M}]")

    @classmethod
    def point_mass(cls, z: float, M: float = 2.0) -> "MixingDistribution":
        return cls(np.array([z]), np.array([1.0]), M)

    @classmethod
    def uniform(cls, grid, M: float = 2.0) -> "MixingDistribution":
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.full(grid.size, 1.0 / grid.size), M)


def kernel_matrix(x, support) -> np.ndarray:
    """phi(x_i - z_j) as an array of shape (len(x), len(z))."""
    d = np.asarray(x, dtype=float)[:, None] - np.asarray(support, dtype=float)[None, :]
    return np.exp(-0.5 * d * d - LOG_SQRT_2PI)


def mixture_density(F: MixingDistribution) -> DensityHandle:
    """Gaussian location mixture p_F(x) = sum_j w_j phi(x - z_j)."""
    w = F.weights
    if abs(w.sum() - 1.0) > 1e-10:
        raise ValueError("mixing weights do not sum to one")
    keep = w > 0
    z = F.support[keep]
    logw = np.log(w[keep])

    def logf(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        d = flat[:, None] - z[None, :]
        out = special.logsumexp(logw[None, :] - 0.5 * d * d, axis=1) - LOG_SQRT_2PI
        return out.reshape(x.shape)

    def draw(rng, count):
        comp = rng.choice(z.size, size=count, p=w[keep] / w[keep].sum())
        return z[comp] + rng.standard_normal(count)

    return DensityHandle(
        log_density=logf,
        label=f"mixture[{z.size}]",
        span=(-F.M - TAIL_SDS, F.M + TAIL_SDS),
        sample=draw,
    )


def mixture_envelopes(M: float):
    """Upper and lower envelopes of p_F over all F supported in [-M, M]."""

    def upper(x):
        ax = np.abs(np.asarray(x, dtype=float))
        return np.exp(-0.5 * np.maximum(ax - M, 0.0) ** 2 - LOG_SQRT_2PI)

    def lower(x):
        ax = np.abs(np.asarray(x, dtype=float))
        return np.exp(-0.5 * (ax + M) ** 2 - LOG_SQRT_2PI)

    return upper, lower


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    lower: float
    upper: float
    nodes: np.ndarray
    weights: np.ndarray
    scheme: str = "gauss-legendre"

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)

    def __len__(self):
        return self.nodes.shape[0]


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gl_rule(order: int):
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def gauss_legendre_grid(
    lower: float,
    upper: float,
    order: int = GL_ORDER,
    panel_width: float = PANEL_WIDTH,
    breakpoints: Sequence[float] = (),
) -> QuadratureGrid:
    """Composite Gauss-Legendre rule; panels also split at ``breakpoints``."""
    if not upper > lower:
        raise ValueError("need upper > lower")
    n_panels = max(1, int(math.ceil((upper - lower) / panel_width - 1e-9)))
    edges = set(np.linspace(lower, upper, n_panels + 1).tolist())
    edges.update(b for b in breakpoints if lower < b < upper)
    edges = np.array(sorted(edges))
    x, w = _gl_rule(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b) + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return QuadratureGrid(float(lower), float(upper), nodes, weights, "gauss-legendre")


def trapezoid_grid(lower: float, upper: float, n: int) -> QuadratureGrid:
    nodes = np.linspace(lower, upper, n)
    h = (upper - lower) / (n - 1)
    weights = np.full(n, h)
    weights[0] = weights[-1] = 0.5 * h
    return QuadratureGrid(float(lower), float(upper), nodes, weights, "trapezoid")


def default_grid(*handles: DensityHandle, breakpoints: Sequence[float] = ()) -> QuadratureGrid:
    """Gauss-Legendre grid covering the spans of all handles, aligned to integers."""
    lo = min(h.span[0] for h in handles)
    hi = max(h.span[1] for h in handles)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("handles need a finite span for the default grid")
    return gauss_legendre_grid(math.floor(lo), math.ceil(hi), breakpoints=breakpoints)


def integrate(f: Callable[[np.ndarray], np.ndarray], grid: QuadratureGrid) -> float:
    """sum(weights * f(nodes)); a non-finite integrand value is an error."""
    vals = np.asarray(f(grid.nodes), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"integrand not finite at node x={grid.nodes[i]!r}: {vals[i]!r}")
    return float(grid.weights @ vals)


def log_integrate(log_f: np.ndarray, grid: QuadratureGrid) -> float:
    """log of the integral of exp(log_f) given log-integrand values at the nodes."""
    log_f = np.asarray(log_f, dtype=float)
    if np.all(log_f == -np.inf):
        return -np.inf
    return float(special.logsumexp(log_f + grid.log_weights))


def total_mass(h: DensityHandle, grid: QuadratureGrid | None = None) -> float:
    grid = grid or default_grid(h)
    return math.exp(log_integrate(h.logpdf(grid.nodes), grid))


# ---------------------------------------------------------------------------
# Monte Carlo

@dataclass(frozen=True, eq=False)
class Sampler:
    target: DensityHandle

    def __post_init__(self):
        if self.target.sample is None or not self.target.is_probability:
            raise ValueError(f"{self.target.label} is not a samplable probability measure")

    def draw(self, seed, count: int) -> np.ndarray:
        return self.target.sample(make_rng(seed), count)


def mc_expectation(s: Sampler, f: Callable[[np.ndarray], np.ndarray], n: int, seed) -> tuple[float, float]:
    """Sample mean of f over n draws and its standard error."""
    if n < 2:
        raise ValueError("need n >= 2")
    vals = np.asarray(f(s.draw(seed, n)), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        raise ValueError(f"non-finite integrand at draw index {int(np.flatnonzero(bad)[0])}")
    mean = float(vals.mean())
    if np.all(vals == vals[0]):
        return mean, 0.0
    return mean, float(vals.std(ddof=1) / math.sqrt(n))


# ---------------------------------------------------------------------------
# the measures Q(P)

def q_of_p(
    p: DensityHandle,
    p0: DensityHandle,
    pstar: DensityHandle,
    grid: QuadratureGrid | None = None,
) -> DensityHandle:
    """The finite measure with density p * p0 / p* (zero where p0 vanishes)."""
    grid = grid or default_grid(p, p0, pstar)
    l0 = p0.logpdf(grid.nodes)
    ls = pstar.logpdf(grid.nodes)
    bad = (l0 > -np.inf) & (ls == -np.inf)
    if bad.any():
        x = grid.nodes[np.flatnonzero(bad)[0]]
        raise ValueError(f"p0 > 0 where p* = 0 (at x={x!r}): P0 is not dominated by P*")

    def logf(x):
        lp0 = p0.logpdf(x)
        with np.errstate(invalid="ignore"):
            out = p.logpdf(x) + lp0 - pstar.logpdf(x)
        return np.where(lp0 == -np.inf, -np.inf, out)

    q = DensityHandle(
        log_density=logf,
        support=p0.support,
        label=f"Q({p.label})",
        span=(min(p.span[0], p0.span[0]), max(p.span[1], p0.span[1])),
        dim=p0.dim,
        is_probability=False,
    )
    mass = math.exp(log_integrate(q.logpdf(grid.nodes), grid))
    return DensityHandle(
        log_density=q.log_density,
        support=q.support,
        total_mass=mass,
        label=q.label,
        span=q.span,
        dim=q.dim,
        is_probability=False,
    )
