"""Model families: parametric grids, Gaussian-mixture simplices, regression boxes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .measures import (
    LOG_SQRT_2PI,
    DensityHandle,
    MixingDistribution,
    Sampler,
    kernel_matrix,
    laplace,
    mixture_density,
    mixture_of,
    normal,
)


@dataclass(frozen=True, eq=False)
class ParametricFamily:
    """theta -> p_theta on an interval of the real line.

    ``loglik(thetas, data)`` returns sum_i log p_theta(x_i) for every theta;
    families with sufficient statistics supply a fast version.
    """

    density: Callable[[float], DensityHandle]
    lower: float
    upper: float
    label: str = ""
    loglik: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def log_likelihood(self, thetas, data) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=float)
        data = np.asarray(data, dtype=float)
        if data.size == 0:
            return np.zeros(thetas.shape)
        if self.loglik is not None:
            return self.loglik(thetas, data)
        return np.array([float(np.sum(self.density(t).logpdf(data))) for t in thetas.ravel()]).reshape(thetas.shape)

    def combination(self, thetas, lambdas) -> DensityHandle:
        """The mixture sum_i lambda_i p_{theta_i} (member of the convex hull)."""
        return mixture_of([self.density(float(t)) for t in thetas], lambdas)


def normal_location_family(lower: float, upper: float, var: float = 1.0) -> ParametricFamily:
    def loglik(thetas, x):
        n = x.size
        s1, s2 = float(x.sum()), float(x @ x)
        return -n * (0.5 * math.log(var) + LOG_SQRT_2PI) - (s2 - 2.0 * thetas * s1 + n * thetas * thetas) / (2.0 * var)

    return ParametricFamily(
        density=lambda t: normal(t, var),
        lower=lower,
        upper=upper,
        label=f"N(theta,{var:g}), theta in [{lower:g},{upper:g}]",
        loglik=loglik,
    )


@dataclass(frozen=True, eq=False)
class MixtureFamily:
    """Gaussian location mixtures with mixing distributions on a fixed grid in [-M, M]."""

    grid: np.ndarray
    M: float = 2.0

    @classmethod
    def equispaced(cls, n_points: int = 41, M: float = 2.0) -> "MixtureFamily":
        return cls(np.linspace(-M, M, n_points), M)

    def mixing(self, weights) -> MixingDistribution:
        return MixingDistribution(self.grid, np.asarray(weights, dtype=float), self.M)

    def density(self, weights) -> DensityHandle:
        return mixture_density(self.mixing(weights))

    def log_likelihood(self, weights, data) -> np.ndarray:
        """sum_i log p_F(x_i) for each row of ``weights``."""
        K = kernel_matrix(np.asarray(data, dtype=float), self.grid)
        with np.errstate(divide="ignore"):
            return np.sum(np.log(np.atleast_2d(weights) @ K.T), axis=1)


# ---------------------------------------------------------------------------
# regression

def indicator_basis(k: int) -> Callable[[np.ndarray], np.ndarray]:
    """Piecewise-constant basis on k equal bins of [0, 1]."""

    def basis(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip((x * k).astype(int), 0, k - 1)
        B = np.zeros((x.size, k))
        B[np.arange(x.size), idx] = 1.0
        return B

    basis.k = k
    basis.kind = "indicator"
    return basis


def uniform01() -> DensityHandle:
    def logf(x):
        return np.zeros(np.shape(x))

    def support(x):
        x = np.asarray(x, dtype=float)
        return (x >= 0.0) & (x <= 1.0)

    return DensityHandle(
        log_density=logf,
        support=support,
        label="U(0,1)",
        span=(0.0, 1.0),
        sample=lambda rng, n: rng.uniform(0.0, 1.0, size=n),
        params=("uniform", 0.0, 1.0),
    )


def laplace_unit_variance(loc: float = 0.0) -> DensityHandle:
    """Laplace errors scaled to variance one."""
    return laplace(loc, 1.0 / math.sqrt(2.0), label="Laplace(var=1)")


def shifted_exponential(shift: float = 0.0, rate: float = 1.0) -> DensityHandle:
    """Exp(rate) moved by ``shift``: a skewed error law whose mean and median differ."""

    def logf(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            return np.where(x >= shift, math.log(rate) - rate * (x - shift), -np.inf)

    def support(x):
        return np.asarray(x, dtype=float) >= shift

    return DensityHandle(
        log_density=logf,
        support=support,
        label=f"Exp({rate:g})+{shift:g}",
        span=(shift, shift + 40.0 / rate),
        sample=lambda rng, n: shift + rng.exponential(1.0 / rate, size=n),
        params=("exponential", float(shift), float(rate)),
    )


@dataclass(frozen=True, eq=False)
class RegressionSpec:
    """Y = f0(X) + e0 with a coefficient-box class over a fixed basis."""

    f0: Callable[[np.ndarray], np.ndarray]
    error: DensityHandle
    basis: Callable[[np.ndarray], np.ndarray]
    box_lower: np.ndarray
    box_upper: np.ndarray
    likelihood: str = "normal"
    covariate: DensityHandle = field(default_factory=uniform01)
    error_mean: float = 0.0
    error_median: float = 0.0
    f0_bound: float = 10.0

    def __post_init__(self):
        lo = np.asarray(self.box_lower, dtype=float)
        hi = np.asarray(self.box_upper, dtype=float)
        object.__setattr__(self, "box_lower", lo)
        object.__setattr__(self, "box_upper", hi)
        if self.likelihood not in ("normal", "laplace"):
            raise ValueError("likelihood must be 'normal' or 'laplace'")
        if lo.shape != hi.shape or np.any(hi < lo):
            raise ValueError("bad coefficient box")
        if np.any(np.abs(lo) > self.f0_bound) or np.any(np.abs(hi) > self.f0_bound):
            raise ValueError("coefficient box exceeds the declared uniform bound")
        probe = np.linspace(0.0, 1.0, 257)
        if np.max(np.abs(self.f0(probe))) > self.f0_bound:
            raise ValueError("f0 exceeds the declared uniform bound")

    @property
    def dim(self) -> int:
        return self.box_lower.size

    def covariate_sampler(self) -> Sampler:
        return Sampler(self.covariate)

    def log_error_density(self, r) -> np.ndarray:
        """Log-density of the working (likelihood) error model."""
        r = np.asarray(r, dtype=float)
        if self.likelihood == "normal":
            return -0.5 * r * r - LOG_SQRT_2PI
        return -np.abs(r) - math.log(2.0)

    def simulate(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        x = self.covariate.sample(rng, n)
        e = self.error.sample(rng, n)
        return x, self.f0(x) + e
