"""Covering numbers: greedy metric covers, annulus covers for testing, mixture entropy."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .divergence import misspec_margin
from .measures import (
    DensityHandle,
    MixingDistribution,
    QuadratureGrid,
    default_grid,
    derive_seed,
    kernel_matrix,
    make_rng,
    mixture_of,
)

# two distances count as equal up to this relative slack
REL_SLACK = 1e-12
MIDPOINT_LIMIT = 200


@dataclass
class CoverReport:
    """A finite cover.  ``certified`` is set only by covers for testing."""

    epsilon: float
    n_balls: int
    centers: list
    certified: bool = False
    radius_used: float = 0.0
    margins: list = field(default_factory=list)

    def to_table(self) -> str:
        rows = ["center,radius,margin"]
        for k, c in enumerate(self.centers):
            m = self.margins[k] if k < len(self.margins) else float("nan")
            cs = ";".join(f"{v:.17g}" for v in np.atleast_1d(c))
            rows.append(f"{cs},{self.radius_used:.17g},{m:.17g}")
        return "\n".join(rows) + "\n"


def _as_matrix(points) -> np.ndarray:
    a = np.asarray(points, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def euclidean(a, b) -> np.ndarray:
    """Pairwise Euclidean distances between the rows of a and b."""
    a, b = _as_matrix(a), _as_matrix(b)
    sq = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(sq, 0.0))


def sup_norm(a, b) -> np.ndarray:
    a, b = _as_matrix(a), _as_matrix(b)
    return np.max(np.abs(a[:, None, :] - b[None, :, :]), axis=2)


def _pairwise(d, a, b) -> np.ndarray:
    if d is None:
        return euclidean(a, b)
    if d is sup_norm or d is euclidean:
        return d(a, b)
    return np.array([[float(d(x, y)) for y in b] for x in a])


def _candidates(points, d, candidates):
    if isinstance(candidates, str):
        if candidates == "points":
            return points
        if candidates != "auto":
            raise ValueError("candidates must be 'auto', 'points' or an array")
        P = np.asarray(points, dtype=float) if d in (None, euclidean, sup_norm) else None
        if P is None or len(P) > MIDPOINT_LIMIT:
            return points
        P = _as_matrix(P)
        i, j = np.triu_indices(len(P), 1)
        return np.concatenate([P, 0.5 * (P[i] + P[j])])
    return candidates


def covering_number(points, d=None, eps: float = 0.1, candidates="auto") -> CoverReport:
    """Greedy farthest-point cover of a finite set at radius eps.

    The next uncovered point farthest from the current centers is covered by
    the candidate center that contains it and the most still-uncovered
    points.  Candidates default to the points themselves plus, for small
    vector sets under the built-in metrics, all pairwise midpoints.  ``d`` is
    None (Euclidean), ``sup_norm``, or any callable metric on two points.
    """
    n = len(points)
    if n == 0:
        return CoverReport(eps, 0, [], radius_used=eps)
    cand = _candidates(points, d, candidates)
    r = eps * (1.0 + REL_SLACK)
    if len(cand) * n <= 4_000_000:
        D = _pairwise(d, cand, points)
        covers = D <= r
    else:
        D = covers = None
    uncovered = np.ones(n, dtype=bool)
    nearest = np.full(n, np.inf)
    centers = []
    u = 0
    while uncovered.any():
        if covers is not None:
            choices = np.flatnonzero(covers[:, u])
            gains = covers[choices][:, uncovered].sum(axis=1)
            k = int(choices[np.argmax(gains)])
            dist = D[k]
        else:
            k = u
            dist = _pairwise(d, [cand[k]], points)[0]
        centers.append(cand[k])
        uncovered &= dist > r
        nearest = np.minimum(nearest, dist)
        if uncovered.any():
            idx = np.flatnonzero(uncovered)
            u = int(idx[np.argmax(nearest[idx])])
    if np.any(nearest > r):
        raise AssertionError("cover is not valid")
    return CoverReport(eps, len(centers), centers, radius_used=eps)


def brute_force_cover(points, d=None, eps: float = 0.1, candidates="auto") -> int:
    """Minimal number of candidate balls covering the points (exact, small sets only)."""
    n = len(points)
    if n == 0:
        return 0
    if n > 16:
        raise ValueError("brute force is limited to 16 points")
    cand = _candidates(points, d, candidates)
    covers = _pairwise(d, cand, points) <= eps * (1.0 + REL_SLACK)
    masks = sorted({int(sum(1 << i for i in np.flatnonzero(row))) for row in covers if row.any()})
    full = (1 << n) - 1
    best = {0: 0}
    frontier = [0]
    steps = 0
    while full not in best:
        steps += 1
        nxt = []
        for m in frontier:
            for c in masks:
                v = m | c
                if v not in best:
                    best[v] = steps
                    nxt.append(v)
        frontier = nxt
    return best[full]


# ---------------------------------------------------------------------------
# annulus covers for testing

def lemma_radius_factor(C: float, c: float) -> float:
    """A = 1/8 ^ 1/(4 sqrt C) ^ c/2."""
    return min(1.0 / 8.0, 1.0 / (4.0 * math.sqrt(C)), c / 2.0)


def local_cover_for_testing(
    points,
    density_of: Callable[[int], DensityHandle],
    p0: DensityHandle,
    pstar: DensityHandle,
    eps: float,
    d_star: Sequence[float],
    d=None,
    C: float = 6.0,
    c: float = 1.0,
    n_probe: int = 100,
    seed=0,
    grid: QuadratureGrid | None = None,
    raise_on_failure: bool = True,
) -> CoverReport:
    """Cover {eps < d(P, P*) < 2 eps} at radius A eps and certify each ball.

    ``points`` are the model points in the coordinates of the metric ``d``
    and ``d_star[i]`` is the distance from point i to P*.  A ball is
    certified when each of its members, and ``n_probe`` seeded random convex
    combinations of 2-3 members, has margin sup_a -log P0(p/p*)^a >= eps^2/4.
    """
    d_star = np.asarray(d_star, dtype=float)
    ring = np.flatnonzero((d_star > eps) & (d_star < 2.0 * eps))
    A = lemma_radius_factor(C, c)
    radius = A * eps
    if ring.size == 0:
        return CoverReport(eps, 0, [], certified=True, radius_used=radius)
    sub = [points[i] for i in ring] if not isinstance(points, np.ndarray) else points[ring]
    cover = covering_number(sub, d, radius, candidates="points")
    D = _pairwise(d, cover.centers, sub)
    member_sets = [ring[np.flatnonzero(row <= radius * (1 + REL_SLACK))] for row in D]
    if grid is None:
        grid = default_grid(p0, pstar, density_of(int(ring[0])))
    need = eps * eps / 4.0
    margins = []
    certified = True
    for k, members in enumerate(member_sets):
        rng = make_rng(derive_seed(seed, "local-cover", k))
        dens = {int(i): density_of(int(i)) for i in members}
        worst = min(misspec_margin(p0, h, pstar, grid) for h in dens.values())
        keys = list(dens)
        for _ in range(n_probe if len(keys) > 1 else 0):
            m = int(rng.integers(2, 4))
            pick = rng.choice(keys, size=min(m, len(keys)), replace=False)
            lam = rng.dirichlet(np.ones(pick.size))
            mix = mixture_of([dens[int(i)] for i in pick], lam)
            worst = min(worst, misspec_margin(p0, mix, pstar, grid))
        margins.append(worst)
        if worst < need:
            certified = False
            if raise_on_failure:
                raise ArithmeticError(
                    f"cell {k} around center {cover.centers[k]!r} fails certification: "
                    f"margin {worst:.4g} < eps^2/4 = {need:.4g}"
                )
    return CoverReport(eps, cover.n_balls, list(cover.centers), certified, radius, margins)


# ---------------------------------------------------------------------------
# mixture entropy

def random_mixtures(n: int, support_grid, M: float = 2.0, max_atoms: int = 5, seed=0) -> np.ndarray:
    """Weight vectors on the support grid: 1..max_atoms atoms, Dirichlet(1) weights."""
    rng = make_rng(seed)
    z = np.asarray(support_grid, dtype=float)
    W = np.zeros((n, z.size))
    for i in range(n):
        k = int(rng.integers(1, max_atoms + 1))
        idx = rng.choice(z.size, size=k, replace=False)
        W[i, idx] = rng.dirichlet(np.ones(k))
    return W


@dataclass
class EntropyCurve:
    eps: np.ndarray
    log_cover: np.ndarray
    c: float
    gamma: float

    def to_table(self) -> str:
        rows = ["eps,log_cover"] + [f"{e:.17g},{v:.17g}" for e, v in zip(self.eps, self.log_cover)]
        return "\n".join(rows) + "\n"


def fit_entropy_exponent(eps, log_cover) -> tuple[float, float]:
    """Least-squares fit of log_cover = c (log 1/eps)^gamma on points with log_cover > 0."""
    eps = np.asarray(eps, dtype=float)
    lc = np.asarray(log_cover, dtype=float)
    keep = lc > 0
    if keep.sum() < 2:
        return float("nan"), float("nan")
    X = np.log(np.log(1.0 / eps[keep]))
    Y = np.log(lc[keep])
    gamma, logc = np.polyfit(X, Y, 1)
    return float(math.exp(logc)), float(gamma)


def mixture_entropy_curve(
    M: float = 2.0,
    eps_list: Sequence[float] = (0.2, 0.1, 0.05, 0.02),
    n_support: int = 41,
    n_mixtures: int = 10_000,
    x_grid=None,
    seed=0,
) -> EntropyCurve:
    """Sup-norm covering numbers of probed Gaussian location mixtures on [-M, M]."""
    eps_list = np.asarray(eps_list, dtype=float)
    if np.any((eps_list <= 0) | (eps_list >= math.exp(-1))):
        raise ValueError("eps must lie in (0, 1/e)")
    z = np.linspace(-M, M, n_support)
    x = np.linspace(-M - 6.0, M + 6.0, 401) if x_grid is None else np.asarray(x_grid, dtype=float)
    W = random_mixtures(n_mixtures, z, M, seed=seed)
    # add the point masses so the extreme points are always present
    W = np.concatenate([np.eye(n_support), W])
    values = W @ kernel_matrix(x, z).T
    logs = np.array([math.log(covering_number(values, sup_norm, e, candidates="points").n_balls) for e in eps_list])
    c, gamma = fit_entropy_exponent(eps_list, logs)
    return EntropyCurve(eps_list, logs, c, gamma)


def mixture_metric_embedding(weights, support, p0: DensityHandle, pstar: DensityHandle, grid: QuadratureGrid, scale: float) -> np.ndarray:
    """Rows v_F with |v_F1 - v_F2| = scale * (int (sqrt p_F1 - sqrt p_F2)^2 p0/p*)^(1/2)."""
    K = kernel_matrix(grid.nodes, support)
    pf = np.atleast_2d(weights) @ K.T
    w = grid.weights * np.exp(p0.logpdf(grid.nodes) - pstar.logpdf(grid.nodes))
    return scale * np.sqrt(pf * w[None, :])


def mixture_density_of(weights, support, M: float = 2.0):
    from .measures import mixture_density

    W = np.atleast_2d(weights)
    return lambda i: mixture_density(MixingDistribution(np.asarray(support, dtype=float), W[i] / W[i].sum(), M))
