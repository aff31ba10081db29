"""Likelihood-ratio tests, their risks, and Hellinger-transform error bounds."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .divergence import misspec_margin, min_transform
from .measures import (
    DensityHandle,
    QuadratureGrid,
    default_grid,
    derive_seed,
    gauss_legendre_grid,
    make_rng,
    q_of_p,
)
from .models import ParametricFamily

MIN_ESS = 50.0


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A test phi: sample vectors (last axis = observations) -> [0, 1]."""

    __test__ = False  # not a pytest class

    decide: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, samples) -> np.ndarray:
        out = np.asarray(self.decide(np.asarray(samples, dtype=float)), dtype=float)
        if np.any((out < 0) | (out > 1)):
            raise ValueError(f"test '{self.description}' left [0, 1]")
        return out

    def pointwise(self, x) -> np.ndarray:
        """The test applied to single observations x."""
        x = np.asarray(x, dtype=float)
        return self(x[..., None])


def _log_ratio_sum(p: DensityHandle, q: DensityHandle, samples: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        d = q.logpdf(samples) - p.logpdf(samples)
    # q > 0 = p counts as +inf, both zero as a tie
    d = np.where(np.isnan(d), 0.0, d)
    return d.sum(axis=-1)


def lr_test(p: DensityHandle, q: DensityHandle) -> TestFunction:
    """phi = 1{prod p(x_i) < prod q(x_i)}; ties decide 0."""
    return TestFunction(
        decide=lambda s: (_log_ratio_sum(p, q, s) > 0).astype(float),
        description=f"LR {p.label} vs {q.label}",
    )


def constant_test(value: float) -> TestFunction:
    return TestFunction(decide=lambda s: np.full(s.shape[:-1], float(value)), description=f"phi={value:g}")


def _switch_points(t: TestFunction, lo: float, hi: float, n_scan: int = 20001, xtol: float = 1e-14):
    xs = np.linspace(lo, hi, n_scan)
    v = t.pointwise(xs)
    idx = np.flatnonzero(v[1:] != v[:-1])
    points = []
    for i in idx:
        a, b = xs[i], xs[i + 1]
        va = v[i]
        while b - a > xtol * max(1.0, abs(a)):
            m = 0.5 * (a + b)
            if t.pointwise(np.array([m]))[0] == va:
                a = m
            else:
                b = m
        points.append(0.5 * (a + b))
    return points


def test_risk(t: TestFunction, p0: DensityHandle, q: DensityHandle, grid: QuadratureGrid | None = None) -> float:
    """int p0 * phi + int q * (1 - phi) for a single-observation test.

    Jumps of phi are located by scanning and bisection and become panel
    breakpoints, so indicator tests are integrated to quadrature accuracy.
    """
    if grid is None:
        base = default_grid(p0, q)
        cuts = _switch_points(t, base.lower, base.upper)
        grid = gauss_legendre_grid(base.lower, base.upper, breakpoints=cuts)
    phi = t.pointwise(grid.nodes)
    return float(grid.weights @ (p0.pdf(grid.nodes) * phi + q.pdf(grid.nodes) * (1.0 - phi)))


test_risk.__test__ = False


@dataclass(frozen=True)
class PowerEstimate:
    type1: float
    type2: float
    bound: float
    stderr: float  # of type1 + type2
    ess: float
    n: int

    @property
    def total(self) -> float:
        return self.type1 + self.type2


def iid_power_bound(
    p0: DensityHandle,
    q: DensityHandle,
    n: int,
    n_reps: int = 100_000,
    seed=0,
    grid: QuadratureGrid | None = None,
    chunk: int = 20_000,
) -> PowerEstimate:
    """Errors of the n-sample test 1{prod p0 < prod q} against (min_a rho_a)^n.

    Type I is plain Monte Carlo under P0^n.  Type II, Q^n(1 - phi), is
    importance sampled from P0^n with weights prod(q/p0), which are at most
    one on the acceptance region.
    """
    rho, _ = min_transform(p0, q, grid)
    bound = rho ** n
    rng = make_rng(seed)
    vals = np.empty(n_reps)
    w2 = np.empty(n_reps)
    done = 0
    while done < n_reps:
        m = min(chunk, n_reps - done)
        x = p0.sample(rng, m * n).reshape(m, n)
        llr = _log_ratio_sum(p0, q, x)
        phi = (llr > 0).astype(float)
        w = np.where(llr > 0, 0.0, np.exp(np.minimum(llr, 0.0)))
        vals[done:done + m] = phi + w
        w2[done:done + m] = w
        done += m
    ess = float(w2.sum() ** 2 / np.sum(w2 * w2)) if np.any(w2 > 0) else 0.0
    if ess < MIN_ESS:
        raise ArithmeticError(f"importance-sampling ESS {ess:.1f} < {MIN_ESS:g}; use a smaller n")
    type2 = float(w2.mean())
    total = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(n_reps))
    return PowerEstimate(total - type2, type2, bound, se, ess, n)


# ---------------------------------------------------------------------------
# products of measures

def _hull_rho(p0a, qa_list, p0b, qb_list, alpha, ga, gb, step):
    """sup over the convex hull of {qa_i x qb_j} of rho_alpha(p0a x p0b, .) on a weight grid."""
    la = p0a.logpdf(ga.nodes)
    lb = p0b.logpdf(gb.nodes)
    base = np.exp(alpha * (la[:, None] + lb[None, :])) * (ga.weights[:, None] * gb.weights[None, :])
    comps = [np.outer(qa.pdf(ga.nodes), qb.pdf(gb.nodes)) for qa in qa_list for qb in qb_list]
    k = len(comps)
    if k == 1:
        return float(np.sum(base * comps[0] ** (1 - alpha)))
    m = int(round(1 / step))
    best = -math.inf
    for c in itertools.product(range(m + 1), repeat=k - 1):
        if sum(c) > m:
            continue
        lam = np.array(list(c) + [m - sum(c)], dtype=float) / m
        mix = sum(l * comp for l, comp in zip(lam, comps) if l > 0)
        best = max(best, float(np.sum(base * mix ** (1 - alpha))))
    return best


def _hull_rho_1d(p0, q_list, alpha, g, step):
    l0 = p0.logpdf(g.nodes)
    comps = [q.pdf(g.nodes) for q in q_list]
    if len(comps) == 1:
        return float(g.weights @ (np.exp(alpha * l0) * comps[0] ** (1 - alpha)))
    lams = np.linspace(0, 1, int(round(1 / step)) + 1)
    best = -math.inf
    for c in itertools.product(lams, repeat=len(comps) - 1):
        if sum(c) > 1 + 1e-12:
            continue
        lam = list(c) + [1 - sum(c)]
        mix = sum(l * comp for l, comp in zip(lam, comps))
        best = max(best, float(g.weights @ (np.exp(alpha * l0) * mix ** (1 - alpha))))
    return best


def factorization_check(
    p0a: DensityHandle,
    qa,
    p0b: DensityHandle,
    qb,
    alpha: float,
    grids: tuple[QuadratureGrid, QuadratureGrid] | None = None,
    step: float = 0.05,
    order: int = 24,
) -> tuple[float, float]:
    """(rho of the product pair, product of the coordinate rhos).

    ``qa`` and ``qb`` may be single measures or lists of generators; for
    lists both sides take the supremum over convex hulls, the left one over
    the hull of all product generators, scanned on a weight grid of ``step``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    qa_list = list(qa) if isinstance(qa, (list, tuple)) else [qa]
    qb_list = list(qb) if isinstance(qb, (list, tuple)) else [qb]
    if grids is None:
        ha = default_grid(p0a, *qa_list)
        hb = default_grid(p0b, *qb_list)
        grids = (gauss_legendre_grid(ha.lower, ha.upper, order=order), gauss_legendre_grid(hb.lower, hb.upper, order=order))
    ga, gb = grids
    lhs = _hull_rho(p0a, qa_list, p0b, qb_list, alpha, ga, gb, step)
    rhs = _hull_rho_1d(p0a, qa_list, alpha, ga, step) * _hull_rho_1d(p0b, qb_list, alpha, gb, step)
    return lhs, rhs


# ---------------------------------------------------------------------------
# cells, shells and aggregated tests

def _probe_members(cell, family: ParametricFamily, n_probe: int, rng):
    a, b = float(cell[0]), float(cell[1])
    probes = [family.density(a)]
    if b > a:
        probes.append(family.density(b))
    while len(probes) < n_probe:
        k = int(rng.integers(1, 4))
        thetas = rng.uniform(a, b, size=k)
        if k == 1:
            probes.append(family.density(float(thetas[0])))
        else:
            probes.append(family.combination(thetas, rng.dirichlet(np.ones(k))))
    return probes


def cell_margin(cell, p0, pstar, family: ParametricFamily, n_probe: int = 100, seed=0, grid=None) -> float:
    """Smallest margin sup_a -log P0(p/p*)^a over probes of the cell's convex hull."""
    rng = make_rng(seed)
    probes = _probe_members(cell, family, n_probe, rng)
    grid = grid or default_grid(p0, pstar, family.density(float(cell[0])), family.density(float(cell[1])))
    return min(misspec_margin(p0, p, pstar, grid) for p in probes)


def verify_cell(cell, p0, pstar, family: ParametricFamily, eps: float, j: int = 1, n_probe: int = 100, seed=0, grid=None) -> bool:
    """True iff every probe of the cell has margin >= j^2 eps^2 / 4."""
    return cell_margin(cell, p0, pstar, family, n_probe, seed, grid) >= j * j * eps * eps / 4.0


@dataclass(frozen=True)
class ShellCover:
    """Cells (parameter intervals) covering the shells j*eps < d <= (j+1)*eps."""

    epsilon: float
    shells: tuple[tuple[int, tuple[tuple[float, float], ...]], ...]
    theta_star: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    @property
    def counts(self) -> dict[int, int]:
        return {j: len(cells) for j, cells in self.shells}

    def to_table(self) -> str:
        rows = ["j,lower,upper"]
        for j, cells in self.shells:
            rows += [f"{j},{a:.17g},{b:.17g}" for a, b in cells]
        return "\n".join(rows) + "\n"


def build_shell_cover(
    family: ParametricFamily,
    p0: DensityHandle,
    pstar: DensityHandle,
    theta_star: float,
    eps: float,
    n_shells: int,
    n_probe: int = 40,
    max_depth: int = 8,
    seed=0,
) -> ShellCover:
    """Shells by parameter distance |theta - theta*|, cells bisected until they certify."""
    grid = default_grid(p0, pstar, family.density(family.lower), family.density(family.upper))
    shells = []
    for j in range(1, n_shells + 1):
        cells = []
        for side in (-1, 1):
            lo = theta_star + side * j * eps
            hi = theta_star + side * (j + 1) * eps
            a, b = sorted((lo, hi))
            a, b = max(a, family.lower), min(b, family.upper)
            if b <= a:
                continue
            stack = [(a, b, 0)]
            while stack:
                a, b, depth = stack.pop()
                if verify_cell((a, b), p0, pstar, family, eps, j, n_probe, derive_seed(seed, "cell", len(cells)), grid):
                    cells.append((a, b))
                elif depth < max_depth:
                    m = 0.5 * (a + b)
                    stack += [(m, b, depth + 1), (a, m, depth + 1)]
                else:
                    raise ArithmeticError(f"cell [{a:.6g}, {b:.6g}] in shell {j} does not certify")
        if cells:
            shells.append((j, tuple(sorted(cells))))
    return ShellCover(eps, tuple(shells), theta_star)


def tabulated_sampler(h: DensityHandle, n_table: int = 200_001):
    """Inverse-CDF sampler for the normalised version of a 1-d measure, and its total mass."""
    lo, hi = h.span
    xs = np.linspace(lo, hi, n_table)
    f = h.pdf(xs)
    c = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(xs))])
    mass = c[-1]

    def draw(rng, shape):
        return np.interp(rng.uniform(0.0, mass, size=shape), c, xs)

    return draw, float(mass)


@dataclass(frozen=True)
class ShellTestReport:
    test: TestFunction
    type1_bound: float  # first line of the shell bound
    type1_bound_uniform: float  # with a single entropy bound D(eps)
    type2_bound: float
    type1: float
    type1_se: float
    type2: dict  # theta -> (estimate, stderr)

    @property
    def passed(self) -> bool:
        ok1 = self.type1 <= self.type1_bound + 3 * self.type1_se
        ok2 = all(v <= self.type2_bound + 3 * s for v, s in self.type2.values())
        return ok1 and ok2


def shell_test(
    cover: ShellCover,
    family: ParametricFamily,
    p0: DensityHandle,
    pstar: DensityHandle,
    n: int,
    J: int,
    probe_thetas: Sequence[float] = (),
    n_reps: int = 20_000,
    seed=0,
) -> ShellTestReport:
    """Max of per-cell LR tests against the cell member nearest theta*.

    The type I error is estimated under P0^n; the type II error under
    Q(P_theta)^n for each probe theta with |theta - theta*| > J eps, by
    sampling the normalised Q(P_theta) and scaling by its total mass^n.
    """
    if not cover.shells:
        raise ValueError("empty cover")
    eps = cover.epsilon
    worst = []
    for _, cells in cover.shells:
        for a, b in cells:
            worst.append(a if abs(a - cover.theta_star) <= abs(b - cover.theta_star) else b)
    members = [family.density(t) for t in worst]

    def decide(s):
        ls = pstar.logpdf(s)
        out = np.zeros(s.shape[:-1])
        for m in members:
            out = np.maximum(out, (np.sum(m.logpdf(s) - ls, axis=-1) > 0).astype(float))
        return out

    test = TestFunction(decide, f"shell test, {len(members)} cells")
    counts = cover.counts
    t1_bound = sum(N * math.exp(-n * j * j * eps * eps / 4) for j, N in counts.items())
    x = eps * eps * n / 4
    D = max(counts.values())
    t1_uniform = D * math.exp(-x) / (1 - math.exp(-x))
    t2_bound = math.exp(-n * J * J * eps * eps / 4)

    rng = make_rng(derive_seed(seed, "type1"))
    phi = test(p0.sample(rng, n_reps * n).reshape(n_reps, n))
    type1, se1 = float(phi.mean()), float(phi.std(ddof=1) / math.sqrt(n_reps))

    type2 = {}
    for k, theta in enumerate(probe_thetas):
        if abs(theta - cover.theta_star) <= J * eps:
            continue
        q = q_of_p(family.density(float(theta)), p0, pstar)
        draw, mass = tabulated_sampler(q)
        s = draw(make_rng(derive_seed(seed, "type2", k)), (n_reps, n))
        v = (1.0 - test(s)) * mass ** n
        type2[float(theta)] = (float(v.mean()), float(v.std(ddof=1) / math.sqrt(n_reps)))
    return ShellTestReport(test, t1_bound, t1_uniform, t2_bound, type1, se1, type2)
