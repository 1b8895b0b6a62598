"""
Box-constrained metaheuristics over the current-loop gains ``[k_cd, k_cq, k_sat]``.

Three minimizers share one report format so their convergence can be compared
on an equal evaluation budget:

* :func:`pso_minimize` -- particle swarm with linearly decreasing inertia,
* :func:`ga_minimize` -- generational real-coded GA with elitism,
* :func:`sa_minimize` -- single-chain simulated annealing, geometric cooling.

All random draws happen in the sequential part of each iteration; the batch of
cost evaluations that follows may run on a thread pool without changing the
result.
"""

from __future__ import annotations

import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .control import SmcGains
from .simloop import DIVERGED_PENALTY, Scenario, scenario_cost

__all__ = [
    "SearchSpace",
    "PsoConfig",
    "GaConfig",
    "SaConfig",
    "OptimizationReport",
    "CampaignResult",
    "pso_minimize",
    "ga_minimize",
    "sa_minimize",
    "acceptance_probability",
    "convergence_iteration",
    "run_campaign",
    "budget",
    "OPTIMIZERS",
]


@dataclass(frozen=True)
class SearchSpace:
    lower: tuple = (1.0, 1.0, 0.001)
    upper: tuple = (2000.0, 2000.0, 15.0)
    names: tuple = ("k_cd", "k_cq", "k_sat")

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or lo.ndim != 1 or len(self.names) != len(lo):
            raise ValueError("lower, upper and names must be 1-D and the same length")
        if not np.all(lo < hi):
            raise ValueError("lower must be strictly below upper")

    @property
    def lo(self) -> np.ndarray:
        return np.asarray(self.lower, float)

    @property
    def hi(self) -> np.ndarray:
        return np.asarray(self.upper, float)

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def dim(self) -> int:
        return len(self.lower)

    def uniform(self, rng, n: int) -> np.ndarray:
        return self.lo + rng.random((n, self.dim)) * self.width

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)


@dataclass(frozen=True)
class PsoConfig:
    swarm_size: int = 50
    max_iterations: int = 45
    w_start: float = 1.1
    w_end: float = 0.1
    c1: float = 1.49
    c2: float = 1.49
    seed: int = 0

    def __post_init__(self):
        if self.swarm_size < 2 or self.max_iterations < 1:
            raise ValueError("swarm_size >= 2 and max_iterations >= 1 required")
        if not (0 < self.w_end and 0 < self.w_start and self.c1 > 0 and self.c2 > 0):
            raise ValueError("inertia bounds and acceleration weights must be positive")

    def inertia(self, it: int) -> float:
        """Inertia weight at 0-based iteration ``it`` (linear from w_start to w_end)."""
        if self.max_iterations == 1:
            return self.w_start
        return self.w_start + (self.w_end - self.w_start) * it / (self.max_iterations - 1)


@dataclass(frozen=True)
class GaConfig:
    population: int = 50
    generations: int = 45
    crossover_prob: float = 0.9
    blend_alpha: float = 0.5
    mutation_prob: float = 0.1
    mutation_scale: float = 0.05    # sigma as a fraction of the box width
    tournament_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be even and at least 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")


@dataclass(frozen=True)
class SaConfig:
    initial_temperature: float = 100.0
    iterations: int = 45
    cooling: float = 0.9
    moves_per_iteration: int = 50
    step_scale: float = 0.1         # proposal sigma as a fraction of the box width
    seed: int = 0

    def __post_init__(self):
        if not self.initial_temperature > 0 or not 0 < self.cooling <= 1:
            raise ValueError("temperature must stay positive")
        if self.iterations < 1 or self.moves_per_iteration < 1:
            raise ValueError("iterations and moves_per_iteration must be >= 1")

    def temperature(self, it: int) -> float:
        return self.initial_temperature * self.cooling ** it


@dataclass
class OptimizationReport:
    """Outcome of one optimizer run.

    ``curve[i]`` is the best cost found up to and including iteration ``i + 1``.
    ``positions`` and ``costs`` log every evaluation in order.
    """

    method: str
    seed: int
    best_x: np.ndarray
    best_cost: float
    curve: list
    n_evaluations: int
    wall_time: float
    positions: np.ndarray = field(repr=False, default=None)
    costs: np.ndarray = field(repr=False, default=None)
    names: tuple = SearchSpace.names

    @property
    def best_gains(self) -> SmcGains:
        return SmcGains.from_array(self.best_x)

    def to_text(self, include_timing: bool = False) -> str:
        """Key-value header followed by the per-iteration table.

        Wall time is left out unless asked for, so that repeated runs produce
        identical files.
        """
        lines = [f"method: {self.method}", f"seed: {self.seed}",
                 f"best_cost: {self.best_cost:.9g}"]
        lines += [f"{n}: {v:.9g}" for n, v in zip(self.names, self.best_x)]
        lines.append(f"evaluations: {self.n_evaluations}")
        lines.append(f"iterations: {len(self.curve)}")
        if include_timing:
            lines.append(f"wall_time_s: {self.wall_time:.3f}")
        lines.append("")
        lines.append("iteration best_cost")
        lines += [f"{i} {c:.9g}" for i, c in enumerate(self.curve, start=1)]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["iteration,best_cost"]
        rows += [f"{i},{c:.9g}" for i, c in enumerate(self.curve, start=1)]
        return "\n".join(rows) + "\n"


class _Evaluator:
    """Batch cost evaluation with an evaluation log and a penalty for bad values."""

    def __init__(self, cost, workers: int = 1):
        self.cost = cost
        self.workers = workers
        self.positions = []
        self.costs = []

    def _one(self, x):
        try:
            f = float(self.cost(x))
        except FloatingPointError:
            f = DIVERGED_PENALTY
        return f if math.isfinite(f) else DIVERGED_PENALTY

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, float))
        rows = [row.copy() for row in X]
        if self.workers > 1 and len(rows) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                f = list(pool.map(self._one, rows))
        else:
            f = [self._one(r) for r in rows]
        self.positions.extend(rows)
        self.costs.extend(f)
        return np.array(f)

    def report(self, method, seed, best_x, best_cost, curve, t0, space):
        return OptimizationReport(
            method=method, seed=seed, best_x=np.array(best_x, float),
            best_cost=float(best_cost), curve=[float(c) for c in curve],
            n_evaluations=len(self.costs), wall_time=time.perf_counter() - t0,
            positions=np.array(self.positions).reshape(-1, space.dim),
            costs=np.array(self.costs), names=tuple(space.names))


def pso_minimize(cost, space: SearchSpace = SearchSpace(), cfg: PsoConfig = PsoConfig(),
                 workers: int = 1) -> OptimizationReport:
    """Particle swarm minimization of ``cost`` over the box ``space``.

    Positions start uniformly in the box with zero velocity. Each iteration
    evaluates the swarm, updates personal and global bests, then moves every
    particle with

        v <- w v + c1 r1 * (p_best - x) + c2 r2 * (g_best - x),  x <- x + v

    where ``r1``, ``r2`` are fresh per-dimension uniforms and ``w`` falls
    linearly from ``w_start`` to ``w_end``. Components pushed outside the box
    are clamped to the bound and their velocity is zeroed.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(cost, workers)
    n, lo, hi = cfg.swarm_size, space.lo, space.hi
    X = space.uniform(rng, n)
    V = np.zeros_like(X)
    p_best = X.copy()
    p_cost = np.full(n, np.inf)
    g_best, g_cost = X[0].copy(), np.inf
    curve = []
    for it in range(cfg.max_iterations):
        f = ev(X)
        better = f < p_cost
        p_best[better] = X[better]
        p_cost[better] = f[better]
        i = int(np.argmin(p_cost))
        if p_cost[i] < g_cost:
            g_cost = float(p_cost[i])
            g_best = p_best[i].copy()
        curve.append(g_cost)
        if it == cfg.max_iterations - 1:
            break
        r1 = rng.random(X.shape)
        r2 = rng.random(X.shape)
        V = cfg.inertia(it) * V + cfg.c1 * r1 * (p_best - X) + cfg.c2 * r2 * (g_best - X)
        X = X + V
        out = (X < lo) | (X > hi)
        X = np.clip(X, lo, hi)
        V[out] = 0.0
    return ev.report("pso", cfg.seed, g_best, g_cost, curve, t0, space)


def _tournament(rng, fit, size):
    idx = rng.integers(0, len(fit), size=size)
    return idx[np.argmin(fit[idx])]


def ga_minimize(cost, space: SearchSpace = SearchSpace(), cfg: GaConfig = GaConfig(),
                workers: int = 1) -> OptimizationReport:
    """Generational real-coded GA.

    Tournament selection, blend (BLX-alpha) crossover and per-gene Gaussian
    mutation. Every generation evaluates a full population of offspring; if
    none beats the previous champion, the champion replaces the worst
    offspring, so the best cost never increases and the population size is
    constant. The initial random population counts as generation 1.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(cost, workers)
    P, d = cfg.population, space.dim
    sigma = cfg.mutation_scale * space.width
    pop = space.uniform(rng, P)
    fit = ev(pop)
    curve = [float(fit.min())]
    for _ in range(1, cfg.generations):
        kids = np.empty_like(pop)
        for j in range(0, P, 2):
            a = pop[_tournament(rng, fit, cfg.tournament_size)]
            b = pop[_tournament(rng, fit, cfg.tournament_size)]
            if rng.random() < cfg.crossover_prob:
                lo_ab, hi_ab = np.minimum(a, b), np.maximum(a, b)
                span = hi_ab - lo_ab
                u = rng.random((2, d))
                c = lo_ab - cfg.blend_alpha * span + u * (1 + 2 * cfg.blend_alpha) * span
            else:
                c = np.array([a, b])
            mutate = rng.random((2, d)) < cfg.mutation_prob
            c = c + mutate * rng.normal(0.0, 1.0, (2, d)) * sigma
            kids[j:j + 2] = space.clip(c)
        kid_fit = ev(kids)
        champ = int(np.argmin(fit))
        if kid_fit.min() > fit[champ]:
            worst = int(np.argmax(kid_fit))
            kids[worst] = pop[champ]
            kid_fit[worst] = fit[champ]
        pop, fit = kids, kid_fit
        curve.append(min(curve[-1], float(fit.min())))
    best = int(np.argmin(fit))
    return ev.report("ga", cfg.seed, pop[best], fit[best], curve, t0, space)


def acceptance_probability(delta: float, temperature: float) -> float:
    """Metropolis rule: 1 for non-worsening moves, exp(-delta/T) otherwise."""
    if delta <= 0 or math.isinf(temperature):
        return 1.0
    return math.exp(-delta / temperature)


def sa_minimize(cost, space: SearchSpace = SearchSpace(), cfg: SaConfig = SaConfig(),
                workers: int = 1) -> OptimizationReport:
    """Single-chain simulated annealing.

    The chain starts at a uniform random point, which counts as the first move
    of iteration 1. Proposals add Gaussian noise of ``step_scale`` box widths
    and are clamped to the box. The temperature is constant within an
    iteration and multiplied by ``cooling`` between iterations. ``workers``
    is accepted for interface parity; the chain is sequential.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    ev = _Evaluator(cost, 1)
    sigma = cfg.step_scale * space.width
    x = space.uniform(rng, 1)[0]
    f = float(ev(x)[0])
    best_x, best_f = x.copy(), f
    curve = []
    for it in range(cfg.iterations):
        T = cfg.temperature(it)
        moves = cfg.moves_per_iteration - (1 if it == 0 else 0)
        for _ in range(moves):
            y = space.clip(x + rng.normal(0.0, 1.0, space.dim) * sigma)
            u = rng.random()
            fy = float(ev(y)[0])
            if u < acceptance_probability(fy - f, T):
                x, f = y, fy
                if f < best_f:
                    best_x, best_f = x.copy(), f
        curve.append(best_f)
    return ev.report("sa", cfg.seed, best_x, best_f, curve, t0, space)


OPTIMIZERS = {
    "pso": (pso_minimize, PsoConfig),
    "ga": (ga_minimize, GaConfig),
    "sa": (sa_minimize, SaConfig),
}


def budget(method: str, population: int, iterations: int) -> dict:
    """Config overrides giving ``method`` a population x iterations evaluation budget."""
    keys = {"pso": ("swarm_size", "max_iterations"),
            "ga": ("population", "generations"),
            "sa": ("moves_per_iteration", "iterations")}[method]
    return dict(zip(keys, (int(population), int(iterations))))


def convergence_iteration(report: OptimizationReport, threshold: float) -> int | None:
    """First 1-based iteration whose best-so-far cost is at or below ``threshold``."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    for i, c in enumerate(report.curve, start=1):
        if c <= threshold:
            return i
    return None


@dataclass
class CampaignResult:
    method: str
    reports: list

    @property
    def best_costs(self) -> np.ndarray:
        return np.array([r.best_cost for r in self.reports])

    @property
    def mean_cost(self) -> float:
        return statistics.fmean(self.best_costs)

    @property
    def std_cost(self) -> float:
        # population spread; exact zero for repeated values
        return statistics.pstdev(self.best_costs.tolist())

    @property
    def best_report(self) -> OptimizationReport:
        return min(self.reports, key=lambda r: (r.best_cost, r.seed))


def run_campaign(method: str, seeds, cost=None, scenario: Scenario | None = None,
                 space: SearchSpace = SearchSpace(), workers: int = 1,
                 **config) -> CampaignResult:
    """Run ``method`` once per seed and collect the reports.

    ``cost`` defaults to the tracking cost of ``scenario`` (the default
    three-event scenario if omitted). Extra keyword arguments override the
    optimizer's config fields, e.g. ``swarm_size=10, max_iterations=10``.
    """
    if method not in OPTIMIZERS:
        raise ValueError(f"unknown optimizer {method!r}; choose from {sorted(OPTIMIZERS)}")
    seeds = list(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    minimize, cfg_cls = OPTIMIZERS[method]
    if cost is None:
        cost = scenario_cost(scenario)
    reports = [minimize(cost, space, cfg_cls(seed=int(s), **config), workers=workers)
               for s in seeds]
    return CampaignResult(method, reports)
