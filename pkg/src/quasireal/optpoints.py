"""Greedy selection of simulation points.

Algorithm A adds, one at a time, the point that minimizes the integrated
misclassification probability; the inner search is a small real-coded
genetic algorithm followed by a gradient polish. Algorithm B adds the point
that maximizes the misclassification probability itself, using bounded
quasi-Newton runs started from high-uncertainty locations.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .criterion import CriterionState, coverage_probability
from .designs import Design, DesignKind, sobol

__all__ = [
    "Algorithm",
    "OptimizerConfig",
    "StepRecord",
    "OptimizationResult",
    "algorithm_a",
    "algorithm_b",
    "optimize_points",
    "write_trace_csv",
]

FD_STEP = 1e-5
DUPLICATE_TOL = 1e-10


class Algorithm(enum.Enum):
    A = "A"
    B = "B"

    @classmethod
    def parse(cls, value) -> "Algorithm":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()
        if key.startswith("ALG"):
            key = key.replace("ALGORITHM", "").replace("ALG", "").strip("_- ")
        return cls(key)


@dataclass(frozen=True)
class OptimizerConfig:
    m: int
    algorithm: Algorithm = Algorithm.B
    population: int = 40
    generations: int = 15
    polish_evals: int = 50
    multistarts: int = 5
    start_points: int = 4096
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "algorithm", Algorithm.parse(self.algorithm))
        for name in ("m", "population", "generations", "multistarts", "start_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.polish_evals < 0:
            raise ValueError("polish_evals must be nonnegative")


@dataclass(frozen=True)
class StepRecord:
    step: int
    candidate_evals: int
    bvn_evals: int
    value: float
    point: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    design: Design
    state: CriterionState
    trace: list[StepRecord] = field(default_factory=list)

    @property
    def edm_trace(self) -> np.ndarray:
        """Integrated criterion after each step (recomputed from the node caches)."""
        return np.array([rec.value for rec in self.trace]) if self.trace else np.empty(0)

    def __iter__(self):
        yield self.design
        yield self.trace


def _lexi_best(points: np.ndarray, values: np.ndarray) -> int:
    """Index of the smallest value; ties go to the lexicographically lowest point."""
    keys = [points[:, j] for j in range(points.shape[1] - 1, -1, -1)]
    order = np.lexsort(keys + [values])
    return int(order[0])


def _too_close(x: np.ndarray, E: np.ndarray) -> np.ndarray:
    if E.shape[0] == 0:
        return np.zeros(x.shape[0], dtype=bool)
    d2 = ((x[:, None, :] - E[None, :, :]) ** 2).sum(axis=-1)
    return (d2 <= DUPLICATE_TOL**2).any(axis=1)


class _Objective:
    """Counts candidate evaluations for one greedy step."""

    def __init__(self, batch_fn):
        self.batch_fn = batch_fn
        self.evals = 0

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        self.evals += X.shape[0]
        return self.batch_fn(X)

    def value_and_grad(self, x: np.ndarray) -> tuple[float, np.ndarray]:
        """Value and central-difference gradient from one batch of ``2d + 1`` points.

        Stencil points are clipped to the cube; the divisor follows the
        actual spacing so boundary gradients stay one-sided but correct.
        """
        d = x.size
        up = np.clip(x + FD_STEP * np.eye(d), 0.0, 1.0)
        lo = np.clip(x - FD_STEP * np.eye(d), 0.0, 1.0)
        vals = self(np.vstack([x[None, :], up, lo]))
        h = np.diag(up - lo)
        grad = (vals[1:d + 1] - vals[d + 1:]) / np.where(h > 0, h, 1.0)
        return float(vals[0]), grad


def _polish(obj: _Objective, x0: np.ndarray, budget: int) -> tuple[np.ndarray, float]:
    """L-BFGS-B from ``x0`` spending at most ``budget`` candidate evaluations."""
    d = x0.size
    best = [x0.copy(), np.inf]
    per_call = 2 * d + 1
    maxfun = budget // per_call
    if maxfun < 1:
        return x0, float(obj(x0)[0])

    def fun(x):
        val, grad = obj.value_and_grad(x)
        if val < best[1]:
            best[0], best[1] = x.copy(), val
        return val, grad

    minimize(fun, x0, jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * d,
             options={"maxfun": maxfun, "maxiter": maxfun})
    return best[0], best[1]


def _genetic_search(obj: _Objective, d: int, E: np.ndarray, cfg: OptimizerConfig,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Real-coded GA minimizing ``obj``; returns the final population and fitness."""
    P = cfg.population

    def repair(X):
        bad = _too_close(X, E)
        while bad.any():
            X[bad] = rng.random((int(bad.sum()), d))
            bad = _too_close(X, E)
        return X

    pop = repair(rng.random((P, d)))
    fit = obj(pop)
    sigma = 0.1
    for _ in range(cfg.generations):
        # binary tournaments
        a, b = rng.integers(P, size=(2, P))
        parents = np.where((fit[a] <= fit[b])[:, None], pop[a], pop[b])
        mates = parents[rng.permutation(P)]
        # blend crossover (BLX-0.5)
        lo, hi = np.minimum(parents, mates), np.maximum(parents, mates)
        span = hi - lo
        kids = rng.uniform(lo - 0.5 * span, hi + 0.5 * span)
        cross = rng.random(P) < 0.9
        kids = np.where(cross[:, None], kids, parents)
        # Gaussian mutation, about one coordinate per child
        mut = rng.random((P, d)) < 1.0 / d
        kids = kids + mut * rng.normal(0.0, sigma, (P, d))
        kids = repair(np.clip(kids, 0.0, 1.0))
        kfit = obj(kids)
        # elitism: the best parent replaces the worst child
        e, w = _lexi_best(pop, fit), int(np.argmax(kfit))
        if fit[e] < kfit[w]:
            kids[w], kfit[w] = pop[e], fit[e]
        pop, fit = kids, kfit
        sigma *= 0.85
    return pop, fit


def algorithm_a(state: CriterionState, cfg: OptimizerConfig,
                rng: np.random.Generator | None = None) -> OptimizationResult:
    """Greedy minimization of the integrated criterion.

    Each step evaluates candidates in batch through the cached rank-one
    kriging updates of ``state``; the posterior is never refitted.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    d = state.gp.d
    trace = []
    for step in range(1, cfg.m + 1):
        before = state.counter.count
        obj = _Objective(state.edm_candidates)
        pop, fit = _genetic_search(obj, d, state.E, cfg, rng)
        k = _lexi_best(pop, fit)
        x_best, f_best = pop[k], fit[k]
        if cfg.polish_evals:
            x_pol, f_pol = _polish(obj, x_best, cfg.polish_evals)
            if f_pol < f_best and not _too_close(x_pol[None, :], state.E)[0]:
                x_best, f_best = x_pol, f_pol
        state = state.add_point(x_best)
        trace.append(StepRecord(step, obj.evals, state.counter.count - before,
                                float(f_best), tuple(map(float, x_best))))
    return OptimizationResult(_as_design(state, cfg), state, trace)


def _start_weights(state: CriterionState, cfg: OptimizerConfig) -> tuple[np.ndarray, np.ndarray]:
    starts = sobol(state.gp.d, cfg.start_points, skip=1).points
    mean, var, _, _ = state.gp.moments(starts)
    p = coverage_probability(mean, var, state.exc)
    return starts, p * (1.0 - p)


def _draw_starts(w, k, rng) -> np.ndarray:
    idx = np.flatnonzero(w > 0)
    if idx.size == 0:
        return np.empty(0, dtype=int)
    k = min(k, idx.size)
    prob = w[idx] / w[idx].sum()
    return rng.choice(idx, size=k, replace=False, p=prob)


def algorithm_b(state: CriterionState, cfg: OptimizerConfig,
                rng: np.random.Generator | None = None) -> OptimizationResult:
    """Greedy maximization of the misclassification probability."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    d = state.gp.d
    starts, w = _start_weights(state, cfg)
    used = np.zeros(starts.shape[0], dtype=bool)
    trace = []
    for step in range(1, cfg.m + 1):
        before = state.counter.count
        obj = _Objective(lambda X, s=state: -s.rho(X))
        picks = _draw_starts(w, cfg.multistarts, rng)
        cands, vals = [], []
        for i in picks:
            res = minimize(obj.value_and_grad, starts[i], jac=True, method="L-BFGS-B",
                           bounds=[(0.0, 1.0)] * d)
            x = np.clip(res.x, 0.0, 1.0)
            if not _too_close(x[None, :], state.E)[0]:
                cands.append(x)
                vals.append(float(res.fun))
        x_best = None
        if cands:
            cands, vals = np.array(cands), np.array(vals)
            k = _lexi_best(cands, vals)
            if -vals[k] > 0:
                x_best, f_best = cands[k], vals[k]
        if x_best is None:
            # every start collapsed onto a chosen point: take the best unused w node
            free = ~used & ~_too_close(starts, state.E)
            j = int(np.flatnonzero(free)[np.argmax(w[free])])
            x_best = starts[j]
            f_best = float(obj(x_best[None, :])[0])
        used |= np.all(starts == x_best, axis=1)
        state = state.add_point(x_best)
        trace.append(StepRecord(step, obj.evals, state.counter.count - before,
                                float(-f_best), tuple(map(float, x_best))))
    return OptimizationResult(_as_design(state, cfg), state, trace)


def _as_design(state: CriterionState, cfg: OptimizerConfig) -> Design:
    return Design(state.E.copy(), DesignKind.EXPLICIT,
                  meta={"algorithm": cfg.algorithm.value, "seed": cfg.seed})


def optimize_points(state: CriterionState, cfg: OptimizerConfig) -> OptimizationResult:
    if cfg.algorithm is Algorithm.A:
        return algorithm_a(state, cfg)
    return algorithm_b(state, cfg)


def write_trace_csv(trace, path, comment: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        fh.write("step,candidate_evals,bvn_evals,criterion_value\n")
        for rec in trace:
            fh.write(f"{rec.step},{rec.candidate_evals},{rec.bvn_evals},{rec.value:.12g}\n")
