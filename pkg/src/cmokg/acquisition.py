"""Continuous maximization of the acquisitions and of the posterior mean.

Every search is a multistart bounded quasi-Newton run seeded from the best
points of a coarse grid, with central finite-difference gradients computed
in one batched acquisition call per step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .gp import PosteriorState
from .kg import JointKGEvaluator, KGEvaluator

log = logging.getLogger(__name__)

MODES = ("expectation", "random", "benchmark")


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 10
    max_iterations: int = 50
    coarse_grid: int = 21  # per-axis size of the seeding grid
    finite_difference_step: float = 1e-4
    fantasy_count: int = 64  # joint-observation draws for the benchmark
    fantasy_seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.coarse_grid < 2:
            raise ValueError("coarse_grid must be at least 2")
        if self.finite_difference_step <= 0:
            raise ValueError("finite_difference_step must be positive")


@dataclass(frozen=True)
class AcquisitionResult:
    x: np.ndarray
    objective: int | None  # None means every objective (joint observation)
    value: float
    fallback: bool = False


def grid_points(n: int, dim: int = 2) -> np.ndarray:
    """Uniform ``n^dim`` grid over the unit box, first coordinate varying slowest."""
    axes = np.meshgrid(*[np.linspace(0.0, 1.0, n)] * dim, indexing="ij")
    return np.column_stack([a.ravel() for a in axes])


def inner_grid(n: int = 11, dim: int = 2) -> np.ndarray:
    return grid_points(n, dim)


def _fd_points(x, h):
    """Stencil for central differences, one-sided where ``x`` sits within ``h`` of a bound."""
    D = len(x)
    pts = [x]
    steps = np.empty((D, 2))
    for i in range(D):
        lo, hi = max(x[i] - h, 0.0), min(x[i] + h, 1.0)
        p, q = x.copy(), x.copy()
        p[i], q[i] = hi, lo
        pts += [p, q]
        steps[i] = hi, lo
    return np.array(pts), steps


def _value_and_grad(fun, h):
    def wrapped(x):
        pts, steps = _fd_points(np.clip(x, 0.0, 1.0), h)
        v = fun(pts)
        g = np.empty(len(x))
        for i in range(len(x)):
            g[i] = (v[1 + 2 * i] - v[2 + 2 * i]) / (steps[i, 0] - steps[i, 1])
        return -v[0], -g
    return wrapped


def _lexless(x, y):
    for a, b in zip(x, y):
        if a != b:
            return a < b
    return False


def multistart_maximize(fun: Callable[[np.ndarray], np.ndarray], dim: int,
                        config: OptimizerConfig) -> tuple[np.ndarray, float, bool]:
    """Maximize a batched function over ``[0, 1]^dim``.

    Returns ``(x, value, fallback)``; ``fallback`` is True when every local
    search failed and the best seed point is returned instead.
    """
    coarse = grid_points(config.coarse_grid, dim)
    values = np.asarray(fun(coarse), float)
    order = np.lexsort((np.arange(len(values)), -values))
    seeds = order[: config.restarts]
    best_x, best_v = coarse[seeds[0]].copy(), float(values[seeds[0]])
    objective = _value_and_grad(fun, config.finite_difference_step)
    failures = 0
    for s in seeds:
        try:
            res = minimize(objective, coarse[s], jac=True, method="L-BFGS-B", bounds=[(0.0, 1.0)] * dim,
                           options={"maxiter": config.max_iterations})
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as err:
            log.debug("local search from %s failed: %s", coarse[s], err)
            failures += 1
            continue
        x = np.clip(res.x, 0.0, 1.0)
        v = float(fun(x[None, :])[0])
        if not np.isfinite(v):
            failures += 1
            continue
        if v > best_v or (v == best_v and _lexless(x, best_x)):
            best_x, best_v = x, v
    return best_x, best_v, failures == len(seeds)


def _better(cand: AcquisitionResult, best: AcquisitionResult | None) -> bool:
    if best is None or cand.value > best.value:
        return True
    if cand.value < best.value:
        return False
    cm = -1 if cand.objective is None else cand.objective
    bm = -1 if best.objective is None else best.objective
    if cm != bm:
        return cm < bm
    return _lexless(cand.x, best.x)


def maximize_acquisition(state: PosteriorState, mode: str, lambdas, grid, costs,
                         config: OptimizerConfig = OptimizerConfig(),
                         objectives: Sequence[int] | None = None) -> AcquisitionResult:
    """Choose the next (x, m) by maximizing the mode's acquisition.

    ``objectives`` restricts the legal single-objective actions (e.g. to
    those the remaining budget can pay for).  Benchmark mode returns
    ``objective=None``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    lambdas = np.atleast_2d(np.asarray(lambdas, float))
    if mode == "random" and len(lambdas) != 1:
        raise ValueError("random mode takes exactly one weight")
    costs = np.asarray(costs, float)
    if mode == "benchmark":
        ev = JointKGEvaluator(state, grid, lambdas, config.fantasy_count, config.fantasy_seed,
                              cost=float(costs.sum()))
        x, v, fb = multistart_maximize(ev.value, state.dim, config)
        return AcquisitionResult(x, None, v, fb)
    ev = KGEvaluator(state, grid, lambdas, costs)
    if objectives is None:
        objectives = range(state.n_objectives)
    best = None
    for m in sorted(objectives):
        x, v, fb = multistart_maximize(lambda xs, m=m: ev.cmokg(xs, m), state.dim, config)
        cand = AcquisitionResult(x, m, v, fb)
        if _better(cand, best):
            best = cand
    if best is None:
        raise ValueError("no legal objective to evaluate")
    return best


def maximize_posterior_mean(state: PosteriorState, lam, config: OptimizerConfig = OptimizerConfig()) -> np.ndarray:
    """Maximizer of the scalarized posterior mean ``lam . mu``."""
    lam = np.asarray(lam, float)
    x, _, _ = multistart_maximize(lambda xs: state.mean(xs) @ lam, state.dim, config)
    return x
