"""Pareto filtering and NSGA-II (maximization convention)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Nsga2Config:
    population: int = 100
    generations: int = 100
    crossover_prob: float = 0.9
    crossover_eta: float = 15.0
    mutation_prob: float | None = None  # default 1 / D
    mutation_eta: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.population < 4 or self.population % 2:
            raise ValueError("population must be even and at least 4")


@dataclass(frozen=True)
class ParetoArchive:
    points: np.ndarray  # (n, D)
    values: np.ndarray  # (n, M)

    def __len__(self):
        return len(self.points)


def _dominates(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``out[i, j]`` is True when ``A[i]`` dominates ``B[j]``."""
    ge = np.all(A[:, None, :] >= B[None, :, :], axis=2)
    gt = np.any(A[:, None, :] > B[None, :, :], axis=2)
    return ge & gt


def non_dominated_filter(values) -> np.ndarray:
    """Indices of the points not dominated by any other point."""
    V = np.asarray(values, float)
    if V.ndim != 2 or len(V) == 0:
        return np.arange(len(V))
    if V.shape[1] == 2:
        return _non_dominated_2d(V)
    return np.flatnonzero(~_dominates(V, V).any(axis=0))


def _non_dominated_2d(V):
    # sweep by decreasing f1: a point survives iff its f2 beats every point with
    # strictly larger f1 and ties the best f2 within its own f1 group
    order = np.lexsort((-V[:, 1], -V[:, 0]))
    f1, f2 = V[order, 0], V[order, 1]
    first = np.r_[True, f1[1:] != f1[:-1]]
    group = np.cumsum(first) - 1
    top = f2[first]
    before = np.r_[-np.inf, np.maximum.accumulate(top)[:-1]]
    keep = (f2 > before[group]) & (f2 == top[group])
    return np.sort(order[keep])


def non_dominated_ranks(values) -> np.ndarray:
    """Front index (0 = non-dominated) for each point."""
    V = np.asarray(values, float)
    n = len(V)
    if V.shape[1] == 2:
        ranks = np.full(n, -1)
        rest = np.arange(n)
        r = 0
        while rest.size:
            front = rest[_non_dominated_2d(V[rest])]
            ranks[front] = r
            rest = np.setdiff1d(rest, front)
            r += 1
        return ranks
    dom = _dominates(V, V)
    count = dom.sum(axis=0)
    ranks = np.full(n, -1)
    front = np.flatnonzero(count == 0)
    r = 0
    while front.size:
        ranks[front] = r
        count = count - dom[front].sum(axis=0)
        count[ranks >= 0] = -1
        front = np.flatnonzero(count == 0)
        r += 1
    return ranks


def crowding_distance(front_values) -> np.ndarray:
    V = np.asarray(front_values, float)
    n, M = V.shape
    d = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(M):
        order = np.argsort(V[:, k], kind="stable")
        col = V[order, k]
        span = col[-1] - col[0]
        d[order[0]] = d[order[-1]] = np.inf
        if span > 0:
            d[order[1:-1]] += (col[2:] - col[:-2]) / span
    return d


def _truncate(values, size):
    # keep the `size` points with the largest crowding distance
    cd = crowding_distance(values)
    order = np.lexsort((np.arange(len(values)), -cd))
    return np.sort(order[:size])


def _sbx(P1, P2, eta, prob, rng):
    """Bounded simulated binary crossover on parent pairs (rows of P1, P2)."""
    n, D = P1.shape
    C1, C2 = P1.copy(), P2.copy()
    pair = rng.random(n) <= prob
    u_swap = rng.random((n, D))
    u = rng.random((n, D))
    flip = rng.random((n, D))
    y1, y2 = np.minimum(P1, P2), np.maximum(P1, P2)
    gap = y2 - y1
    active = pair[:, None] & (u_swap <= 0.5) & (gap >= 1e-14)
    safe = np.where(active, gap, 1.0)
    spread = []
    for bound_gap in (y1, 1.0 - y2):
        beta = 1.0 + 2.0 * bound_gap / safe
        alpha = 2.0 - beta ** -(eta + 1.0)
        bq = np.where(u <= 1.0 / alpha, (u * alpha) ** (1.0 / (eta + 1.0)),
                      (1.0 / np.abs(2.0 - u * alpha)) ** (1.0 / (eta + 1.0)))
        spread.append(bq)
    lo = np.clip(0.5 * ((y1 + y2) - spread[0] * gap), 0.0, 1.0)
    hi = np.clip(0.5 * ((y1 + y2) + spread[1] * gap), 0.0, 1.0)
    swap = flip < 0.5
    lo, hi = np.where(swap, hi, lo), np.where(swap, lo, hi)
    C1[active], C2[active] = lo[active], hi[active]
    return C1, C2


def _polynomial_mutation(X, eta, prob, rng):
    n, D = X.shape
    hit = rng.random((n, D)) < prob
    u = rng.random((n, D))
    mp = 1.0 / (eta + 1.0)
    down = (2.0 * u + (1.0 - 2.0 * u) * (1.0 - X) ** (eta + 1.0)) ** mp - 1.0
    up = 1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * X ** (eta + 1.0)) ** mp
    dq = np.where(u < 0.5, down, up)
    return np.where(hit, np.clip(X + dq, 0.0, 1.0), X)


def _survivors(values, size):
    ranks = non_dominated_ranks(values)
    chosen = []
    crowd = np.zeros(len(values))
    for r in range(ranks.max() + 1):
        front = np.flatnonzero(ranks == r)
        cd = crowding_distance(values[front])
        crowd[front] = cd
        if len(chosen) + len(front) <= size:
            chosen.extend(front)
        else:
            order = np.lexsort((front, -cd))
            chosen.extend(front[order[: size - len(chosen)]])
            break
    chosen = np.array(sorted(chosen))
    return chosen, ranks[chosen], crowd[chosen]


class _Archive:
    def __init__(self, target):
        self.target = target
        self.X = None
        self.F = None

    def add(self, X, F):
        if self.X is not None:
            X = np.vstack([self.X, X])
            F = np.vstack([self.F, F])
        keep = non_dominated_filter(F)
        # exact duplicates in value space keep their earliest copy
        _, first = np.unique(F[keep], axis=0, return_index=True)
        keep = keep[np.sort(first)]
        X, F = X[keep], F[keep]
        if len(F) > self.target:
            idx = _truncate(F, self.target)
            X, F = X[idx], F[idx]
        self.X, self.F = X, F


def nsga2_maximize(f: Callable[[np.ndarray], np.ndarray], dim: int, config: Nsga2Config = Nsga2Config(),
                   target_points: int = 1000) -> ParetoArchive:
    """Estimate the Pareto set of ``f`` over ``[0, 1]^dim``.

    ``f`` maps an ``(n, dim)`` array to ``(n, M)`` objective values.  An
    external archive collects every non-dominated point evaluated, trimmed
    by crowding distance to ``target_points``.
    """
    if target_points < 1:
        raise ValueError("target_points must be at least 1")
    rng = np.random.default_rng(config.seed)
    pm = config.mutation_prob if config.mutation_prob is not None else 1.0 / dim
    N = config.population
    X = rng.random((N, dim))
    F = np.asarray(f(X), float)
    archive = _Archive(target_points)
    archive.add(X, F)
    ranks = non_dominated_ranks(F)
    crowd = np.zeros(N)
    for r in range(ranks.max() + 1):
        front = np.flatnonzero(ranks == r)
        crowd[front] = crowding_distance(F[front])

    for _ in range(config.generations):
        # binary tournament on (rank, crowding)
        a, b = rng.integers(0, N, (2, N))
        better = (ranks[a] < ranks[b]) | ((ranks[a] == ranks[b]) & (crowd[a] >= crowd[b]))
        parents = np.where(better, a, b)
        c1, c2 = _sbx(X[parents[0::2]], X[parents[1::2]], config.crossover_eta, config.crossover_prob, rng)
        children = np.empty((N, dim))
        children[0::2], children[1::2] = c1, c2
        children = _polynomial_mutation(children, config.mutation_eta, pm, rng)
        Fc = np.asarray(f(children), float)
        archive.add(children, Fc)
        allX = np.vstack([X, children])
        allF = np.vstack([F, Fc])
        idx, ranks, crowd = _survivors(allF, N)
        X, F = allX[idx], allF[idx]
    return ParetoArchive(archive.X, archive.F)
