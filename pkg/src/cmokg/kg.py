"""Discrete knowledge gradient for scalarized multi-output GPs.

The inner maximization runs over a finite grid.  Conditioning on a single
hypothetical observation makes the scalarized posterior mean on the grid an
affine function ``a + b z`` of a standard normal ``z``, and the expectation
of the upper envelope of those lines is available in closed form.

The hot loops live in numba kernels that operate on batches of candidates
and weights at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .gp import FantasyBasis, PosteriorState
from .scalarize import qmc_normals

PARALLEL_TOL = 1e-12
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@numba.njit(cache=True)
def _psi(z):
    # z * Phi(z) + phi(z), evaluated at z <= 0
    return z * 0.5 * math.erfc(-z / math.sqrt(2.0)) + _INV_SQRT_2PI * math.exp(-0.5 * z * z)


@numba.njit(cache=True)
def _envelope(a, b, order, kept, breaks):
    """Upper envelope of lines visited in increasing-slope ``order``.

    Fills ``kept`` with line indices and ``breaks`` with the breakpoints
    between consecutive kept lines; returns the number of kept lines.
    """
    J = 0
    for t in range(order.shape[0]):
        i = order[t]
        ai = a[i]
        bi = b[i]
        skip = False
        while J > 0 and bi - b[kept[J - 1]] <= PARALLEL_TOL:
            if ai <= a[kept[J - 1]]:
                skip = True
                break
            J -= 1
        if skip:
            continue
        z = 0.0
        while J > 0:
            j = kept[J - 1]
            z = (a[j] - ai) / (bi - b[j])
            if J > 1 and z <= breaks[J - 2]:
                J -= 1
            else:
                break
        if J > 0:
            breaks[J - 1] = z
        kept[J] = i
        J += 1
    return J


@numba.njit(cache=True)
def _gain(b, kept, breaks, J):
    # E[max] - max(a) as a sum of non-negative terms
    h = 0.0
    for k in range(J - 1):
        h += (b[kept[k + 1]] - b[kept[k]]) * _psi(-abs(breaks[k]))
    return h


@numba.njit(cache=True)
def _kg_batch(a, beta, w):
    """Knowledge gradient for every (weight, candidate) pair.

    a: (Q, G) intercepts, beta: (P, G) unit slopes, w: (Q,) non-negative
    slope multipliers.  Returns (Q, P) values of E[max_g a + w beta z] - max_g a.
    """
    Q, G = a.shape
    P = beta.shape[0]
    out = np.zeros((Q, P))
    kept = np.empty(G, np.int64)
    breaks = np.empty(G, np.float64)
    slopes = np.empty(G, np.float64)
    for p in range(P):
        order = np.argsort(beta[p])
        for q in range(Q):
            if w[q] == 0.0:
                continue
            for g in range(G):
                slopes[g] = w[q] * beta[p, g]
            J = _envelope(a[q], slopes, order, kept, breaks)
            out[q, p] = _gain(slopes, kept, breaks, J)
    return out


@numba.njit(cache=True)
def _joint_batch(a, beta, lam, z):
    """Fantasy-averaged gain for joint observation of all objectives.

    a: (Q, G), beta: (M, P, G), lam: (Q, M), z: (S, M).  Returns (Q, P, S)
    per-draw values of max_g [a + sum_m lam_m beta_m z_m] - max_g a.
    """
    Q, G = a.shape
    M, P, _ = beta.shape
    S = z.shape[0]
    out = np.empty((Q, P, S))
    for q in range(Q):
        base = a[q].max()
        for p in range(P):
            for s in range(S):
                best = -np.inf
                for g in range(G):
                    v = a[q, g]
                    for m in range(M):
                        v += lam[q, m] * beta[m, p, g] * z[s, m]
                    if v > best:
                        best = v
                out[q, p, s] = best - base
    return out


@dataclass(frozen=True)
class Epigraph:
    """Upper envelope of a set of lines: kept indices by slope and breakpoints."""

    kept: np.ndarray
    breakpoints: np.ndarray


def _sorted_order(a, b):
    return np.lexsort((a, b)).astype(np.int64)


def epigraph(a, b) -> Epigraph:
    a = np.ascontiguousarray(a, float)
    b = np.ascontiguousarray(b, float)
    if a.shape != b.shape or a.ndim != 1 or a.size == 0:
        raise ValueError("need matching non-empty 1-D intercept and slope arrays")
    kept = np.empty(a.size, np.int64)
    breaks = np.empty(a.size, float)
    J = _envelope(a, b, _sorted_order(a, b), kept, breaks)
    return Epigraph(kept[:J].copy(), breaks[: J - 1].copy())


def expected_max_affine(a, b) -> float:
    """``E[max_j a_j + b_j Z]`` for standard normal ``Z``."""
    a = np.ascontiguousarray(a, float)
    b = np.ascontiguousarray(b, float)
    env = epigraph(a, b)
    return float(a.max() + _gain(b, env.kept, env.breakpoints, env.kept.size))


def _weights_array(lambdas) -> np.ndarray:
    lam = np.atleast_2d(np.asarray(lambdas, float))
    if lam.shape[0] == 0:
        raise ValueError("need at least one scalarization weight")
    return lam


class KGEvaluator:
    """Batched C-MOKG evaluation on a fixed inner grid.

    Built once per (state, grid, weight set); ``cmokg(xs, m)`` then returns
    the weight-averaged, cost-weighted knowledge gradient for a batch of
    candidate locations.
    """

    def __init__(self, state: PosteriorState, grid, lambdas, costs=None):
        self.state = state
        self.basis = FantasyBasis(state, grid)
        self.lambdas = _weights_array(lambdas)
        M = state.n_objectives
        self.costs = np.ones(M) if costs is None else np.asarray(costs, float)
        if self.lambdas.shape[1] != M or self.costs.shape != (M,):
            raise ValueError("weights and costs must have one entry per objective")
        if np.any(self.costs <= 0):
            raise ValueError("costs must be positive")
        self.intercepts = np.ascontiguousarray(self.lambdas @ self.basis.mean.T)  # (Q, G)

    def mokg_per_weight(self, xs, m: int) -> np.ndarray:
        """Un-averaged, un-weighted MOKG, shape ``(Q, len(xs))``."""
        beta = np.ascontiguousarray(self.basis.slopes(m, xs))
        w = np.ascontiguousarray(self.lambdas[:, m])
        return _kg_batch(self.intercepts, beta, w)

    def cmokg(self, xs, m: int) -> np.ndarray:
        return self.mokg_per_weight(xs, m).mean(axis=0) / self.costs[m]


class JointKGEvaluator:
    """Knowledge gradient for observing every objective at once (benchmark).

    The expectation over the ``M``-dimensional fantasy is a scrambled
    Sobol' average with a fixed seed, so the acquisition is deterministic.
    """

    def __init__(self, state: PosteriorState, grid, lambdas, fantasy_count: int = 64, seed: int = 0,
                 cost: float = 1.0):
        if fantasy_count < 1:
            raise ValueError("fantasy_count must be at least 1")
        self.state = state
        self.basis = FantasyBasis(state, grid)
        self.lambdas = _weights_array(lambdas)
        self.z = np.ascontiguousarray(qmc_normals(fantasy_count, state.n_objectives, seed))
        self.intercepts = np.ascontiguousarray(self.lambdas @ self.basis.mean.T)
        self.cost = float(cost)

    def draws(self, xs) -> np.ndarray:
        """Per-draw gains, shape ``(Q, len(xs), S)``."""
        beta = np.ascontiguousarray(np.stack(
            [self.basis.slopes(m, xs) for m in range(self.state.n_objectives)]))
        return _joint_batch(self.intercepts, beta, np.ascontiguousarray(self.lambdas), self.z)

    def value(self, xs) -> np.ndarray:
        return self.draws(xs).mean(axis=(0, 2)) / self.cost


def mokg_discrete(state: PosteriorState, x, m: int, lam, grid) -> float:
    """Discrete multi-objective knowledge gradient of observing objective ``m`` at ``x``."""
    return float(KGEvaluator(state, grid, [lam]).mokg_per_weight(np.atleast_2d(x), m)[0, 0])


def cmokg(state: PosteriorState, x, m: int, lam, grid, costs) -> float:
    return float(KGEvaluator(state, grid, [lam], costs).cmokg(np.atleast_2d(x), m)[0])


def cmokg_expectation(state: PosteriorState, x, m: int, lambdas: Sequence, grid, costs) -> float:
    """C-MOKG averaged over a list of scalarization weights."""
    return float(KGEvaluator(state, grid, lambdas, costs).cmokg(np.atleast_2d(x), m)[0])


def mokg_joint_benchmark(state: PosteriorState, x, lam, grid, fantasy_count: int = 64,
                         seed: int = 0) -> tuple[float, float]:
    """Joint-observation KG estimate and its standard error."""
    ev = JointKGEvaluator(state, grid, [lam], fantasy_count, seed)
    d = ev.draws(np.atleast_2d(x))[0, 0]
    se = d.std(ddof=1) / np.sqrt(d.size) if d.size > 1 else 0.0
    return float(d.mean()), float(se)


def sample_posterior(state: PosteriorState, grid, sample_count: int, rng) -> np.ndarray:
    """Joint posterior draws of every objective on ``grid``, shape ``(S, G, M)``."""
    grid = np.asarray(grid, float).reshape(-1, state.dim)
    mean = state.mean(grid)
    out = np.empty((sample_count, len(grid), state.n_objectives))
    for m in range(state.n_objectives):
        C = state.covariance(m, grid)
        w, V = np.linalg.eigh(C)
        root = V * np.sqrt(np.clip(w, 0.0, None))
        out[:, :, m] = mean[:, m] + rng.standard_normal((sample_count, len(grid))) @ root.T
    return out


def residual_uncertainty_mc(state: PosteriorState, lam, sample_count: int, seed: int,
                            grid) -> tuple[float, float]:
    """Monte-Carlo estimate (and standard error) of the residual uncertainty.

    ``E[max_g lam . f(g)] - max_g lam . mu(g)`` over the supplied grid.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    lam = np.asarray(lam, float)
    rng = np.random.default_rng(seed)
    f = sample_posterior(state, grid, sample_count, rng)
    best = (f @ lam).max(axis=1)
    base = (state.mean(grid) @ lam).max()
    se = best.std(ddof=1) / np.sqrt(sample_count) if sample_count > 1 else 0.0
    return float(best.mean() - base), float(se)
