"""Linear scalarizations, simplex weights and scrambled Sobol' streams."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

# scipy's direction numbers (Joe & Kuo) cover this many dimensions.
MAX_SOBOL_DIMENSION = 21201


class UnsupportedDimensionError(ValueError):
    pass


def linear_scalarize(lam, v) -> float:
    lam = np.asarray(lam, float)
    v = np.asarray(v, float)
    if lam.shape[-1] != v.shape[-1]:
        raise ValueError(f"weight has {lam.shape[-1]} components but vector has {v.shape[-1]}")
    return lam @ v


def check_simplex(lam, atol: float = 1e-12) -> np.ndarray:
    lam = np.asarray(lam, float)
    if np.any(lam < 0) or abs(lam.sum() - 1.0) > atol:
        raise ValueError(f"{lam} is not on the standard simplex")
    return lam


def simplex_from_cube(u) -> np.ndarray:
    """Map points of ``[0, 1]^(M-1)`` to the standard simplex in ``R^M``.

    Uniform inputs give uniform weights.  Accepts a single point or an
    ``(n, M-1)`` array.
    """
    u = np.asarray(u, float)
    single = u.ndim <= 1
    u = np.atleast_2d(u.reshape(1, -1) if single else u)
    if u.shape[1] == 1:
        w = np.hstack([u, 1.0 - u])
    else:
        # spacings of sorted uniforms
        s = np.sort(u, axis=1)
        edges = np.hstack([np.zeros((len(s), 1)), s, np.ones((len(s), 1))])
        w = np.diff(edges, axis=1)
    w = np.clip(w, 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    return w[0] if single else w


class SobolStream:
    """Reproducible cursor over a (possibly scrambled) Sobol' sequence.

    Scrambled streams use scipy's linear matrix scramble plus digital shift
    seeded by ``scramble_seed`` (and ``tag``) and start at index 0.  Unscrambled streams
    skip the all-zero index-0 point.
    """

    def __init__(self, dimension: int, scramble_seed: int | None = 0, cursor: int = 0, tag: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        if dimension > MAX_SOBOL_DIMENSION:
            raise UnsupportedDimensionError(
                f"Sobol' direction numbers only cover {MAX_SOBOL_DIMENSION} dimensions, got {dimension}")
        self.dimension = dimension
        self.scramble_seed = scramble_seed
        self.cursor = 0
        self.tag = tag
        # a non-zero tag gives an independent scramble for the same integer seed
        rng = None
        if scramble_seed is not None:
            rng = np.random.default_rng([scramble_seed, tag]) if tag else scramble_seed
        self._engine = qmc.Sobol(dimension, scramble=scramble_seed is not None, seed=rng)
        if scramble_seed is None:
            self._engine.fast_forward(1)
        if cursor:
            self.next(cursor)

    @property
    def scrambled(self) -> bool:
        return self.scramble_seed is not None

    def next(self, n: int) -> np.ndarray:
        """Emit the next ``n`` points, shape ``(n, dimension)``."""
        if n < 0:
            raise ValueError("n must be non-negative")
        if n == 0:
            return np.empty((0, self.dimension))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            pts = self._engine.random(n)
        self.cursor += n
        return pts


def sobol_next(stream: SobolStream, n: int) -> np.ndarray:
    return stream.next(n)


class WeightStream:
    """Simplex weights drawn from a scrambled ``(M-1)``-dimensional Sobol' stream."""

    def __init__(self, n_objectives: int, seed: int, tag: int = 0):
        if n_objectives < 2:
            raise ValueError("need at least two objectives")
        self.n_objectives = n_objectives
        self._sobol = SobolStream(n_objectives - 1, scramble_seed=seed, tag=tag)

    @property
    def cursor(self) -> int:
        return self._sobol.cursor

    def next(self, n: int) -> np.ndarray:
        return simplex_from_cube(self._sobol.next(n)).reshape(n, self.n_objectives)


def qmc_weights(n_objectives: int, n: int, seed: int, tag: int = 0) -> np.ndarray:
    """A fixed set of ``n`` scrambled low-discrepancy simplex weights."""
    return WeightStream(n_objectives, seed, tag).next(n)


def qmc_normals(n: int, dimension: int, seed: int) -> np.ndarray:
    """Scrambled Sobol' points pushed through the inverse normal CDF."""
    from scipy.stats import norm

    u = SobolStream(dimension, scramble_seed=seed).next(n)
    return norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
