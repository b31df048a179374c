"""Independent multi-output Gaussian process with per-objective noise.

Each objective ``m`` is modelled by its own GP with a constant mean and an
isotropic Matérn-5/2 kernel.  Observations may cover any subset of the
objectives at a location, so the data for objective ``m`` is simply the
records whose ``objective`` equals ``m``.

Hyper-parameters (:class:`KernelSpec`, :class:`NoiseModel`) live in the
*standardized* output space of each objective; the per-objective
:class:`Standardizer` held by the state maps results back to objective units.
Every public prediction is returned in objective units.

Objective indices are 0-based throughout the Python API.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

SQRT5 = np.sqrt(5.0)
JITTER = 1e-6
FIXED_NOISE = 1e-4


class InvalidParameterError(ValueError):
    pass


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization failed for one objective."""

    def __init__(self, objective: int, message: str = ""):
        self.objective = objective
        super().__init__(f"factorization failed for objective {objective}: {message}")


def matern52(x, x2, ls: float, os: float) -> float:
    """Matérn-5/2 covariance between two points."""
    if ls <= 0 or os <= 0:
        raise InvalidParameterError(f"length scale and output scale must be positive, got {ls}, {os}")
    r = np.linalg.norm(np.asarray(x, float) - np.asarray(x2, float)) / ls
    return float(os * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * np.exp(-SQRT5 * r))


def _distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


def matern52_matrix(a: np.ndarray, b: np.ndarray, ls: float, os: float) -> np.ndarray:
    """Covariance matrix ``K[i, j] = k(a[i], b[j])``."""
    if ls <= 0 or os <= 0:
        raise InvalidParameterError(f"length scale and output scale must be positive, got {ls}, {os}")
    r = _distances(np.atleast_2d(a), np.atleast_2d(b)) / ls
    return os * (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


@dataclass(frozen=True)
class KernelSpec:
    """Per-objective Matérn-5/2 hyper-parameters (standardized units).

    ``length_scale`` is in input units, ``output_scale`` is a variance.
    """

    length_scale: tuple[float, ...]
    output_scale: tuple[float, ...]
    constant_mean: tuple[float, ...]
    kernel_family: str = "Matern52"

    def __post_init__(self):
        object.__setattr__(self, "length_scale", tuple(float(v) for v in self.length_scale))
        object.__setattr__(self, "output_scale", tuple(float(v) for v in self.output_scale))
        object.__setattr__(self, "constant_mean", tuple(float(v) for v in self.constant_mean))
        if self.kernel_family != "Matern52":
            raise InvalidParameterError(f"unsupported kernel family {self.kernel_family!r}")
        if not len(self.length_scale) == len(self.output_scale) == len(self.constant_mean):
            raise InvalidParameterError("kernel parameters must have one entry per objective")
        if min(self.length_scale) <= 0 or min(self.output_scale) <= 0:
            raise InvalidParameterError("length scales and output scales must be positive")

    @property
    def n_objectives(self) -> int:
        return len(self.length_scale)


@dataclass(frozen=True)
class NoiseModel:
    noise_variance: tuple[float, ...]
    learnable: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "noise_variance", tuple(float(v) for v in self.noise_variance))
        object.__setattr__(self, "learnable", tuple(bool(v) for v in self.learnable))
        if len(self.noise_variance) != len(self.learnable):
            raise InvalidParameterError("noise model must have one entry per objective")
        if min(self.noise_variance) < 0:
            raise InvalidParameterError("noise variance must be non-negative")


@dataclass(frozen=True)
class ObservationRecord:
    location: tuple[float, ...]
    objective: int
    value: float
    cost: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "location", tuple(float(v) for v in self.location))


@dataclass(frozen=True)
class Standardizer:
    """Affine map ``standardized = (value - shift) / scale``."""

    shift: float = 0.0
    scale: float = 1.0

    def transform(self, values):
        return (np.asarray(values, float) - self.shift) / self.scale

    def inverse(self, values):
        return np.asarray(values, float) * self.scale + self.shift


def standardize(values: Sequence[float]) -> tuple[np.ndarray, Standardizer]:
    """Zero-mean, unit-variance transform using the population standard deviation.

    A single value or constant data gets ``scale = 1``.
    """
    v = np.asarray(values, float)
    if v.size == 0:
        raise ValueError("standardize needs at least one value")
    shift = float(v.mean())
    sd = float(v.std())
    scale = sd if v.size >= 2 and sd > 0 else 1.0
    tr = Standardizer(shift, scale)
    return tr.transform(v), tr


def destandardize(values, transform: Standardizer) -> np.ndarray:
    return transform.inverse(values)


def _objective_data(observations, m, dim):
    recs = [o for o in observations if o.objective == m]
    X = np.array([o.location for o in recs], float).reshape(len(recs), dim)
    y = np.array([o.value for o in recs], float)
    return X, y


@dataclass(frozen=True)
class _ObjectiveFactor:
    X: np.ndarray  # (n, D)
    chol: np.ndarray  # lower factor of K_XX + Sigma (standardized units)
    alpha: np.ndarray  # (K_XX + Sigma)^-1 (y_std - mean)


def _factorize(X, y_std, ls, os, mean, noise, m) -> _ObjectiveFactor:
    K = matern52_matrix(X, X, ls, os)
    K[np.diag_indices_from(K)] += noise + JITTER * os
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(m, str(exc)) from exc
    alpha = scipy.linalg.cho_solve((L, True), y_std - mean)
    return _ObjectiveFactor(X, L, alpha)


@dataclass(frozen=True, eq=False)
class PosteriorState:
    """Multi-output GP conditioned on a list of observations.

    Immutable: :func:`condition` returns a new state.  Use
    :meth:`prior` to construct the empty-data state.
    """

    kernel: KernelSpec
    noise: NoiseModel
    transforms: tuple[Standardizer, ...]
    dim: int
    observations: tuple[ObservationRecord, ...] = ()
    _factors: tuple[_ObjectiveFactor | None, ...] = field(default=(), repr=False)

    @classmethod
    def prior(cls, kernel: KernelSpec, noise: NoiseModel, dim: int,
              transforms: Sequence[Standardizer] | None = None) -> "PosteriorState":
        M = kernel.n_objectives
        if len(noise.noise_variance) != M:
            raise InvalidParameterError("kernel and noise model disagree on the number of objectives")
        transforms = tuple(transforms) if transforms is not None else tuple(Standardizer() for _ in range(M))
        return cls(kernel, noise, transforms, int(dim), (), tuple(None for _ in range(M)))

    @property
    def n_objectives(self) -> int:
        return self.kernel.n_objectives

    def effective_noise(self, m: int) -> float:
        """Noise variance plus factorization jitter, standardized units."""
        return self.noise.noise_variance[m] + JITTER * self.kernel.output_scale[m]

    def objective_data(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        return _objective_data(self.observations, m, self.dim)

    # --- standardized-space building blocks -------------------------------
    def _k(self, m, a, b):
        return matern52_matrix(a, b, self.kernel.length_scale[m], self.kernel.output_scale[m])

    def cross_terms(self, m: int, xs: np.ndarray) -> np.ndarray | None:
        """``L^-1 K(X_m, xs)`` for objective ``m`` or ``None`` without data."""
        fac = self._factors[m]
        if fac is None:
            return None
        return scipy.linalg.solve_triangular(fac.chol, self._k(m, fac.X, xs), lower=True)

    def _mean_std(self, m, xs):
        fac = self._factors[m]
        mu = np.full(len(xs), self.kernel.constant_mean[m])
        if fac is None:
            return mu
        return mu + self._k(m, xs, fac.X) @ fac.alpha

    def mean(self, xs) -> np.ndarray:
        """Posterior mean, shape ``(len(xs), M)``, objective units."""
        xs = np.asarray(xs, float).reshape(-1, self.dim)
        out = np.empty((len(xs), self.n_objectives))
        for m in range(self.n_objectives):
            out[:, m] = self.transforms[m].inverse(self._mean_std(m, xs))
        return out

    def variance(self, xs) -> np.ndarray:
        """Posterior marginal variances, shape ``(len(xs), M)``, objective units."""
        xs = np.asarray(xs, float).reshape(-1, self.dim)
        out = np.empty((len(xs), self.n_objectives))
        for m in range(self.n_objectives):
            v = np.full(len(xs), self.kernel.output_scale[m])
            V = self.cross_terms(m, xs)
            if V is not None:
                v = v - (V * V).sum(0)
            out[:, m] = np.maximum(v, 0.0) * self.transforms[m].scale ** 2
        return out

    def covariance(self, m: int, xs, xs2=None) -> np.ndarray:
        """Posterior covariance block of objective ``m`` (objective units)."""
        xs = np.asarray(xs, float).reshape(-1, self.dim)
        xs2 = xs if xs2 is None else np.asarray(xs2, float).reshape(-1, self.dim)
        C = self._k(m, xs, xs2)
        V1 = self.cross_terms(m, xs)
        if V1 is not None:
            V2 = V1 if xs2 is xs else self.cross_terms(m, xs2)
            C = C - V1.T @ V2
        if xs2 is xs:
            C = 0.5 * (C + C.T)
        return C * self.transforms[m].scale ** 2


def condition(state: PosteriorState, obs: Sequence[ObservationRecord]) -> PosteriorState:
    """Return the posterior after adding ``obs`` to the data of ``state``."""
    obs = tuple(obs)
    M = state.n_objectives
    for o in obs:
        if not 0 <= o.objective < M:
            raise ValueError(f"objective index {o.objective} outside 0..{M - 1}")
        if len(o.location) != state.dim:
            raise ValueError(f"location {o.location} does not have dimension {state.dim}")
        if min(o.location) < 0.0 or max(o.location) > 1.0:
            raise ValueError(f"location {o.location} outside the unit box")
    all_obs = state.observations + obs
    touched = {o.objective for o in obs}
    factors = list(state._factors)
    for m in touched:
        X, y = _objective_data(all_obs, m, state.dim)
        factors[m] = _factorize(
            X, state.transforms[m].transform(y), state.kernel.length_scale[m],
            state.kernel.output_scale[m], state.kernel.constant_mean[m],
            state.noise.noise_variance[m], m)
    return PosteriorState(state.kernel, state.noise, state.transforms, state.dim, all_obs, tuple(factors))


def posterior_mean_cov(state: PosteriorState, xs) -> tuple[np.ndarray, list[np.ndarray]]:
    """Posterior mean ``(len(xs), M)`` and one covariance block per objective."""
    xs = np.asarray(xs, float).reshape(-1, state.dim)
    if len(xs) == 0:
        return np.empty((0, state.n_objectives)), [np.empty((0, 0)) for _ in range(state.n_objectives)]
    return state.mean(xs), [state.covariance(m, xs) for m in range(state.n_objectives)]


class FantasyBasis:
    """Grid quantities shared by every fantasy computation on a fixed grid.

    For a candidate ``x`` and objective ``m`` the scalarized posterior mean
    on the grid after a hypothetical observation ``y = mu_m(x) + z * s`` is
    ``lam . mean[g] + lam[m] * slope[g] * z`` where ``slope`` comes from
    :meth:`slopes`.
    """

    def __init__(self, state: PosteriorState, grid):
        self.state = state
        self.grid = np.asarray(grid, float).reshape(-1, state.dim)
        self.mean = state.mean(self.grid)
        self._grid_terms = [state.cross_terms(m, self.grid) for m in range(state.n_objectives)]

    def slopes(self, m: int, xs) -> np.ndarray:
        """Unit-weight fantasy slopes, shape ``(len(xs), len(grid))``, objective units."""
        st = self.state
        xs = np.asarray(xs, float).reshape(-1, st.dim)
        cov = st._k(m, xs, self.grid)
        var = np.full(len(xs), st.kernel.output_scale[m])
        Vx = st.cross_terms(m, xs)
        if Vx is not None:
            cov = cov - Vx.T @ self._grid_terms[m]
            var = var - (Vx * Vx).sum(0)
        total = np.maximum(var, 0.0) + st.effective_noise(m)
        out = np.zeros_like(cov)
        ok = total > 0
        out[ok] = cov[ok] / np.sqrt(total[ok])[:, None]
        return out * st.transforms[m].scale


def fantasy_affine(state: PosteriorState, x, m: int, lam, grid) -> tuple[np.ndarray, np.ndarray]:
    """Intercepts and slopes of the scalarized fantasy mean on ``grid``.

    ``a + b * z`` is the scalarized posterior mean at each grid point after
    observing objective ``m`` at ``x`` with value
    ``mu_m(x) + z * sqrt(var_m(x) + noise_m)``.
    """
    lam = np.asarray(lam, float)
    basis = FantasyBasis(state, grid)
    a = basis.mean @ lam
    b = lam[m] * basis.slopes(m, np.asarray(x, float)[None, :])[0]
    return a, b
