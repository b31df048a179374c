"""MAP estimation of GP hyper-parameters under Gamma priors.

Each objective is fitted separately on its standardized data.  The free
parameters are ``log length_scale``, ``log output_scale`` and, when the
noise is learnable, ``log noise_variance``; the constant mean is optional and
is usually fitted once on the initial design and then frozen.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.special import gammaln

from .gp import (FIXED_NOISE, JITTER, SQRT5, KernelSpec, NoiseModel, ObservationRecord,
                 PosteriorState, Standardizer, _distances, condition, standardize)

log = logging.getLogger(__name__)

LOG_LS_BOUNDS = (np.log(0.01), np.log(10.0))
LOG_OS_BOUNDS = (np.log(1e-4), np.log(1e3))
LOG_NOISE_BOUNDS = (np.log(1e-6), np.log(1e2))


@dataclass(frozen=True)
class GammaPrior:
    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Gamma shape and rate must be positive")

    def sample(self, rng, size=None):
        return rng.gamma(self.alpha, 1.0 / self.beta, size)


def gamma_log_pdf(z: float, prior: GammaPrior) -> float:
    if z <= 0:
        raise ValueError(f"Gamma density is only defined for z > 0, got {z}")
    a, b = prior.alpha, prior.beta
    return float(a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(z) - b * z)


@dataclass(frozen=True)
class ObjectivePriors:
    """Priors for one objective.  ``noise`` is a GammaPrior or a fixed variance."""

    length_scale: GammaPrior
    output_scale: GammaPrior
    noise: GammaPrior | float = FIXED_NOISE

    @property
    def noise_fixed(self) -> bool:
        return not isinstance(self.noise, GammaPrior)


PriorSet = tuple[ObjectivePriors, ...]


def family_priors(family: int) -> PriorSet:
    """Surrogate priors used for the two synthetic problem families."""
    os_prior = GammaPrior(2.0, 0.15)
    if family == 1:
        return (ObjectivePriors(GammaPrior(3.0, 10.0), os_prior, FIXED_NOISE),
                ObjectivePriors(GammaPrior(3.0, 1.1), os_prior, FIXED_NOISE))
    if family == 2:
        return (ObjectivePriors(GammaPrior(3.0, 10.0), os_prior, GammaPrior(1.1, 0.05)),
                ObjectivePriors(GammaPrior(3.0, 10.0), os_prior, FIXED_NOISE))
    raise ValueError(f"unknown problem family {family}")


@dataclass(frozen=True)
class FitConfig:
    """``restarts`` initializations (current values plus prior draws).

    ``local_searches`` limits how many of them, best first, are polished by
    L-BFGS-B; ``None`` polishes all of them.
    """

    restarts: int = 8
    max_iterations: int = 200
    seed: int = 0
    local_searches: int | None = None


@dataclass(frozen=True)
class ObjectiveFit:
    length_scale: float
    output_scale: float
    noise_variance: float
    mean: float
    log_posterior: float
    improved: bool


@dataclass(frozen=True)
class FitResult:
    kernel: KernelSpec
    noise: NoiseModel
    transforms: tuple[Standardizer, ...]
    log_posterior: tuple[float, ...]
    warning: bool = False
    details: tuple[ObjectiveFit, ...] = field(default=(), repr=False)

    def posterior(self, observations: Sequence[ObservationRecord], dim: int) -> PosteriorState:
        prior = PosteriorState.prior(self.kernel, self.noise, dim, self.transforms)
        return condition(prior, observations)


def _matern_parts(D, ls):
    r = D / ls
    e = np.exp(-SQRT5 * r)
    k = (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
    dk_dlogls = (5.0 / 3.0) * r * r * (1.0 + SQRT5 * r) * e
    return k, dk_dlogls


def _inverse_from_cholesky(L):
    inv, info = scipy.linalg.lapack.dpotri(L, lower=1)
    if info != 0:
        raise np.linalg.LinAlgError(f"dpotri failed with info={info}")
    lower = np.tril(inv)
    return lower + np.tril(inv, -1).T


def _gp_terms(D, y, ls, os, noise, mean):
    """Cholesky factor, alpha and the unit-variance kernel pieces."""
    n = len(y)
    k, dk = _matern_parts(D, ls)
    K = os * (k + JITTER * np.eye(n)) + noise * np.eye(n)
    L = np.linalg.cholesky(K)
    alpha = scipy.linalg.cho_solve((L, True), y - mean)
    return L, alpha, k, dk


def log_marginal_likelihood(X, y, length_scale: float, output_scale: float,
                            noise_variance: float, mean: float = 0.0) -> float:
    """GP evidence of one objective's (already standardized) data."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if len(y) < 1:
        raise ValueError("need at least one observation")
    D = _distances(X, X)
    L, alpha, _, _ = _gp_terms(D, y, length_scale, output_scale, noise_variance, mean)
    r = y - mean
    return float(-0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * np.log(2 * np.pi))


class _Objective:
    """Negative log posterior and gradient in the packed parameter vector."""

    def __init__(self, X, y, priors: ObjectivePriors, noise_value: float | None, mean_value: float | None):
        self.D = _distances(X, X)
        self.y = y
        self.n = len(y)
        self.priors = priors
        self.noise_value = noise_value  # None -> learnable
        self.mean_value = mean_value  # None -> free

    def unpack(self, theta):
        ls, os = np.exp(theta[0]), np.exp(theta[1])
        i = 2
        if self.noise_value is None:
            noise = np.exp(theta[i])
            i += 1
        else:
            noise = self.noise_value
        mean = theta[i] if self.mean_value is None else self.mean_value
        return ls, os, noise, mean

    def bounds(self):
        b = [LOG_LS_BOUNDS, LOG_OS_BOUNDS]
        if self.noise_value is None:
            b.append(LOG_NOISE_BOUNDS)
        if self.mean_value is None:
            b.append((None, None))
        return b

    def pack(self, ls, os, noise, mean):
        th = [np.log(ls), np.log(os)]
        if self.noise_value is None:
            th.append(np.log(noise))
        if self.mean_value is None:
            th.append(mean)
        return np.array(th, float)

    def log_posterior(self, theta, with_grad=False):
        ls, os, noise, mean = self.unpack(theta)
        try:
            L, alpha, k, dk = _gp_terms(self.D, self.y, ls, os, noise, mean)
        except np.linalg.LinAlgError:
            return (-np.inf, np.zeros_like(theta)) if with_grad else -np.inf
        r = self.y - mean
        lp = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * self.n * np.log(2 * np.pi)
        lp += gamma_log_pdf(ls, self.priors.length_scale) + gamma_log_pdf(os, self.priors.output_scale)
        if self.noise_value is None:
            lp += gamma_log_pdf(noise, self.priors.noise)
        if not with_grad:
            return lp
        Kinv = _inverse_from_cholesky(L)
        # 0.5 * tr((alpha alpha^T - K^-1) dK) for each dK
        tr_w = alpha @ alpha - np.trace(Kinv)
        g = [0.5 * os * (alpha @ dk @ alpha - np.sum(Kinv * dk)),
             0.5 * os * (alpha @ k @ alpha - np.sum(Kinv * k) + JITTER * tr_w)]
        a, b = self.priors.length_scale.alpha, self.priors.length_scale.beta
        g[0] += (a - 1.0) - b * ls
        a, b = self.priors.output_scale.alpha, self.priors.output_scale.beta
        g[1] += (a - 1.0) - b * os
        if self.noise_value is None:
            a, b = self.priors.noise.alpha, self.priors.noise.beta
            g.append(0.5 * tr_w * noise + (a - 1.0) - b * noise)
        if self.mean_value is None:
            g.append(alpha.sum())
        return lp, np.array(g)

    def negative(self, theta):
        lp, g = self.log_posterior(theta, with_grad=True)
        if not np.isfinite(lp):
            return 1e300, np.zeros_like(theta)
        return -lp, -g


def _clip_into(theta, bounds):
    out = theta.copy()
    for i, (lo, hi) in enumerate(bounds):
        if lo is not None:
            out[i] = min(max(out[i], lo), hi)
    return out


def fit_objective(X, y_std, priors: ObjectivePriors, current: tuple[float, float, float, float] | None = None,
                  mean: float | None = None, config: FitConfig = FitConfig()) -> ObjectiveFit:
    """MAP fit of one objective's standardized data.

    ``current`` is ``(length_scale, output_scale, noise_variance, mean)`` and
    is used as the first initialization.  ``mean=None`` fits the constant
    mean; otherwise it is held at the given value.
    """
    X = np.asarray(X, float)
    y_std = np.asarray(y_std, float)
    if len(y_std) < 1:
        raise ValueError("need at least one observation per objective")
    noise_value = None if not priors.noise_fixed else float(priors.noise)
    obj = _Objective(X, y_std, priors, noise_value, mean)
    bounds = obj.bounds()
    rng = np.random.default_rng(config.seed)

    if current is None:
        ls0 = priors.length_scale.alpha / priors.length_scale.beta
        os0 = priors.output_scale.alpha / priors.output_scale.beta
        nz0 = priors.noise.alpha / priors.noise.beta if noise_value is None else noise_value
        current = (ls0, os0, nz0, 0.0)
    mean0 = current[3] if mean is None else mean
    starts = [obj.pack(current[0], current[1], current[2], mean0)]
    for _ in range(config.restarts - 1):
        ls = priors.length_scale.sample(rng)
        os = priors.output_scale.sample(rng)
        nz = priors.noise.sample(rng) if noise_value is None else noise_value
        starts.append(obj.pack(ls, os, nz, mean0))
    starts = [_clip_into(s, bounds) for s in starts]

    init_values = [obj.log_posterior(s) for s in starts]
    best_theta, best_lp, improved = None, -np.inf, False
    for s, lp0 in zip(starts, init_values):
        if np.isfinite(lp0) and lp0 > best_lp:
            best_theta, best_lp = s, lp0
    best_init = best_lp
    ranked = sorted(range(len(starts)), key=lambda i: (-init_values[i] if np.isfinite(init_values[i]) else np.inf, i))
    if config.local_searches is not None:
        ranked = ranked[: config.local_searches]
    for s in (starts[i] for i in sorted(ranked)):
        try:
            res = scipy.optimize.minimize(obj.negative, s, jac=True, method="L-BFGS-B", bounds=bounds,
                                          options={"maxiter": config.max_iterations})
        except (ValueError, np.linalg.LinAlgError):
            continue
        lp = -res.fun
        # strict improvement; ties keep the earlier restart
        if np.isfinite(lp) and lp > best_lp:
            best_theta, best_lp = res.x, lp
            improved = True
    if best_theta is None:
        raise np.linalg.LinAlgError("no initialization gave a finite log posterior")
    if not improved:
        log.debug("MAP fit did not improve on its best initialization (%.6g)", best_init)
    ls, os, nz, mu = obj.unpack(best_theta)
    return ObjectiveFit(float(ls), float(os), float(nz), float(mu), float(best_lp), improved)


def fit_map(observations: Sequence[ObservationRecord], priors: PriorSet, config: FitConfig = FitConfig(),
            *, dim: int | None = None, current: FitResult | None = None,
            frozen_mean: Sequence[float] | None = None) -> FitResult:
    """Fit every objective's hyper-parameters by MAP.

    ``frozen_mean`` gives per-objective constant means in *objective units*
    that are held fixed; without it the means are fitted.
    """
    observations = list(observations)
    M = len(priors)
    if dim is None:
        dim = len(observations[0].location)
    fits, transforms = [], []
    for m in range(M):
        recs = [o for o in observations if o.objective == m]
        if not recs:
            raise ValueError(f"objective {m} has no observations")
        X = np.array([o.location for o in recs], float).reshape(len(recs), dim)
        y_std, tr = standardize([o.value for o in recs])
        mean = None if frozen_mean is None else float(tr.transform(frozen_mean[m]))
        cur = None
        if current is not None:
            cur = (current.kernel.length_scale[m], current.kernel.output_scale[m],
                   current.noise.noise_variance[m],
                   float(tr.transform(current.transforms[m].inverse(current.kernel.constant_mean[m]))))
        cfg = FitConfig(config.restarts, config.max_iterations, config.seed + 7919 * m, config.local_searches)
        fits.append(fit_objective(X, y_std, priors[m], cur, mean, cfg))
        transforms.append(tr)
    kernel = KernelSpec([f.length_scale for f in fits], [f.output_scale for f in fits], [f.mean for f in fits])
    noise = NoiseModel([f.noise_variance for f in fits], [not p.noise_fixed for p in priors])
    return FitResult(kernel, noise, tuple(transforms), tuple(f.log_posterior for f in fits),
                     warning=not all(f.improved for f in fits), details=tuple(fits))


def mean_in_objective_units(fit: FitResult) -> tuple[float, ...]:
    return tuple(float(t.inverse(mu)) for t, mu in zip(fit.transforms, fit.kernel.constant_mean))
