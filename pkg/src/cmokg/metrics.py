"""R2 indicator and Bayesian regret over NSGA-II Pareto-set estimates."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gp import PosteriorState
from .pareto import Nsga2Config, ParetoArchive, nsga2_maximize

TARGET_POINTS = 1000
SLACK_FRACTION = 0.02

_TRUE_ARCHIVES: dict = {}


@dataclass(frozen=True)
class RegretReport:
    optimal_expected_utility: float
    expected_utility: float
    regret: float
    lambda_count: int
    standard_error: float  # of the weight average
    utility_range: float  # mean over weights of (max - min) scalarized true value on the true front
    true_archive_size: int
    posterior_archive_size: int
    nsga_seed: int | None = None

    @property
    def normalized_regret(self) -> float:
        return self.regret / self.utility_range

    @property
    def slack(self) -> float:
        """Tolerance below zero that regret may reach through sampling and archive error."""
        return 3.0 * self.standard_error + SLACK_FRACTION * self.utility_range


def r2_indicator(S, f_true: Callable[[np.ndarray], np.ndarray], lambdas) -> float:
    """Mean over weights of the best scalarized true value within ``S``."""
    S = np.atleast_2d(np.asarray(S, float))
    if len(S) == 0:
        raise ValueError("solution set is empty")
    F = np.asarray(f_true(S), float)
    return float((np.asarray(lambdas, float) @ F.T).max(axis=1).mean())


def _problem_key(problem):
    values = getattr(problem, "values", None)
    if values is None:
        return None
    return (problem.family, problem.seed, values.tobytes())


def true_archive(problem, nsga_config: Nsga2Config, target_points: int = TARGET_POINTS) -> ParetoArchive:
    """NSGA-II estimate of the true Pareto set, cached per problem and settings."""
    key = _problem_key(problem)
    if key is not None:
        key = key + (nsga_config, target_points)
        if key in _TRUE_ARCHIVES:
            return _TRUE_ARCHIVES[key]
    archive = nsga2_maximize(problem.true_values, problem.dim, nsga_config, target_points)
    if key is not None:
        _TRUE_ARCHIVES[key] = archive
    return archive


def posterior_archive(state: PosteriorState, nsga_config: Nsga2Config,
                      target_points: int = TARGET_POINTS) -> ParetoArchive:
    return nsga2_maximize(state.mean, state.dim, nsga_config, target_points)


def bayesian_regret(state: PosteriorState, problem, lambdas, nsga_config: Nsga2Config = Nsga2Config(),
                    true_set: ParetoArchive | None = None,
                    posterior_set: ParetoArchive | None = None) -> RegretReport:
    """Regret of recommending, for each weight, the posterior-mean maximizer.

    The optimal term maximizes the scalarized truth over ``true_set``; the
    recommendation for each weight maximizes the scalarized posterior mean
    over ``posterior_set`` and is scored under the truth.  Either archive is
    estimated with NSGA-II when not supplied.
    """
    lam = np.atleast_2d(np.asarray(lambdas, float))
    if true_set is None:
        true_set = true_archive(problem, nsga_config)
    if posterior_set is None:
        posterior_set = posterior_archive(state, nsga_config)
    T = np.asarray(problem.true_values(true_set.points), float)
    scal_T = lam @ T.T  # (L, n_true)
    best = scal_T.max(axis=1)
    P = np.asarray(posterior_set.points, float)
    mu = state.mean(P)
    choice = np.argmax(lam @ mu.T, axis=1)  # first index on ties
    F = np.asarray(problem.true_values(P), float)
    achieved = np.einsum("lm,lm->l", lam, F[choice])
    per_weight = best - achieved
    L = len(lam)
    se = float(per_weight.std(ddof=1) / np.sqrt(L)) if L > 1 else 0.0
    span = float((scal_T.max(axis=1) - scal_T.min(axis=1)).mean())
    return RegretReport(
        optimal_expected_utility=float(best.mean()),
        expected_utility=float(achieved.mean()),
        regret=float(best.mean() - achieved.mean()),
        lambda_count=L,
        standard_error=se,
        utility_range=span if span > 0 else 1.0,
        true_archive_size=len(true_set),
        posterior_archive_size=len(posterior_set),
        nsga_seed=nsga_config.seed,
    )


def hypervolume_2d(values, reference) -> float:
    """Dominated hypervolume of a 2-D point set (maximization) above ``reference``."""
    V = np.asarray(values, float)
    ref = np.asarray(reference, float)
    V = V[np.all(V > ref, axis=1)]
    if len(V) == 0:
        return 0.0
    V = V[np.argsort(-V[:, 0], kind="stable")]
    hv, top = 0.0, ref[1]
    for f1, f2 in V:
        if f2 > top:
            hv += (f1 - ref[0]) * (f2 - top)
            top = f2
    return float(hv)
