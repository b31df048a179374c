"""Fast oracle checks runnable from the command line."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy.stats import norm

from .gp import (KernelSpec, NoiseModel, ObservationRecord, PosteriorState, condition, fantasy_affine,
                 matern52_matrix)
from .kg import cmokg, expected_max_affine, mokg_discrete
from .metrics import bayesian_regret
from .pareto import ParetoArchive, non_dominated_filter
from .scalarize import SobolStream


def random_state(rng, n_obs: int = 3, dim: int = 2, noise=(1e-4, 0.05)) -> PosteriorState:
    kernel = KernelSpec(rng.uniform(0.2, 1.0, 2), rng.uniform(0.5, 2.0, 2), rng.normal(0, 0.3, 2))
    prior = PosteriorState.prior(kernel, NoiseModel(noise, (False, True)), dim)
    obs = [ObservationRecord(tuple(rng.random(dim)), int(rng.integers(2)), float(rng.normal())) for _ in range(n_obs)]
    return condition(prior, obs)


def dense_posterior(state: PosteriorState, m: int, xs):
    """Posterior mean and covariance of objective ``m`` by a direct dense solve."""
    ls, os, mu = state.kernel.length_scale[m], state.kernel.output_scale[m], state.kernel.constant_mean[m]
    X, y = state.objective_data(m)
    tr = state.transforms[m]
    Kss = matern52_matrix(xs, xs, ls, os)
    if len(X) == 0:
        return tr.inverse(np.full(len(xs), mu)), Kss * tr.scale ** 2
    K = matern52_matrix(X, X, ls, os) + state.effective_noise(m) * np.eye(len(X))
    Ks = matern52_matrix(xs, X, ls, os)
    mean = mu + Ks @ np.linalg.solve(K, tr.transform(y) - mu)
    cov = Kss - Ks @ np.linalg.solve(K, Ks.T)
    return tr.inverse(mean), cov * tr.scale ** 2


def _check_expected_max():
    a, b = np.array([0.0, 0.0]), np.array([-1.0, 1.0])
    ok = abs(expected_max_affine(a, b) - math.sqrt(2 / math.pi)) < 1e-12
    ok &= abs(expected_max_affine([1.0, 0.0], [0.0, 1.0]) - (norm.cdf(1) + norm.pdf(1))) < 1e-12
    return ok, "closed-form expected maxima"


def _check_conditioning():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10):
        st = random_state(rng, int(rng.integers(1, 8)))
        xs = rng.random((5, 2))
        for m in range(2):
            mu, cov = dense_posterior(st, m, xs)
            worst = max(worst, np.abs(st.mean(xs)[:, m] - mu).max(), np.abs(st.covariance(m, xs) - cov).max())
    return worst < 1e-8, f"max deviation from dense solve {worst:.2e}"


def _check_fantasy():
    rng = np.random.default_rng(2)
    grid = rng.random((6, 2))
    worst = 0.0
    for _ in range(5):
        st = random_state(rng)
        x, m, lam = rng.random(2), int(rng.integers(2)), np.array([0.3, 0.7])
        a, b = fantasy_affine(st, x, m, lam, grid)
        z = 0.8
        sd = math.sqrt(st.variance(x[None])[0, m] + st.effective_noise(m) * st.transforms[m].scale ** 2)
        y = st.mean(x[None])[0, m] + z * sd
        post = condition(st, [ObservationRecord(tuple(x), m, float(y))])
        worst = max(worst, np.abs(a + b * z - post.mean(grid) @ lam).max())
    return worst < 1e-8, f"max deviation from re-conditioning {worst:.2e}"


def _check_nonnegative():
    rng = np.random.default_rng(3)
    grid = rng.random((8, 2))
    low = min(cmokg(random_state(rng), rng.random(2), int(rng.integers(2)), np.array([0.5, 0.5]), grid, (1, 10))
              for _ in range(50))
    return low >= -1e-10, f"smallest C-MOKG {low:.2e}"


def _check_kg_monte_carlo():
    rng = np.random.default_rng(4)
    st = random_state(rng, 2)
    grid = rng.random((5, 2))
    x, lam = rng.random(2), np.array([0.6, 0.4])
    a, b = fantasy_affine(st, x, 0, lam, grid)
    z = np.random.default_rng(5).standard_normal(200_000)
    draws = (a[None, :] + b[None, :] * z[:, None]).max(axis=1) - a.max()
    exact = mokg_discrete(st, x, 0, lam, grid)
    se = draws.std(ddof=1) / math.sqrt(len(z))
    return abs(exact - draws.mean()) <= 3 * se + 1e-12, f"|exact - MC| = {abs(exact - draws.mean()):.2e}, se {se:.2e}"


def _check_sobol():
    first = SobolStream(2, scramble_seed=None).next(1)[0]
    return bool(np.all(first == 0.5)), f"first unscrambled point {first.tolist()}"


def _check_pareto():
    keep = non_dominated_filter([[1, 1], [2, 0], [0, 2], [0.5, 0.5]]).tolist()
    return keep == [0, 1, 2], f"kept {keep}"


def _check_regret():
    X = np.linspace(0, 1, 5)[:, None]
    F = np.array([[0.0, 1.0], [0.4, 0.9], [0.7, 0.6], [0.9, 0.2], [1.0, 0.0]])

    class Toy:
        def true_values(self, xs):
            return F[np.rint(np.asarray(xs)[:, 0] * 4).astype(int)]

    class Shifted:
        def mean(self, xs):
            return Toy().true_values(xs)[:, ::-1]

    lam = np.array([[1.0, 0.0], [0.0, 1.0]])
    arch = ParetoArchive(X, F)
    rep = bayesian_regret(Shifted(), Toy(), lam, true_set=arch, posterior_set=arch)
    return rep.regret == 1.0, f"toy regret {rep.regret}"


CHECKS: dict[str, Callable[[], tuple[bool, str]]] = {
    "expected-max closed forms": _check_expected_max,
    "conditioning vs dense solve": _check_conditioning,
    "fantasy vs re-conditioning": _check_fantasy,
    "C-MOKG non-negativity": _check_nonnegative,
    "KG vs fantasy Monte-Carlo": _check_kg_monte_carlo,
    "Sobol' first point": _check_sobol,
    "non-dominated filter": _check_pareto,
    "regret on an enumerated toy": _check_regret,
}


def run_selftest(write=print) -> bool:
    all_ok = True
    for name, check in CHECKS.items():
        try:
            ok, detail = check()
        except Exception as err:  # a crash is a failed check
            ok, detail = False, f"{type(err).__name__}: {err}"
        all_ok &= bool(ok)
        write(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return all_ok
