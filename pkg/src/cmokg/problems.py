"""Synthetic bi-objective test problems drawn from Gaussian processes.

A problem is the posterior mean of a generator GP conditioned on a joint
prior sample at 100 scrambled-Sobol' locations in ``[0, 1]^2``.  Both
objectives share the same locations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .gp import JITTER, matern52_matrix
from .scalarize import SobolStream

FORMAT = "cmokg-problem"
FORMAT_VERSION = 1
N_CONDITIONING = 100
DEFAULT_COSTS = (1.0, 10.0)

# Generator hyper-parameters per family: length scale, output scale, mean, noise sd.
FAMILIES = {
    1: dict(length_scale=(0.2, 1.8), output_scale=(1.0, 50.0), constant_mean=(0.0, 0.0), noise_sd=(0.0, 0.0)),
    2: dict(length_scale=(0.4, 0.4), output_scale=(1.0, 1.0), constant_mean=(0.0, 0.0), noise_sd=(1.0, 0.0)),
}


@dataclass(frozen=True, eq=False)
class SyntheticProblem:
    family: int
    seed: int
    length_scale: tuple[float, ...]
    output_scale: tuple[float, ...]
    constant_mean: tuple[float, ...]
    noise_sd: tuple[float, ...]
    costs: tuple[float, ...]
    locations: np.ndarray  # (100, 2)
    values: np.ndarray  # (100, M) prior sample at the locations
    _weights: tuple[np.ndarray, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if not self._weights:
            w = []
            for m in range(self.n_objectives):
                K = self._kernel(m, self.locations, self.locations)
                K[np.diag_indices_from(K)] += JITTER * self.output_scale[m]
                L = np.linalg.cholesky(K)
                w.append(scipy.linalg.cho_solve((L, True), self.values[:, m] - self.constant_mean[m]))
            object.__setattr__(self, "_weights", tuple(w))

    @property
    def n_objectives(self) -> int:
        return len(self.length_scale)

    @property
    def dim(self) -> int:
        return self.locations.shape[1]

    def _kernel(self, m, a, b):
        return matern52_matrix(a, b, self.length_scale[m], self.output_scale[m])

    def true_values(self, xs) -> np.ndarray:
        """Noise-free objective values, shape ``(len(xs), M)``."""
        xs = np.asarray(xs, float).reshape(-1, self.dim)
        return np.column_stack([self.constant_mean[m] + self._kernel(m, xs, self.locations) @ self._weights[m]
                                for m in range(self.n_objectives)])

    def __call__(self, xs) -> np.ndarray:
        return self.true_values(xs)

    # --- serialization ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "family": self.family,
            "seed": self.seed,
            "kernel": "Matern52",
            "length_scale": list(self.length_scale),
            "output_scale": list(self.output_scale),
            "constant_mean": list(self.constant_mean),
            "noise_sd": list(self.noise_sd),
            "costs": list(self.costs),
            "jitter": JITTER,
            "locations_shared": True,
            "locations": self.locations.tolist(),
            "values": self.values.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticProblem":
        if d.get("format") != FORMAT:
            raise ValueError(f"not a problem archive (format={d.get('format')!r})")
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported problem archive version {d.get('version')!r}")
        return cls(int(d["family"]), int(d["seed"]), tuple(d["length_scale"]), tuple(d["output_scale"]),
                   tuple(d["constant_mean"]), tuple(d["noise_sd"]), tuple(d["costs"]),
                   np.array(d["locations"], float), np.array(d["values"], float))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.dumps(), newline="\n")
        return path

    @classmethod
    def load(cls, path) -> "SyntheticProblem":
        return cls.from_dict(json.loads(Path(path).read_text()))


def problem_filename(family: int, seed: int) -> str:
    return f"family{family}_seed{seed}.problem"


def generate_problem(family: int, seed: int, costs=DEFAULT_COSTS) -> SyntheticProblem:
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {sorted(FAMILIES)}, got {family}")
    hp = FAMILIES[family]
    locations = SobolStream(2, scramble_seed=seed).next(N_CONDITIONING)
    rng = np.random.default_rng([seed, family])
    values = np.empty((N_CONDITIONING, 2))
    for m in range(2):
        K = matern52_matrix(locations, locations, hp["length_scale"][m], hp["output_scale"][m])
        K[np.diag_indices_from(K)] += JITTER * hp["output_scale"][m]
        L = np.linalg.cholesky(K)
        values[:, m] = hp["constant_mean"][m] + L @ rng.standard_normal(N_CONDITIONING)
    return SyntheticProblem(family, int(seed), hp["length_scale"], hp["output_scale"], hp["constant_mean"],
                            hp["noise_sd"], tuple(float(c) for c in costs), locations, values)


def evaluate(problem: SyntheticProblem, x, m: int, rng=None) -> float:
    """Observe objective ``m`` at ``x``, adding the objective's Gaussian noise."""
    x = np.asarray(x, float)
    if x.shape != (problem.dim,) or np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError(f"x={x} is outside the unit box")
    if not 0 <= m < problem.n_objectives:
        raise ValueError(f"objective index {m} outside 0..{problem.n_objectives - 1}")
    y = float(problem.true_values(x)[0, m])
    sd = problem.noise_sd[m]
    if sd > 0:
        if rng is None:
            raise ValueError("a random generator is required for noisy objectives")
        y += sd * float(rng.standard_normal())
    return y
