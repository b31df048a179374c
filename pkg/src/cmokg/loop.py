"""The optimization loop, budget accounting and paired multi-run experiments."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .acquisition import OptimizerConfig, inner_grid, maximize_acquisition
from .gp import ObservationRecord
from .hyperfit import FitConfig, FitResult, family_priors, fit_map, mean_in_objective_units
from .metrics import RegretReport, bayesian_regret, true_archive
from .pareto import Nsga2Config
from .problems import SyntheticProblem, evaluate, generate_problem
from .scalarize import SobolStream, WeightStream, qmc_weights

log = logging.getLogger(__name__)

RUN_MODES = ("cmokg-expectation", "cmokg-random", "benchmark-both")
_ACQ_MODE = {"cmokg-expectation": "expectation", "cmokg-random": "random", "benchmark-both": "benchmark"}

# Offsets from a master seed, multiplied by the repeat index.
SEED_OFFSETS = {"problem": 1000, "design": 2000, "lambda": 3000, "noise": 4000, "optimizer": 5000, "metric": 6000}
# Stream tags keep streams that share an integer seed independent.
_DESIGN_TAG, _LAMBDA_TAG, _METRIC_TAG, _NOISE_TAG = 1, 2, 3, 4


@dataclass(frozen=True)
class RunSeeds:
    problem: int = 0
    design: int = 0
    lambdas: int = 0
    noise: int = 0
    optimizer: int = 0
    metric: int = 0

    @classmethod
    def from_master(cls, master: int, repeat: int) -> "RunSeeds":
        o = SEED_OFFSETS
        return cls(master + o["problem"] * repeat, master + o["design"] * repeat, master + o["lambda"] * repeat,
                   master + o["noise"] * repeat, master + o["optimizer"] * repeat, master + o["metric"] * repeat)


@dataclass(frozen=True)
class RunConfig:
    mode: str = "cmokg-expectation"
    budget: float = 400.0
    initial_points: int = 6
    Q: int = 16
    costs: tuple[float, ...] = (1.0, 10.0)
    seeds: RunSeeds = RunSeeds()
    checkpoint_every: float = 25.0
    inner_grid_size: int = 11
    metric_lambdas: int = 1024
    fit: FitConfig = FitConfig(local_searches=1)
    optimizer: OptimizerConfig = OptimizerConfig()
    nsga: Nsga2Config = Nsga2Config()

    def __post_init__(self):
        if self.mode not in RUN_MODES:
            raise ValueError(f"mode must be one of {RUN_MODES}, got {self.mode!r}")
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.Q < 1 or self.initial_points < 1:
            raise ValueError("Q and initial_points must be at least 1")
        if any(c <= 0 for c in self.costs):
            raise ValueError("costs must be positive")
        if self.checkpoint_every <= 0:
            raise ValueError("checkpoint_every must be positive")


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class BudgetLedger:
    total: float
    spent: float = 0.0

    @property
    def remaining(self) -> float:
        return self.total - self.spent

    def affordable(self, cost: float) -> bool:
        return cost <= self.remaining + 1e-12

    def charge(self, cost: float, *, allow_overdraft: bool = False) -> float:
        if not allow_overdraft and not self.affordable(cost):
            raise BudgetExceeded(f"cost {cost} exceeds remaining budget {self.remaining}")
        self.spent += cost
        return self.spent


@dataclass(frozen=True)
class IterationRecord:
    iteration: int  # 0 for the initial design
    x: tuple[float, ...]
    objective: int | None  # None: every objective evaluated
    y: tuple[float, ...]
    cost: float
    cum_cost: float
    length_scale: tuple[float, ...] = ()
    output_scale: tuple[float, ...] = ()
    noise_variance: tuple[float, ...] = ()
    acquisition_value: float = float("nan")
    fallback: bool = False


@dataclass(frozen=True)
class CheckpointRecord:
    checkpoint_cost: float
    iteration: int  # index of the last completed iteration
    cum_cost: float
    report: RegretReport


@dataclass
class RunTrace:
    config: RunConfig
    family: int
    records: list[IterationRecord] = field(default_factory=list)
    checkpoints: list[CheckpointRecord] = field(default_factory=list)

    @property
    def cum_cost(self) -> float:
        return self.records[-1].cum_cost if self.records else 0.0

    def regret_at(self, checkpoint: float) -> float:
        for c in self.checkpoints:
            if c.checkpoint_cost == checkpoint:
                return c.report.regret
        raise KeyError(checkpoint)


def checkpoint_schedule(design_cost: float, budget: float, every: float) -> list[float]:
    """Design cost, then every multiple of ``every`` beyond it, then the budget."""
    pts = [design_cost]
    k = math.floor(design_cost / every) + 1
    while k * every < budget:
        pts.append(k * every)
        k += 1
    if budget > design_cost:
        pts.append(budget)
    return [float(p) for p in pts]


def initial_design(problem: SyntheticProblem, n: int, seed: int, rng=None,
                   ledger: BudgetLedger | None = None) -> list[ObservationRecord]:
    """``n`` scrambled Sobol' points, each evaluated on every objective."""
    if n < 1:
        raise ValueError("n must be at least 1")
    X = SobolStream(problem.dim, scramble_seed=seed, tag=_DESIGN_TAG).next(n)
    obs = []
    for x in X:
        for m in range(problem.n_objectives):
            y = evaluate(problem, x, m, rng)
            obs.append(ObservationRecord(tuple(x), m, y, problem.costs[m]))
            if ledger is not None:
                ledger.charge(problem.costs[m], allow_overdraft=True)
    return obs


def _fit(obs, dim, priors, config: RunConfig, iteration, previous: FitResult | None, frozen):
    cfg = replace(config.fit, seed=config.seeds.optimizer + iteration)
    return fit_map(obs, priors, cfg, dim=dim, current=previous, frozen_mean=frozen)


def run_bo(problem: SyntheticProblem, config: RunConfig) -> RunTrace:
    costs = tuple(float(c) for c in config.costs)
    M = problem.n_objectives
    seeds = config.seeds
    priors = family_priors(problem.family)
    grid = inner_grid(config.inner_grid_size, problem.dim)
    noise_rng = np.random.default_rng([seeds.noise, _NOISE_TAG])
    weights = WeightStream(M, seeds.lambdas, tag=_LAMBDA_TAG)
    metric_weights = qmc_weights(M, config.metric_lambdas, seeds.metric, tag=_METRIC_TAG)
    nsga = replace(config.nsga, seed=seeds.metric)
    truth = true_archive(problem, replace(config.nsga, seed=seeds.problem))
    if problem.costs != costs:
        problem = replace(problem, costs=costs)

    ledger = BudgetLedger(config.budget)
    trace = RunTrace(config, problem.family)
    obs = initial_design(problem, config.initial_points, seeds.design, noise_rng, ledger)
    for i in range(0, len(obs), M):
        point = obs[i:i + M]
        trace.records.append(IterationRecord(0, tuple(float(v) for v in point[0].location), None,
                                             tuple(o.value for o in point), sum(costs),
                                             sum(costs) * (i // M + 1)))

    pending = checkpoint_schedule(ledger.spent, config.budget, config.checkpoint_every)
    fit = _fit(obs, problem.dim, priors, config, 0, None, None)
    frozen = mean_in_objective_units(fit)
    mode = _ACQ_MODE[config.mode]
    iteration = 0
    while True:
        state = fit.posterior(obs, problem.dim)
        if mode == "benchmark":
            legal = [] if not ledger.affordable(sum(costs)) else list(range(M))
        else:
            legal = [m for m in range(M) if ledger.affordable(costs[m])]
        if not legal:
            _checkpoint(trace, pending, math.inf, state, problem, metric_weights, truth, nsga, iteration,
                        ledger.spent)
            break
        lam = weights.next(1 if mode == "random" else config.Q)
        result = maximize_acquisition(state, mode, lam, grid, costs, config.optimizer,
                                      objectives=None if mode == "benchmark" else legal)
        cost = sum(costs) if result.objective is None else costs[result.objective]
        _checkpoint(trace, pending, ledger.spent + cost, state, problem, metric_weights, truth, nsga,
                    iteration, ledger.spent)
        x = result.x
        targets = range(M) if result.objective is None else [result.objective]
        ys = tuple(evaluate(problem, x, m, noise_rng) for m in targets)
        obs += [ObservationRecord(tuple(x), m, y, costs[m]) for m, y in zip(targets, ys)]
        cum = ledger.charge(cost)
        iteration += 1
        trace.records.append(IterationRecord(
            iteration, tuple(float(v) for v in x), result.objective, ys, cost, cum,
            fit.kernel.length_scale, fit.kernel.output_scale, fit.noise.noise_variance,
            result.value, result.fallback))
        fit = _fit(obs, problem.dim, priors, config, iteration, fit, frozen)
    return trace


def _checkpoint(trace, pending, limit, state, problem, lam, truth, nsga, iteration, cum_cost):
    # every checkpoint strictly below the cost reached by the next action
    # is scored on the current state
    while pending and pending[0] < limit:
        t = pending.pop(0)
        if t < cum_cost - 1e-9:
            continue
        report = bayesian_regret(state, problem, lam, nsga, true_set=truth)
        trace.checkpoints.append(CheckpointRecord(t, iteration, cum_cost, report))


# --- experiments -----------------------------------------------------------

@dataclass(frozen=True)
class RunOutcome:
    family: int
    repeat: int
    mode: str
    seeds: RunSeeds
    trace: RunTrace | None
    error: str | None = None


@dataclass(frozen=True)
class AggregateRow:
    family: int
    mode: str
    checkpoint_cost: float
    mean_regret: float
    ci95_halfwidth: float | None
    mean_normalized_regret: float
    n_runs: int
    n_failed: int


@dataclass
class ExperimentResult:
    outcomes: list[RunOutcome]
    aggregate: list[AggregateRow]

    def regrets(self, family: int, mode: str, checkpoint: float, normalized: bool = False) -> np.ndarray:
        """Per-repeat regret, ordered by repeat index (NaN for failed runs)."""
        out = []
        for o in sorted(self.outcomes, key=lambda o: o.repeat):
            if o.family != family or o.mode != mode:
                continue
            if o.trace is None:
                out.append(np.nan)
                continue
            rep = next(c.report for c in o.trace.checkpoints if c.checkpoint_cost == checkpoint)
            out.append(rep.normalized_regret if normalized else rep.regret)
        return np.array(out)


@dataclass(frozen=True)
class RegretRow:
    family: int
    mode: str
    run_seed: int
    checkpoint_cost: float
    regret: float
    normalized_regret: float


def regret_rows(outcomes: Sequence[RunOutcome]) -> list[RegretRow]:
    return [RegretRow(o.family, o.mode, o.seeds.problem, c.checkpoint_cost, c.report.regret,
                      c.report.normalized_regret)
            for o in outcomes if o.trace is not None for c in o.trace.checkpoints]


def aggregate_rows(rows: Sequence[RegretRow], failures: dict | None = None) -> list[AggregateRow]:
    """Mean regret and 95% normal-approximation halfwidth per (family, mode, checkpoint).

    ``failures`` maps ``(family, mode)`` to the number of failed runs.
    """
    failures = dict(failures or {})
    groups: dict = {}
    for key in failures:
        groups.setdefault(key, {})
    for r in rows:
        groups.setdefault((r.family, r.mode), {}).setdefault(r.checkpoint_cost, []).append(
            (r.run_seed, r.regret, r.normalized_regret))

    def mode_order(mode):
        return (RUN_MODES.index(mode), mode) if mode in RUN_MODES else (len(RUN_MODES), mode)

    out = []
    for family, mode in sorted(groups, key=lambda k: (k[0], mode_order(k[1]))):
        for t in sorted(groups[(family, mode)]):
            vals = sorted(groups[(family, mode)][t])  # seed order keeps sums order independent
            r = np.array([v[1] for v in vals])
            nr = np.array([v[2] for v in vals])
            n = len(r)
            ci = float(1.96 * r.std(ddof=1) / math.sqrt(n)) if n > 1 else None
            out.append(AggregateRow(family, mode, t, float(r.mean()), ci, float(nr.mean()), n,
                                    failures.get((family, mode), 0)))
    return out


def failure_counts(outcomes: Sequence[RunOutcome]) -> dict:
    counts: dict = {}
    for o in outcomes:
        if o.trace is None:
            counts[(o.family, o.mode)] = counts.get((o.family, o.mode), 0) + 1
    return counts


def aggregate(outcomes: Sequence[RunOutcome]) -> list[AggregateRow]:
    return aggregate_rows(regret_rows(outcomes), failure_counts(outcomes))


def _one(args):
    family, repeat, mode, seeds, base, loader = args
    try:
        problem = loader(family, seeds.problem) if loader else generate_problem(family, seeds.problem, base.costs)
        trace = run_bo(problem, replace(base, mode=mode, seeds=seeds))
        return RunOutcome(family, repeat, mode, seeds, trace)
    except Exception as err:  # recorded and counted, never silently dropped
        log.warning("run family=%s repeat=%s mode=%s failed: %s", family, repeat, mode, err)
        return RunOutcome(family, repeat, mode, seeds, None, f"{type(err).__name__}: {err}")


def run_experiment(families: Sequence[int], modes: Sequence[str], repeats: int, base_seed: int,
                   base: RunConfig = RunConfig(), threads: int = 1,
                   problem_loader: Callable[[int, int], SyntheticProblem] | None = None) -> ExperimentResult:
    """Paired runs: for each repeat every mode sees the same problem and seeds.

    ``problem_loader(family, seed)`` supplies problems (e.g. from archive
    files); by default they are generated.
    """
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    for mode in modes:
        if mode not in RUN_MODES:
            raise ValueError(f"unknown mode {mode!r}")
    jobs = [(f, i, mode, RunSeeds.from_master(base_seed, i), base, problem_loader)
            for f in families for i in range(repeats) for mode in modes]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(_one, jobs))
    else:
        outcomes = [_one(j) for j in jobs]
    return ExperimentResult(outcomes, aggregate(outcomes))
