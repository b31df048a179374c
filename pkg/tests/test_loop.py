from dataclasses import replace

import numpy as np
import pytest

from cmokg.acquisition import OptimizerConfig
from cmokg.loop import (BudgetExceeded, BudgetLedger, RegretRow, RunConfig, RunSeeds, aggregate_rows,
                        checkpoint_schedule, initial_design, run_bo, run_experiment)
from cmokg.pareto import Nsga2Config
from cmokg.problems import generate_problem

FAST = RunConfig(budget=120, Q=4, metric_lambdas=64, optimizer=OptimizerConfig(restarts=2, max_iterations=20),
                 nsga=Nsga2Config(population=20, generations=10), seeds=RunSeeds(1, 2, 3, 4, 5, 6))


@pytest.fixture(scope="module")
def problem():
    return generate_problem(1, 1)


@pytest.fixture(scope="module")
def traces(problem):
    return {mode: run_bo(problem, replace(FAST, mode=mode))
            for mode in ("cmokg-expectation", "cmokg-random", "benchmark-both")}


def test_ledger():
    led = BudgetLedger(10)
    assert led.charge(4) == 4 and led.remaining == 6
    with pytest.raises(BudgetExceeded):
        led.charge(7)
    assert led.affordable(6) and not led.affordable(6.5)
    led.charge(6)
    assert led.remaining == 0


def test_checkpoint_schedule():
    assert checkpoint_schedule(66, 400, 25)[:3] == [66.0, 75.0, 100.0]
    assert checkpoint_schedule(66, 400, 25)[-2:] == [375.0, 400.0]
    assert checkpoint_schedule(75, 100, 25) == [75.0, 100.0]
    assert checkpoint_schedule(66, 66, 25) == [66.0]


def test_initial_design(problem):
    led = BudgetLedger(400)
    obs = initial_design(problem, 6, 9, ledger=led)
    assert len(obs) == 12 and led.spent == 66
    X = np.array([o.location for o in obs])
    assert np.all((X >= 0) & (X <= 1))
    assert [o.objective for o in obs] == [0, 1] * 6
    again = initial_design(problem, 6, 9)
    assert [o.location for o in again] == [o.location for o in obs]
    with pytest.raises(ValueError):
        initial_design(problem, 0, 9)


def _check_accounting(trace, budget, costs=(1.0, 10.0)):
    cum = 0.0
    for r in trace.records:
        expect = sum(costs) if r.objective is None else costs[r.objective]
        assert r.cost == expect
        cum += r.cost
        assert r.cum_cost == cum
    assert trace.cum_cost <= budget
    # no affordable action remained at termination
    cheapest = sum(costs) if trace.config.mode == "benchmark-both" else min(costs)
    assert budget - trace.cum_cost < cheapest


def test_budget_safety_and_accounting(traces):
    for t in traces.values():
        _check_accounting(t, FAST.budget)
        design = [r for r in t.records if r.iteration == 0]
        assert len(design) == 6 and all(r.objective is None and r.cost == 11 for r in design)


def test_benchmark_charges_both(traces):
    rows = [r for r in traces["benchmark-both"].records if r.iteration > 0]
    assert rows and all(r.objective is None and r.cost == 11 and len(r.y) == 2 for r in rows)


def test_single_objective_rows(traces):
    rows = [r for r in traces["cmokg-expectation"].records if r.iteration > 0]
    assert all(r.objective in (0, 1) and len(r.y) == 1 for r in rows)
    assert [r.iteration for r in rows] == list(range(1, len(rows) + 1))


def test_checkpoints_cover_schedule(traces):
    for t in traces.values():
        cps = [c.checkpoint_cost for c in t.checkpoints]
        assert cps == checkpoint_schedule(66, FAST.budget, FAST.checkpoint_every)
        for c in t.checkpoints:
            # the scored state had spent no more than the checkpoint
            assert c.cum_cost <= c.checkpoint_cost + 1e-9
            assert c.report.regret >= -c.report.slack


def test_low_budget_allows_only_cheap_objective(problem):
    # 66 for the design leaves 5: only objective 1 is affordable
    t = run_bo(problem, replace(FAST, budget=71))
    rows = [r for r in t.records if r.iteration > 0]
    assert len(rows) == 5 and all(r.objective == 0 for r in rows)
    assert t.cum_cost == 71


def test_benchmark_stops_when_pair_unaffordable(problem):
    t = run_bo(problem, replace(FAST, mode="benchmark-both", budget=76))
    assert [r.iteration for r in t.records if r.iteration > 0] == []
    assert t.cum_cost == 66


def test_q1_expectation_equals_random(problem):
    a = run_bo(problem, replace(FAST, mode="cmokg-expectation", Q=1, budget=100))
    b = run_bo(problem, replace(FAST, mode="cmokg-random", Q=1, budget=100))
    assert a.records == b.records
    assert [c.report for c in a.checkpoints] == [c.report for c in b.checkpoints]


def test_deterministic(problem, traces):
    again = run_bo(problem, replace(FAST, mode="cmokg-random"))
    assert again.records == traces["cmokg-random"].records


def test_noisy_family_runs():
    p = generate_problem(2, 3)
    t = run_bo(p, replace(FAST, budget=90))
    _check_accounting(t, 90)
    # the noisy objective's fitted noise is reported per record
    assert all(len(r.noise_variance) == 2 for r in t.records if r.iteration > 0)


def test_aggregate_rows():
    rows = [RegretRow(1, "cmokg-random", s, 66.0, r, r / 2) for s, r in [(10, 1.0), (20, 3.0), (30, 2.0)]]
    agg = aggregate_rows(rows, {(1, "cmokg-random"): 1})
    assert len(agg) == 1
    a = agg[0]
    assert a.mean_regret == 2.0 and a.n_runs == 3 and a.n_failed == 1
    assert a.ci95_halfwidth == pytest.approx(1.96 * 1.0 / np.sqrt(3))
    assert aggregate_rows(rows[::-1], {(1, "cmokg-random"): 1}) == agg
    single = aggregate_rows(rows[:1])[0]
    assert single.mean_regret == 1.0 and single.ci95_halfwidth is None


def test_run_experiment_paired_and_failures():
    base = replace(FAST, budget=80)

    def loader(family, seed):
        if seed == 1000:
            raise RuntimeError("unreadable problem")
        return generate_problem(family, seed)

    res = run_experiment([1], ["cmokg-expectation", "cmokg-random"], 2, 0, base, problem_loader=loader)
    assert len(res.outcomes) == 4
    failed = [o for o in res.outcomes if o.trace is None]
    assert len(failed) == 2 and all("unreadable" in o.error for o in failed)
    for row in res.aggregate:
        assert row.n_runs == 1 and row.n_failed == 1 and row.ci95_halfwidth is None
    e = res.regrets(1, "cmokg-expectation", 80.0)
    assert np.isnan(e[1]) and np.isfinite(e[0])
    # both modes of a repeat share every seed
    by_repeat = {}
    for o in res.outcomes:
        by_repeat.setdefault(o.repeat, set()).add(o.seeds)
    assert all(len(s) == 1 for s in by_repeat.values())


def test_threads_do_not_change_results():
    base = replace(FAST, budget=80)
    a = run_experiment([1], ["cmokg-random"], 2, 5, base)
    b = run_experiment([1], ["cmokg-random"], 2, 5, base, threads=2)
    assert a.aggregate == b.aggregate


def test_seed_scheme():
    s = RunSeeds.from_master(7, 3)
    assert (s.problem, s.design, s.lambdas, s.noise, s.optimizer, s.metric) == (3007, 6007, 9007, 12007, 15007, 18007)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(mode="both")
    with pytest.raises(ValueError):
        RunConfig(budget=0)
    with pytest.raises(ValueError):
        RunConfig(Q=0)
    with pytest.raises(ValueError):
        run_experiment([1], ["cmokg-random"], 0, 0)
