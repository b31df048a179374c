"""Command-line front end.

Subcommands: generate, run, aggregate, plot, selftest.  Exit codes are 0
on success, 1 for usage or configuration errors and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .loop import ExperimentResult, RegretRow, aggregate_rows, run_experiment
from .problems import FAMILIES, SyntheticProblem, generate_problem, problem_filename

log = logging.getLogger("cmokg")

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2

TRACE_COLUMNS = ["run_seed", "family", "mode", "iter", "x1", "x2", "m", "y", "cost", "cum_cost", "fallback"]
REGRET_COLUMNS = ["run_seed", "family", "mode", "checkpoint_cost", "iter", "cum_cost", "regret",
                  "normalized_regret", "regret_se", "slack"]
AGGREGATE_COLUMNS = ["family", "mode", "checkpoint_cost", "mean_regret", "ci95_halfwidth", "n_runs", "n_failed",
                     "mean_normalized_regret"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(v) for v in r])


def trace_table(result: ExperimentResult):
    rows = []
    for o in sorted(result.outcomes, key=lambda o: (o.family, o.repeat, o.mode)):
        if o.trace is None:
            continue
        for r in o.trace.records:
            m = "ALL" if r.objective is None else str(r.objective + 1)
            y = ";".join(repr(float(v)) for v in r.y)
            rows.append([o.seeds.problem, o.family, o.mode, r.iteration, r.x[0], r.x[1], m, y, r.cost,
                         r.cum_cost, r.fallback])
    return rows


def regret_table(result: ExperimentResult):
    rows = []
    for o in sorted(result.outcomes, key=lambda o: (o.family, o.repeat, o.mode)):
        if o.trace is None:
            continue
        for c in o.trace.checkpoints:
            rep = c.report
            rows.append([o.seeds.problem, o.family, o.mode, c.checkpoint_cost, c.iteration, c.cum_cost,
                         rep.regret, rep.normalized_regret, rep.standard_error, rep.slack])
    return rows


def aggregate_table(rows):
    return [[a.family, a.mode, a.checkpoint_cost, a.mean_regret, a.ci95_halfwidth, a.n_runs, a.n_failed,
             a.mean_normalized_regret] for a in rows]


def manifest(cfg: ExperimentConfig, result: ExperimentResult) -> dict:
    runs = []
    for o in sorted(result.outcomes, key=lambda o: (o.family, o.repeat, o.mode)):
        runs.append({"family": o.family, "repeat": o.repeat, "mode": o.mode, "seeds": asdict(o.seeds),
                     "status": "failed" if o.trace is None else "ok",
                     "error": o.error})
    return {
        "format": "cmokg-manifest",
        "code_version": __version__,
        "config_sha256": cfg.digest(),
        "config": json.loads(cfg.canonical_json()),
        "master_seed": cfg.master_seed,
        "seed_scheme": "problem=master+1000i, design=master+2000i, lambda=master+3000i, "
                       "noise=master+4000i, optimizer=master+5000i, metric=master+6000i",
        "runs": runs,
        "failures": sum(o.trace is None for o in result.outcomes),
    }


def cmd_generate(args) -> int:
    if args.family not in FAMILIES:
        raise UsageError(f"family must be one of {sorted(FAMILIES)}, got {args.family}")
    if args.count < 1:
        raise UsageError("count must be at least 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.seed + 1000 * i
        path = generate_problem(args.family, seed).save(out / problem_filename(args.family, seed))
        print(path)
    return EXIT_OK


def _loader(directory):
    directory = Path(directory)

    def load(family, seed):
        path = directory / problem_filename(family, seed)
        if not path.exists():
            raise FileNotFoundError(f"problem archive {path} not found")
        return SyntheticProblem.load(path)
    return load


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.threads is not None:
        updates["threads"] = args.threads
    if args.out is not None:
        updates["output_dir"] = args.out
    if updates:
        cfg = ExperimentConfig.model_validate({**cfg.model_dump(), **updates})
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    loader = _loader(cfg.problems_dir) if cfg.problems_dir else None
    result = run_experiment(cfg.families, cfg.modes, cfg.repeats, cfg.master_seed, cfg.base_run_config(),
                            threads=cfg.threads, problem_loader=loader)
    _write_csv(out / "trace.csv", TRACE_COLUMNS, trace_table(result))
    _write_csv(out / "regret.csv", REGRET_COLUMNS, regret_table(result))
    _write_csv(out / "aggregate.csv", AGGREGATE_COLUMNS, aggregate_table(result.aggregate))
    (out / "manifest.json").write_text(json.dumps(manifest(cfg, result), sort_keys=True, indent=1) + "\n")
    failed = sum(o.trace is None for o in result.outcomes)
    print(f"wrote {out}/trace.csv, regret.csv, aggregate.csv, manifest.json ({failed} failed run(s))")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    run_dir = Path(args.run_dir)
    regret_csv = run_dir / "regret.csv"
    if not regret_csv.exists():
        raise UsageError(f"{regret_csv} not found")
    with open(regret_csv, newline="") as fh:
        rows = [RegretRow(int(r["family"]), r["mode"], int(r["run_seed"]), float(r["checkpoint_cost"]),
                          float(r["regret"]), float(r["normalized_regret"])) for r in csv.DictReader(fh)]
    failures = {}
    man = run_dir / "manifest.json"
    if man.exists():
        for run in json.loads(man.read_text()).get("runs", []):
            if run.get("status") == "failed":
                key = (run["family"], run["mode"])
                failures[key] = failures.get(key, 0) + 1
    out = Path(args.out) if args.out else run_dir / "aggregate.csv"
    _write_csv(out, AGGREGATE_COLUMNS, aggregate_table(aggregate_rows(rows, failures)))
    print(out)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot_regret, read_aggregate

    path = Path(args.aggregate_csv)
    if not path.exists():
        raise UsageError(f"{path} not found")
    try:
        rows, has_ci = read_aggregate(path)
    except ValueError as err:
        raise UsageError(str(err)) from None
    if not rows:
        raise UsageError(f"{path} has no data rows")
    print(plot_regret(rows, args.out, with_bands=has_ci))
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmokg", description="Cost-weighted multi-objective knowledge-gradient experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write synthetic problem archives")
    g.add_argument("--family", type=int, required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0, help="seed of the first problem; later ones add 1000")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run an experiment from a YAML config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="override output_dir")
    r.add_argument("--threads", type=int, help="override threads")
    r.add_argument("--seed", type=int, help="override master_seed")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("aggregate", help="recompute aggregate.csv from a run directory")
    a.add_argument("run_dir")
    a.add_argument("--out", help="output CSV (default: RUN_DIR/aggregate.csv)")
    a.set_defaults(func=cmd_aggregate)

    pl = sub.add_parser("plot", help="regret-versus-cost SVG from an aggregate CSV")
    pl.add_argument("aggregate_csv")
    pl.add_argument("--out", required=True, help="output SVG path")
    pl.set_defaults(func=cmd_plot)

    s = sub.add_parser("selftest", help="run fast oracle checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as err:
        print(f"cmokg: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        where = f" ({err.filename})" if getattr(err, "filename", None) else ""
        print(f"cmokg: error: {err.strerror or err}{where}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as err:
        print(f"cmokg: error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
