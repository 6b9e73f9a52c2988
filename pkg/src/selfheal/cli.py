"""Command-line front end.

    selfheal fd-sweep {threshold,interval,window} --scenario FILE --out FILE
    selfheal allocate --recipe FILE --network FILE --solver NAME --out FILE
    selfheal bench --scenario FILE --out FILE
    selfheal simulate --scenario FILE --out FILE

Exit codes: 0 success, 2 configuration error, 3 infeasible, 4 budget exhausted.
Outputs are written to a temporary file and renamed into place, so a
failing command never leaves partial output behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from .allocation_model import check_feasibility, load_network, load_recipe
from .allocation_solvers import Budget, Status, solve_brute_force, solve_exact, solve_heuristic
from .errors import GraphFormatError, InfeasibleCommunicationError, InstanceTooLargeError
from .harness import sweeps
from .harness.selfheal import KnowledgeBase, SelfHealConfig, dump_log, run_selfheal
from .scenario import ScenarioError, ScenarioFile, load_scenario, simulation_inputs

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_BUDGET = 4

TIMING_STATS = ("cpu_time_s", "wall_time_s", "construction_cpu_s")


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def to_csv(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in columns])
    return buf.getvalue()


def _load(args) -> ScenarioFile:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        raise CommandError(f"{args.scenario}: {exc}", EXIT_CONFIG) from None
    if args.seed is not None:
        scenario = scenario.model_copy(update={"seed": args.seed})
    return scenario


def _budget(args, default: Optional[float]) -> Budget:
    limit = args.time_budget if args.time_budget is not None else default
    return Budget(time_limit=limit)


# -- commands ----------------------------------------------------------------------


def cmd_fd_sweep(args) -> int:
    sc = _load(args)
    seed = sc.seed
    if args.kind == "threshold":
        spec = sc.sweeps.threshold
        rows = sweeps.sweep_threshold(
            seeds=[seed + i for i in range(spec.runs)],
            thresholds=spec.thresholds,
            base=sc.detector.build(),
            variance=spec.variance,
            sampling_interval=spec.sampling_interval,
            jobs=args.jobs,
        )
        columns = sweeps.THRESHOLD_COLUMNS
    elif args.kind == "interval":
        spec = sc.sweeps.interval
        rows = sweeps.sweep_interval(
            intervals=spec.intervals,
            runs=spec.runs,
            seed=seed,
            threshold=spec.threshold,
            omega_min=spec.omega_min,
            duration=spec.duration,
            variance=spec.variance,
            sampling_interval=spec.sampling_interval,
            jobs=args.jobs,
        )
        columns = sweeps.INTERVAL_COLUMNS
    else:
        spec = sc.sweeps.window
        try:
            rows = sweeps.sweep_window(
                omega_maxes=spec.omega_max,
                seeds=[seed + i for i in range(spec.runs)],
                omega_min=spec.omega_min,
                threshold=spec.threshold,
                sampling_interval=spec.sampling_interval,
                jobs=args.jobs,
            )
        except ValueError as exc:
            raise CommandError(f"sweeps.window: {exc}", EXIT_CONFIG) from None
        columns = sweeps.WINDOW_COLUMNS
    _write_atomic(Path(args.out), to_csv(columns, rows))
    return EXIT_OK


def _strip_timing(record: dict) -> dict:
    record = dict(record)
    record["stats"] = {k: v for k, v in record["stats"].items() if k not in TIMING_STATS}
    return record


def cmd_allocate(args) -> int:
    try:
        recipe = load_recipe(args.recipe)
        net = load_network(args.network)
    except OSError as exc:
        raise CommandError(f"cannot read graph file: {exc}", EXIT_CONFIG) from None
    except (GraphFormatError, ValueError, TypeError, KeyError) as exc:
        raise CommandError(f"graph file: {exc}", EXIT_CONFIG) from None
    budget = _budget(args, None)
    try:
        if args.solver == "exact":
            out = solve_exact(recipe, net, budget)
        elif args.solver == "heuristic":
            out = solve_heuristic(recipe, net)
        else:
            out = solve_brute_force(recipe, net)
    except InstanceTooLargeError as exc:
        raise CommandError(str(exc), EXIT_CONFIG) from None
    except InfeasibleCommunicationError as exc:
        raise CommandError(f"infeasible: {exc}", EXIT_INFEASIBLE) from None
    record = out.to_record()
    if args.no_timing:
        record = _strip_timing(record)
    if out.allocation is not None:
        record["feasibility"] = check_feasibility(recipe, net, out.allocation).to_record()
    _write_atomic(Path(args.out), json.dumps(record, indent=2, sort_keys=True) + "\n")
    if out.status is Status.INFEASIBLE:
        demand = sum(t.resources for t in recipe.tasks)
        supply = sum(n.resources for n in net.nodes)
        print(
            f"infeasible: no assignment satisfies the resource and connectivity constraints "
            f"(demand {demand}, total capacity {supply})",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE
    if out.status is Status.RESOURCE_LIMIT:
        print("budget exhausted before optimality was proven", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_bench(args) -> int:
    sc = _load(args)
    spec = sc.bench
    solvers = [args.solver] if args.solver else spec.solvers
    if args.solver not in (None, "exact", "heuristic", "brute"):
        raise CommandError(f"bench: unknown solver {args.solver!r}", EXIT_CONFIG)
    try:
        rows = sweeps.bench_allocation(
            node_counts=spec.nodes,
            task_counts=spec.tasks,
            shapes=spec.shapes,
            seeds=[sc.seed + i for i in range(spec.runs)],
            solvers=solvers,
            budget=_budget(args, spec.time_budget),
            jobs=args.jobs,
        )
    except (InstanceTooLargeError, ValueError) as exc:
        raise CommandError(f"bench: {exc}", EXIT_CONFIG) from None
    if args.no_timing:
        for row in rows:
            row["cpu_time_s"] = None
    _write_atomic(Path(args.out), to_csv(sweeps.BENCH_COLUMNS, rows))
    return EXIT_OK


def cmd_simulate(args) -> int:
    sc = _load(args)
    if sc.simulate is None:
        raise CommandError(f"{args.scenario}: simulate: section missing", EXIT_CONFIG)
    sim = sc.simulate
    net, apps, events = simulation_inputs(sim)
    solver = args.solver or sim.solver
    if solver not in ("exact", "heuristic", "auto"):
        raise CommandError(f"simulate: unknown solver {solver!r}", EXIT_CONFIG)
    cfg = SelfHealConfig(
        horizon=sim.horizon,
        sampling_interval=sim.sampling_interval,
        heartbeat_variance=sim.heartbeat_variance,
        solver=solver,
        budget=_budget(args, sim.time_budget),
        seed=sc.seed,
        base_detector=sc.detector.build(),
        rules=sc.policy.build(),
    )
    log = run_selfheal(events, KnowledgeBase(net, apps), cfg)
    _write_atomic(Path(args.out), dump_log(log))
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfheal", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario file (YAML)")
            p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", required=True, help="output file")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--time-budget", type=float, default=None, help="CPU seconds per exact solve")
        p.add_argument(
            "--no-timing", action="store_true", help="omit CPU/wall times so output is byte-stable"
        )

    p = sub.add_parser("fd-sweep", help="failure-detector parameter sweep")
    p.add_argument("kind", choices=("threshold", "interval", "window"))
    common(p)
    p.set_defaults(func=cmd_fd_sweep)

    p = sub.add_parser("allocate", help="solve one allocation instance")
    p.add_argument("--recipe", required=True)
    p.add_argument("--network", required=True)
    p.add_argument("--solver", choices=("exact", "heuristic", "brute"), default="exact")
    common(p, scenario=False)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("bench", help="allocation benchmark on generated instances")
    p.add_argument("--solver", default=None, help="run only this solver")
    common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("simulate", help="run a self-healing scenario")
    p.add_argument("--solver", default=None, help="exact, heuristic or auto")
    common(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.time_budget is not None and not args.time_budget > 0:
        print("error: --time-budget must be > 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
