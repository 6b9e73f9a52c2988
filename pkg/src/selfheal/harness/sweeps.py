"""Detector parameter sweeps and the allocation benchmark.

Each sweep returns a list of row dicts whose keys are the CSV columns, in
column order.  Rows are sorted on their key columns, so results merged
from parallel workers come out in the same order as a sequential run.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from ..accrual_fd import NEVER_RESET, DetectorConfig
from ..allocation_solvers import Budget, Status, solve_exact, solve_heuristic, solve_brute_force
from ..errors import InfeasibleCommunicationError
from ..workload_gen import (
    HeartbeatTraceConfig,
    NetworkGenConfig,
    RecipeGenConfig,
    gen_heartbeat_trace,
    gen_network,
    gen_recipe,
    interval_trace,
    mean_shift_trace,
    shift_and_back_trace,
)
from .detection import DEFAULT_SAMPLING_INTERVAL, run_detection

THRESHOLD_COLUMNS = ("threshold", "seed", "detection_time_s", "mistake_rate")
INTERVAL_COLUMNS = ("interval", "run", "seed", "detection_time_s")
WINDOW_COLUMNS = ("omega_max", "omega_min", "seed", "detection_time_s", "mistake_rate")
BENCH_COLUMNS = (
    "nodes", "tasks", "shape", "seed", "solver", "cpu_time_s", "total_energy", "status", "ratio",
)

DEFAULT_THRESHOLDS = tuple(round(0.1 * k, 10) for k in range(1, 21))
DEFAULT_INTERVALS = (5.0, 10.0, 20.0, 40.0)
DEFAULT_WINDOWS = (10, 25, 50, 100, 200)


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from a tuple of non-negative integers."""
    ss = np.random.SeedSequence([int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _flatten(chunks: Iterable[list]) -> list:
    return [row for chunk in chunks for row in chunk]


# -- threshold -----------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class _ThresholdJob:
    seed: int
    thresholds: tuple
    base: DetectorConfig
    variance: float
    sampling_interval: float


def _threshold_rows(job: _ThresholdJob) -> list[dict]:
    trace_cfg = mean_shift_trace(job.seed, job.variance)
    trace = gen_heartbeat_trace(trace_cfg)
    onset = trace_cfg.segments[0][2]
    rows = []
    for u in job.thresholds:
        cfg = dataclasses.replace(job.base, threshold=u)
        m = run_detection(trace, cfg, onset, job.sampling_interval, horizon=trace_cfg.duration)
        rows.append(
            {
                "threshold": u,
                "seed": job.seed,
                "detection_time_s": m.detection_time,
                "mistake_rate": m.mistake_rate,
            }
        )
    return rows


def sweep_threshold(
    seeds: Sequence[int],
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    base: Optional[DetectorConfig] = None,
    variance: float = 5.0,
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL,
    jobs: int = 1,
) -> list[dict]:
    """N(20, var) for 3000 s, then N(50, var) for 3000 s; onset at the change."""
    base = base or DetectorConfig()
    work = [
        _ThresholdJob(s, tuple(thresholds), base, variance, sampling_interval) for s in seeds
    ]
    rows = _flatten(_map(_threshold_rows, work, jobs))
    return sorted(rows, key=lambda r: (r["threshold"], r["seed"]))


# -- interval --------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class _IntervalJob:
    interval: float
    run: int
    seed: int
    cfg: DetectorConfig
    duration: float
    variance: float
    sampling_interval: float


def _interval_row(job: _IntervalJob) -> dict:
    trace = gen_heartbeat_trace(interval_trace(job.interval, job.seed, job.duration, job.variance))
    cfg = dataclasses.replace(job.cfg, heartbeat_period=job.interval)
    # the sender crashes when the trace ends
    m = run_detection(trace, cfg, job.duration, job.sampling_interval)
    return {
        "interval": job.interval,
        "run": job.run,
        "seed": job.seed,
        "detection_time_s": m.detection_time,
    }


def sweep_interval(
    intervals: Sequence[float] = DEFAULT_INTERVALS,
    runs: int = 10,
    seed: int = 0,
    threshold: float = 0.8,
    omega_min: int = 10,
    duration: float = 1000.0,
    variance: float = 1.0,
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL,
    jobs: int = 1,
) -> list[dict]:
    cfg = DetectorConfig(omega_min=omega_min, omega_max=NEVER_RESET, threshold=threshold)
    work = [
        _IntervalJob(
            float(iv), run, derive_seed(seed, i, run), cfg, duration, variance, sampling_interval
        )
        for i, iv in enumerate(intervals)
        for run in range(runs)
    ]
    rows = _map(_interval_row, work, jobs)
    return sorted(rows, key=lambda r: (r["interval"], r["run"]))


# -- window ----------------------------------------------------------------------


def default_omega_min(omega_max: int) -> int:
    return min(10, omega_max - 1)


@dataclasses.dataclass(frozen=True)
class _WindowJob:
    seed: int
    omega_maxes: tuple
    omega_min: Optional[int]
    threshold: float
    sampling_interval: float


def _window_rows(job: _WindowJob) -> list[dict]:
    trace_cfg = shift_and_back_trace(job.seed)
    trace = gen_heartbeat_trace(trace_cfg)
    onset = trace_cfg.segments[0][2]
    rows = []
    for om in job.omega_maxes:
        omin = job.omega_min if job.omega_min is not None else default_omega_min(om)
        cfg = DetectorConfig(omega_min=omin, omega_max=om, threshold=job.threshold)
        m = run_detection(trace, cfg, onset, job.sampling_interval, horizon=trace_cfg.duration)
        rows.append(
            {
                "omega_max": om,
                "omega_min": omin,
                "seed": job.seed,
                "detection_time_s": m.detection_time,
                "mistake_rate": m.mistake_rate,
            }
        )
    return rows


def sweep_window(
    omega_maxes: Sequence[int] = DEFAULT_WINDOWS,
    seeds: Sequence[int] = (0,),
    omega_min: Optional[int] = None,
    threshold: float = 0.8,
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL,
    jobs: int = 1,
) -> list[dict]:
    """Three-segment trace N(20,1) / N(50,1) / N(20,1); onset at the first change."""
    work = [
        _WindowJob(s, tuple(omega_maxes), omega_min, threshold, sampling_interval) for s in seeds
    ]
    rows = _flatten(_map(_window_rows, work, jobs))
    return sorted(rows, key=lambda r: (r["omega_max"], r["seed"]))


# -- allocation benchmark ------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class _BenchJob:
    nodes: int
    tasks: int
    shape: str
    seed: int
    solvers: tuple
    budget: Budget


def bench_instance(nodes: int, tasks: int, shape: str, seed: int):
    net = gen_network(NetworkGenConfig(node_count=nodes, seed=derive_seed(seed, nodes, tasks, 0)))
    recipe = gen_recipe(
        RecipeGenConfig(task_count=tasks, shape=shape, seed=derive_seed(seed, nodes, tasks, 1))
    )
    return recipe, net


def _bench_rows(job: _BenchJob) -> list[dict]:
    rows, outcomes = [], {}
    for name in job.solvers:
        # fresh graphs per solver: they memoize distances, which would
        # otherwise bill one solver's preprocessing to whichever ran first
        recipe, net = bench_instance(job.nodes, job.tasks, job.shape, job.seed)
        try:
            if name == "exact":
                out = solve_exact(recipe, net, job.budget)
            elif name == "heuristic":
                out = solve_heuristic(recipe, net)
            elif name == "brute":
                out = solve_brute_force(recipe, net)
            else:
                raise ValueError(f"unknown solver {name!r}")
            status = out.status.value
        except InfeasibleCommunicationError:
            out, status = None, "infeasible_communication"
        outcomes[name] = out
        rows.append(
            {
                "nodes": job.nodes,
                "tasks": job.tasks,
                "shape": job.shape,
                "seed": job.seed,
                "solver": name,
                "cpu_time_s": None if out is None else out.stats.get("cpu_time_s"),
                "total_energy": None if out is None else out.total_energy,
                "status": status,
                "ratio": None,
            }
        )
    exact, heur = outcomes.get("exact"), outcomes.get("heuristic")
    if (
        exact is not None
        and heur is not None
        and exact.status is Status.PROVEN_OPTIMAL
        and heur.total_energy
    ):
        ratio = exact.total_energy / heur.total_energy
        for row in rows:
            if row["solver"] == "heuristic":
                row["ratio"] = ratio
    return rows


def bench_allocation(
    node_counts: Sequence[int],
    task_counts: Sequence[int],
    shapes: Sequence[str] = ("long", "wide"),
    seeds: Sequence[int] = (0,),
    solvers: Sequence[str] = ("exact", "heuristic"),
    budget: Optional[Budget] = None,
    jobs: int = 1,
) -> list[dict]:
    budget = budget or Budget(time_limit=60.0)
    work = [
        _BenchJob(n, t, shape, seed, tuple(solvers), budget)
        for n in node_counts
        for t in task_counts
        for shape in shapes
        for seed in seeds
        if not (shape == "wide" and t < 3)
    ]
    rows = _flatten(_map(_bench_rows, work, jobs))
    order = {name: i for i, name in enumerate(solvers)}
    return sorted(
        rows, key=lambda r: (r["nodes"], r["tasks"], r["shape"], r["seed"], order[r["solver"]])
    )
