"""In-process self-healing loop: detect, match, reallocate, reconfigure.

Devices emit heartbeats on their policy-derived period.  A detector bank
samples every monitored device on a fixed grid; the first failed verdict
for a device starts a healing round in which the configurator looks up
the affected applications in the knowledge base, finds capability-equal
replacement candidates, asks the allocator for a new placement over the
surviving devices and commits it.
"""

from __future__ import annotations

import dataclasses
import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Optional, Sequence

from ..accrual_fd import AccrualEstimator, DetectorConfig
from ..allocation_model import (
    Allocation,
    NetworkGraph,
    NodeSpec,
    RecipeGraph,
    check_feasibility,
)
from ..allocation_solvers import Budget, SolverOutcome, Status, solve_exact, solve_heuristic
from ..errors import InfeasibleCommunicationError, OrderingError
from ..fd_policy import DEFAULT_RULES, PolicyRule, TaskCriticality, derive_config
from ..workload_gen import make_rng
from .detection import DEFAULT_SAMPLING_INTERVAL
from .sweeps import derive_seed


class EventKind(str, Enum):
    HEARTBEAT = "heartbeat"
    DEVICE_FAILURE = "device_failure"
    DISTRIBUTION_CHANGE = "distribution_change"


_KIND_RANK = {
    EventKind.HEARTBEAT: 0,
    EventKind.DEVICE_FAILURE: 1,
    EventKind.DISTRIBUTION_CHANGE: 2,
}


@dataclass(frozen=True)
class ScenarioEvent:
    time: float
    kind: EventKind
    subject: str
    payload: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", EventKind(self.kind))
        object.__setattr__(self, "payload", dict(self.payload))

    @property
    def sort_key(self):
        return (self.time, self.subject, _KIND_RANK[self.kind])


# -- knowledge base ------------------------------------------------------------


@dataclass
class DeviceRecord:
    spec: NodeSpec
    live: bool = True


@dataclass
class ApplicationRecord:
    id: str
    recipe: RecipeGraph
    allocation: Optional[Allocation] = None
    # ok | degraded | unplaceable
    state: str = "ok"


class KnowledgeBase:
    """Registry of devices, links and applications with their placements."""

    def __init__(self, network: NetworkGraph, applications: Mapping[str, RecipeGraph] = ()):
        self.network = network
        self.devices = {n.id: DeviceRecord(n) for n in network.nodes}
        self.applications = {
            app_id: ApplicationRecord(app_id, recipe) for app_id, recipe in dict(applications).items()
        }

    def live_ids(self) -> list[str]:
        return [d for d, rec in self.devices.items() if rec.live]

    def live_network(self) -> NetworkGraph:
        return self.network.without(d for d, rec in self.devices.items() if not rec.live)

    def residual_network(self, app_id: str) -> NetworkGraph:
        """Live network with the resources held by other applications removed."""
        used: dict[str, float] = {}
        for other in self.applications.values():
            if other.id == app_id or other.allocation is None:
                continue
            for task in other.recipe.tasks:
                host = other.allocation[task.id]
                used[host] = used.get(host, 0.0) + task.resources
        live = self.live_network()
        nodes = tuple(
            dataclasses.replace(n, resources=max(n.resources - used.get(n.id, 0.0), 0.0))
            for n in live.nodes
        )
        return NetworkGraph(nodes, live.links)

    def affected_applications(self, device_id: str) -> list[str]:
        return sorted(
            app.id
            for app in self.applications.values()
            if app.allocation is not None and device_id in app.allocation.assignment.values()
        )

    def hosted_tasks(self, device_id: str) -> list[tuple[str, str]]:
        out = []
        for app in sorted(self.applications.values(), key=lambda a: a.id):
            if app.allocation is not None:
                out.extend((app.id, t) for t in app.allocation.tasks_on(device_id))
        return out

    def commit(self, device_updates: Mapping[str, bool], app_updates: Mapping[str, tuple]):
        """Apply liveness and placement changes together, or not at all."""
        for device_id in device_updates:
            if device_id not in self.devices:
                raise KeyError(f"unknown device {device_id!r}")
        for app_id in app_updates:
            if app_id not in self.applications:
                raise KeyError(f"unknown application {app_id!r}")
        for device_id, live in device_updates.items():
            self.devices[device_id].live = live
        for app_id, (allocation, state) in app_updates.items():
            self.applications[app_id].allocation = allocation
            self.applications[app_id].state = state

    def consistency_problems(self) -> list[str]:
        problems = []
        for app in self.applications.values():
            if app.allocation is None:
                continue
            for task_id, device_id in app.allocation.assignment.items():
                rec = self.devices.get(device_id)
                if rec is None:
                    problems.append(f"{app.id}/{task_id} on unregistered device {device_id}")
                elif not rec.live:
                    problems.append(f"{app.id}/{task_id} on dead device {device_id}")
        return problems


# -- recipe analysis -------------------------------------------------------------


def central_tasks(recipe: RecipeGraph) -> set[str]:
    """Tasks every source-to-sink flow must pass through."""
    ids = [t.id for t in recipe.tasks]
    if len(ids) <= 1:
        return set(ids)
    succ = {t: [] for t in ids}
    indeg = {t: 0 for t in ids}
    for a, b in recipe.edges:
        succ[a].append(b)
        indeg[b] += 1
    sources = [t for t in ids if indeg[t] == 0]
    sinks = [t for t in ids if not succ[t]]
    out = set()
    for cut in ids:
        start = [s for s in sources if s != cut]
        goal = {s for s in sinks if s != cut}
        if not start or not goal:
            out.add(cut)
            continue
        seen, stack = set(start), list(start)
        reached = False
        while stack and not reached:
            u = stack.pop()
            if u in goal:
                reached = True
            for v in succ[u]:
                if v != cut and v not in seen:
                    seen.add(v)
                    stack.append(v)
        if not reached:
            out.add(cut)
    return out


def device_criticality(kb: KnowledgeBase, device_id: str) -> TaskCriticality:
    hosted = kb.hosted_tasks(device_id)
    if not hosted:
        return TaskCriticality(replacement_available=True, central_to_application=False)
    central = False
    replaceable = True
    for app_id, task_id in hosted:
        recipe = kb.applications[app_id].recipe
        task = recipe.task(task_id)
        central |= task_id in central_tasks(recipe)
        others = [
            d for d in kb.live_ids() if d != device_id and kb.devices[d].spec.can_host(task)
        ]
        replaceable &= bool(others)
    return TaskCriticality(replacement_available=replaceable, central_to_application=central)


# -- allocator -----------------------------------------------------------------


def allocate(recipe: RecipeGraph, net: NetworkGraph, solver: str, budget: Budget) -> SolverOutcome:
    """Exact within ``budget``, heuristic when the budget runs out (``auto``)."""
    if solver == "heuristic":
        return solve_heuristic(recipe, net)
    exact = solve_exact(recipe, net, budget)
    if solver == "exact" or exact.status is not Status.RESOURCE_LIMIT:
        return exact
    try:
        return solve_heuristic(recipe, net)
    except InfeasibleCommunicationError:
        return exact


# -- simulation --------------------------------------------------------------------


@dataclass
class SelfHealConfig:
    horizon: float = 1200.0
    sampling_interval: float = DEFAULT_SAMPLING_INTERVAL
    heartbeat_variance: float = 1e-4
    solver: str = "auto"
    budget: Budget = field(default_factory=lambda: Budget(time_limit=10.0))
    seed: int = 0
    # generate heartbeats for every live device; off when the scenario scripts them
    auto_heartbeats: bool = True
    base_detector: DetectorConfig = field(default_factory=DetectorConfig)
    rules: Sequence[PolicyRule] = DEFAULT_RULES


@dataclass
class _Device:
    config: DetectorConfig
    mean: float
    variance: float
    rng: Any
    crashed: bool = False
    monitor: Optional[AccrualEstimator] = None


def run_selfheal(
    scenario: Sequence[ScenarioEvent],
    kb: KnowledgeBase,
    cfg: Optional[SelfHealConfig] = None,
    observer: Optional[Callable[[float, KnowledgeBase], None]] = None,
) -> list[dict]:
    """Run the scenario to ``cfg.horizon`` and return the event log.

    ``observer`` is called with the clock and the knowledge base after
    every processed event, for invariant checks.
    """
    cfg = cfg or SelfHealConfig()
    for a, b in zip(scenario, scenario[1:]):
        if b.time < a.time:
            raise OrderingError(f"scenario events out of order at t={b.time}")
    log: list[dict] = []

    def emit(time, step, **fields):
        log.append({"time": time, "step": step, **fields})

    # initial placement for applications that arrive without one
    for app_id in sorted(kb.applications):
        app = kb.applications[app_id]
        if app.allocation is None:
            out = allocate(app.recipe, kb.residual_network(app_id), cfg.solver, cfg.budget)
            if out.allocation is None:
                kb.commit({}, {app_id: (None, "unplaceable")})
                emit(0.0, "unplaceable", application=app_id, status=out.status.value)
            else:
                kb.commit({}, {app_id: (out.allocation, "ok")})
                emit(
                    0.0,
                    "initial_allocation",
                    application=app_id,
                    solver=out.solver,
                    status=out.status.value,
                    total_energy=out.total_energy,
                    allocation=out.allocation.pairs(),
                )

    devices: dict[str, _Device] = {}
    for i, node in enumerate(kb.network.nodes):
        dcfg = derive_config(
            node.profile, device_criticality(kb, node.id), cfg.rules, cfg.base_detector
        )
        devices[node.id] = _Device(
            dcfg,
            dcfg.heartbeat_period,
            cfg.heartbeat_variance,
            make_rng(derive_seed(cfg.seed, i)),
            monitor=AccrualEstimator(dcfg),
        )
        emit(
            0.0,
            "monitor",
            device=node.id,
            omega_min=dcfg.omega_min,
            omega_max=dcfg.omega_max,
            heartbeat_period=dcfg.heartbeat_period,
            threshold=dcfg.threshold,
        )

    # queue entries: (time, phase, subject, kind rank, seq, event); phase 1 is the
    # sampling tick, which runs after every scenario event at the same instant
    queue: list = []
    seq = 0

    def push(event: ScenarioEvent):
        nonlocal seq
        heapq.heappush(queue, (event.time, 0, event.subject, _KIND_RANK[event.kind], seq, event))
        seq += 1

    def next_heartbeat(device_id: str, after: float):
        dev = devices[device_id]
        sd = math.sqrt(dev.variance)
        x = dev.rng.normal(dev.mean, sd)
        while x <= 0:
            x = dev.rng.normal(dev.mean, sd)
        t = after + float(x)
        if t <= cfg.horizon:
            push(ScenarioEvent(t, EventKind.HEARTBEAT, device_id, {"auto": True}))

    for event in scenario:
        if event.time <= cfg.horizon:
            push(event)
    if cfg.auto_heartbeats:
        for device_id, dev in devices.items():
            # devices boot at arbitrary phases relative to the sampling grid
            next_heartbeat(device_id, float(dev.rng.uniform(0.0, dev.mean)))
    n_ticks = int(math.floor(cfg.horizon / cfg.sampling_interval + 1e-9))
    for k in range(1, n_ticks + 1):
        heapq.heappush(queue, (k * cfg.sampling_interval, 1, "", 0, seq, None))
        seq += 1

    now = 0.0
    while queue:
        time, phase, subject, _, _, event = heapq.heappop(queue)
        if time < now:
            raise OrderingError("simulated time ran backwards")
        now = time
        if phase == 1:
            _sample(now, kb, devices, cfg, emit)
        else:
            dev = devices.get(subject)
            if dev is None:
                raise KeyError(f"scenario event for unknown device {subject!r}")
            if event.kind is EventKind.HEARTBEAT:
                if not dev.crashed:
                    dev.monitor.record_heartbeat(now)
                    if cfg.auto_heartbeats and event.payload.get("auto"):
                        next_heartbeat(subject, now)
            elif event.kind is EventKind.DEVICE_FAILURE:
                if not dev.crashed:
                    dev.crashed = True
                    emit(now, "device_failure", device=subject)
            elif event.kind is EventKind.DISTRIBUTION_CHANGE:
                dev.mean = float(event.payload.get("mean", dev.mean))
                dev.variance = float(event.payload.get("variance", dev.variance))
                emit(now, "distribution_change", device=subject, mean=dev.mean, variance=dev.variance)
        if observer is not None:
            observer(now, kb)
    return log


def _sample(now, kb, devices, cfg, emit):
    for device_id in sorted(devices):
        if not kb.devices[device_id].live:
            continue
        monitor = devices[device_id].monitor
        phi = monitor.suspicion(now) if monitor.last_arrival is not None else 0.0
        if phi >= monitor.config.threshold:
            _heal(now, device_id, phi, kb, cfg, emit)


def _heal(now, device_id, phi, kb: KnowledgeBase, cfg: SelfHealConfig, emit):
    emit(now, "detect", device=device_id, phi=phi)
    affected = kb.affected_applications(device_id)
    kb.commit({device_id: False}, {})
    for app_id in affected:
        app = kb.applications[app_id]
        old = app.allocation
        missing = []
        for task_id in old.tasks_on(device_id):
            task = app.recipe.task(task_id)
            candidates = [
                d for d in kb.live_ids() if kb.devices[d].spec.can_host(task)
            ]
            emit(now, "match", application=app_id, task=task_id, candidates=candidates)
            if not candidates:
                missing.append(task_id)
        if missing:
            kb.commit({}, {app_id: (None, "degraded")})
            emit(now, "degraded", application=app_id, tasks=missing)
            continue
        net = kb.residual_network(app_id)
        try:
            out = allocate(app.recipe, net, cfg.solver, cfg.budget)
        except InfeasibleCommunicationError as exc:
            kb.commit({}, {app_id: (None, "unplaceable")})
            emit(now, "unplaceable", application=app_id, reason=str(exc))
            continue
        emit(
            now,
            "reallocate",
            application=app_id,
            solver=out.solver,
            status=out.status.value,
            total_energy=out.total_energy,
        )
        if out.allocation is None:
            kb.commit({}, {app_id: (None, "unplaceable")})
            emit(now, "unplaceable", application=app_id, status=out.status.value)
            continue
        report = check_feasibility(app.recipe, kb.live_network(), out.allocation)
        kb.commit({}, {app_id: (out.allocation, "ok")})
        moved = [
            [t, old[t], out.allocation[t]]
            for t in out.allocation.assignment
            if old[t] != out.allocation[t]
        ]
        emit(
            now,
            "reconfigure",
            application=app_id,
            moved=moved,
            allocation=out.allocation.pairs(),
            feasible=report.feasible,
        )


def healing_rounds(log: Sequence[dict]) -> int:
    return sum(1 for entry in log if entry["step"] == "detect")


def dump_log(log: Sequence[dict]) -> str:
    return "".join(json.dumps(entry) + "\n" for entry in log)
