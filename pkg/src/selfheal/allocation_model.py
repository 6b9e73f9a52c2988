"""Recipe and network graphs, path energies and the energy objective.

A recipe is a directed dataflow graph of tasks; the network is an
undirected graph of devices whose links carry a per-packet transfer
energy.  The energy of an allocation is the computation energy of every
task on its node plus, for every recipe edge, the source task's output
times the cheapest path energy between the two hosting nodes.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .errors import GraphFormatError, InfeasibleCommunicationError
from .fd_policy import NodeProfile

GRAPH_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TaskSpec:
    id: str
    resources: float
    output_factor: float
    computation_size: float
    # tag a hosting node must carry; None means any node will do
    capability: Optional[str] = None

    def __post_init__(self):
        if not self.resources > 0:
            raise ValueError(f"task {self.id}: resources must be > 0")
        if not self.output_factor >= 0:
            raise ValueError(f"task {self.id}: output_factor must be >= 0")
        if not self.computation_size > 0:
            raise ValueError(f"task {self.id}: computation_size must be > 0")


@dataclass(frozen=True)
class NodeSpec:
    id: str
    processing_power: float
    resources: float
    compute_energy: float
    profile: NodeProfile = field(default_factory=NodeProfile)
    capabilities: frozenset = frozenset()

    def __post_init__(self):
        for name in ("processing_power", "resources", "compute_energy"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"node {self.id}: {name} must be finite")
        if not self.processing_power > 0:
            raise ValueError(f"node {self.id}: processing_power must be > 0")
        if self.resources < 0 or self.compute_energy < 0:
            raise ValueError(f"node {self.id}: resources and compute_energy must be >= 0")
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))

    def can_host(self, task: TaskSpec) -> bool:
        return task.capability is None or task.capability in self.capabilities


@dataclass(frozen=True)
class Link:
    a: str
    b: str
    energy: float

    @property
    def key(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class RecipeGraph:
    tasks: tuple[TaskSpec, ...] = ()
    edges: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate task ids in recipe")
        known = set(ids)
        for src, dst in self.edges:
            if src not in known or dst not in known:
                raise ValueError(f"recipe edge {src}->{dst} references an unknown task")
            if src == dst:
                raise ValueError(f"recipe edge {src}->{dst} is a self-loop")
        if len(set(self.edges)) != len(self.edges):
            raise ValueError("duplicate recipe edges")

    @cached_property
    def index(self) -> dict[str, int]:
        return {t.id: i for i, t in enumerate(self.tasks)}

    def task(self, task_id: str) -> TaskSpec:
        return self.tasks[self.index[task_id]]


@dataclass(frozen=True)
class NetworkGraph:
    nodes: tuple[NodeSpec, ...] = ()
    links: tuple[Link, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids in network")
        known = set(ids)
        seen = set()
        for link in self.links:
            if link.a not in known or link.b not in known:
                raise ValueError(f"link {link.a}--{link.b} references an unknown node")
            if link.a == link.b:
                raise ValueError(f"link {link.a}--{link.b} is a self-loop")
            if not link.energy >= 0:
                raise ValueError(f"link {link.a}--{link.b}: energy must be >= 0")
            if link.key in seen:
                raise ValueError(f"more than one link between {link.a} and {link.b}")
            seen.add(link.key)

    @cached_property
    def index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    def node(self, node_id: str) -> NodeSpec:
        return self.nodes[self.index[node_id]]

    @cached_property
    def adjacency(self) -> dict[str, list[tuple[str, float]]]:
        adj = {n.id: [] for n in self.nodes}
        for link in self.links:
            adj[link.a].append((link.b, link.energy))
            adj[link.b].append((link.a, link.energy))
        return adj

    @cached_property
    def distances(self) -> dict[tuple[str, str], float]:
        return shortest_path_energy(self)

    def without(self, node_ids: Iterable[str]) -> "NetworkGraph":
        """The subnetwork left after removing ``node_ids`` and their links."""
        gone = set(node_ids)
        return NetworkGraph(
            nodes=tuple(n for n in self.nodes if n.id not in gone),
            links=tuple(l for l in self.links if l.a not in gone and l.b not in gone),
        )


@dataclass(frozen=True)
class Allocation:
    """Total map from task id to node id."""

    assignment: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignment", dict(self.assignment))

    def __getitem__(self, task_id: str) -> str:
        return self.assignment[task_id]

    def __len__(self):
        return len(self.assignment)

    def pairs(self) -> list[list[str]]:
        return [[t, n] for t, n in self.assignment.items()]

    def tasks_on(self, node_id: str) -> list[str]:
        return [t for t, n in self.assignment.items() if n == node_id]


@dataclass(frozen=True)
class EnergyBreakdown:
    device_energy: float
    network_energy: float
    total_energy: float

    def to_record(self) -> dict:
        return {
            "device_energy": self.device_energy,
            "network_energy": self.network_energy,
            "total_energy": self.total_energy,
        }


def shortest_path_energy(net: NetworkGraph) -> dict[tuple[str, str], float]:
    """Cheapest path energy for every connected ordered node pair.

    Disconnected pairs are absent from the result.
    """
    adj = net.adjacency
    out: dict[tuple[str, str], float] = {}
    for source in net.nodes:
        dist = {source.id: 0.0}
        heap = [(0.0, source.id)]
        done = set()
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            for v, w in adj[u]:
                nd = d + w
                if v not in dist or nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        for target, d in dist.items():
            out[(source.id, target)] = d
    return out


def distance_matrix(net: NetworkGraph) -> list[list[float]]:
    """Index-ordered path energies; ``math.inf`` marks disconnected pairs."""
    dist = net.distances
    ids = [n.id for n in net.nodes]
    return [[dist.get((a, b), math.inf) for b in ids] for a in ids]


def evaluate_energy(recipe: RecipeGraph, net: NetworkGraph, alloc: Allocation) -> EnergyBreakdown:
    dist = net.distances
    device = 0.0
    for task in recipe.tasks:
        node = net.node(alloc[task.id])
        device += node.compute_energy * (task.computation_size / node.processing_power)
    network = 0.0
    for src, dst in recipe.edges:
        pair = (alloc[src], alloc[dst])
        if pair not in dist:
            raise InfeasibleCommunicationError((src, dst), pair)
        network += recipe.task(src).output_factor * dist[pair]
    return EnergyBreakdown(device, network, device + network)


@dataclass
class FeasibilityReport:
    missing_tasks: list[str] = field(default_factory=list)
    unknown_tasks: list[str] = field(default_factory=list)
    unknown_nodes: list[str] = field(default_factory=list)
    # node id -> (resources used, resources available)
    overloaded_nodes: dict[str, tuple[float, float]] = field(default_factory=dict)
    unreachable_edges: list[tuple[str, str]] = field(default_factory=list)
    capability_violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def assignment_ok(self) -> bool:
        return not (self.missing_tasks or self.unknown_tasks or self.unknown_nodes)

    @property
    def resources_ok(self) -> bool:
        return not self.overloaded_nodes

    @property
    def reachability_ok(self) -> bool:
        return not self.unreachable_edges

    @property
    def feasible(self) -> bool:
        return (
            self.assignment_ok
            and self.resources_ok
            and self.reachability_ok
            and not self.capability_violations
        )

    def to_record(self) -> dict:
        return {
            "feasible": self.feasible,
            "assignment": {
                "ok": self.assignment_ok,
                "missing_tasks": self.missing_tasks,
                "unknown_tasks": self.unknown_tasks,
                "unknown_nodes": self.unknown_nodes,
            },
            "resources": {
                "ok": self.resources_ok,
                "overloaded_nodes": {k: list(v) for k, v in self.overloaded_nodes.items()},
            },
            "reachability": {
                "ok": self.reachability_ok,
                "unreachable_edges": [list(e) for e in self.unreachable_edges],
            },
            "capabilities": {
                "ok": not self.capability_violations,
                "violations": [list(v) for v in self.capability_violations],
            },
        }


def check_feasibility(recipe: RecipeGraph, net: NetworkGraph, alloc: Allocation) -> FeasibilityReport:
    report = FeasibilityReport()
    task_ids = recipe.index
    node_ids = net.index
    report.missing_tasks = [t.id for t in recipe.tasks if t.id not in alloc.assignment]
    report.unknown_tasks = sorted(t for t in alloc.assignment if t not in task_ids)
    report.unknown_nodes = sorted({n for n in alloc.assignment.values() if n not in node_ids})

    used = {n.id: 0.0 for n in net.nodes}
    for task in recipe.tasks:
        host = alloc.assignment.get(task.id)
        if host in used:
            used[host] += task.resources
            if not net.node(host).can_host(task):
                report.capability_violations.append((task.id, host))
    for node in net.nodes:
        if used[node.id] > node.resources:
            report.overloaded_nodes[node.id] = (used[node.id], node.resources)

    dist = net.distances
    for src, dst in recipe.edges:
        a, b = alloc.assignment.get(src), alloc.assignment.get(dst)
        if a in node_ids and b in node_ids and (a, b) not in dist:
            report.unreachable_edges.append((src, dst))
    return report


def avg_outgoing_energy(net: NetworkGraph) -> dict[str, float]:
    out = {}
    for node in net.nodes:
        energies = [w for _, w in net.adjacency[node.id]]
        # isolated nodes can only host tasks that never talk to another node
        out[node.id] = sum(energies) / len(energies) if energies else 0.0
    return out


# -- graph files -----------------------------------------------------------


def recipe_to_record(recipe: RecipeGraph) -> dict:
    tasks = []
    for t in recipe.tasks:
        rec = {
            "id": t.id,
            "resources": t.resources,
            "output_factor": t.output_factor,
            "computation_size": t.computation_size,
        }
        if t.capability is not None:
            rec["capability"] = t.capability
        tasks.append(rec)
    return {
        "format": "recipe",
        "version": GRAPH_FORMAT_VERSION,
        "tasks": tasks,
        "edges": [list(e) for e in recipe.edges],
    }


def network_to_record(net: NetworkGraph) -> dict:
    nodes = []
    for n in net.nodes:
        nodes.append(
            {
                "id": n.id,
                "processing_power": n.processing_power,
                "resources": n.resources,
                "compute_energy": n.compute_energy,
                "profile": n.profile.to_record(),
                "capabilities": sorted(n.capabilities),
            }
        )
    return {
        "format": "network",
        "version": GRAPH_FORMAT_VERSION,
        "nodes": nodes,
        "links": [{"a": l.a, "b": l.b, "energy": l.energy} for l in net.links],
    }


def _check_keys(where: str, record: Mapping, required: set, optional: set = frozenset()):
    if not isinstance(record, Mapping):
        raise GraphFormatError(f"{where}: expected an object")
    missing = required - set(record)
    unknown = set(record) - required - set(optional)
    if missing:
        raise GraphFormatError(f"{where}: missing keys {sorted(missing)}")
    if unknown:
        raise GraphFormatError(f"{where}: unknown keys {sorted(unknown)}")


def _check_header(record: Mapping, kind: str):
    if record.get("format") != kind:
        raise GraphFormatError(f"expected format {kind!r}, got {record.get('format')!r}")
    if record.get("version") != GRAPH_FORMAT_VERSION:
        raise GraphFormatError(f"unsupported {kind} format version {record.get('version')!r}")


def recipe_from_record(record: Mapping) -> RecipeGraph:
    _check_keys("recipe", record, {"format", "version", "tasks", "edges"})
    _check_header(record, "recipe")
    tasks = []
    for i, rec in enumerate(record["tasks"]):
        _check_keys(
            f"recipe.tasks[{i}]",
            rec,
            {"id", "resources", "output_factor", "computation_size"},
            {"capability"},
        )
        tasks.append(TaskSpec(**rec))
    try:
        return RecipeGraph(tuple(tasks), tuple((str(a), str(b)) for a, b in record["edges"]))
    except ValueError as exc:
        raise GraphFormatError(f"recipe: {exc}") from exc


def network_from_record(record: Mapping) -> NetworkGraph:
    _check_keys("network", record, {"format", "version", "nodes", "links"})
    _check_header(record, "network")
    nodes = []
    for i, rec in enumerate(record["nodes"]):
        _check_keys(
            f"network.nodes[{i}]",
            rec,
            {"id", "processing_power", "resources", "compute_energy"},
            {"profile", "capabilities"},
        )
        rec = dict(rec)
        profile = rec.pop("profile", {})
        _check_keys(f"network.nodes[{i}].profile", profile, set(), {"link_kind", "power_kind", "mobility"})
        try:
            nodes.append(
                NodeSpec(
                    profile=NodeProfile(**profile),
                    capabilities=frozenset(rec.pop("capabilities", ())),
                    **rec,
                )
            )
        except ValueError as exc:
            raise GraphFormatError(f"network.nodes[{i}]: {exc}") from exc
    links = []
    for i, rec in enumerate(record["links"]):
        _check_keys(f"network.links[{i}]", rec, {"a", "b", "energy"})
        links.append(Link(str(rec["a"]), str(rec["b"]), float(rec["energy"])))
    try:
        return NetworkGraph(tuple(nodes), tuple(links))
    except ValueError as exc:
        raise GraphFormatError(f"network: {exc}") from exc


def load_recipe(path) -> RecipeGraph:
    return recipe_from_record(json.loads(Path(path).read_text()))


def load_network(path) -> NetworkGraph:
    return network_from_record(json.loads(Path(path).read_text()))


def save_graph(path, graph) -> None:
    record = recipe_to_record(graph) if isinstance(graph, RecipeGraph) else network_to_record(graph)
    Path(path).write_text(json.dumps(record, indent=2) + "\n")
