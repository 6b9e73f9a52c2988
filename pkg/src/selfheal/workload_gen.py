"""Seeded generators for networks, recipes and heartbeat traces.

Every generator draws from ``numpy.random.Generator(PCG64(seed))``, so a
(config, seed) pair reproduces its output bit for bit on any platform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .allocation_model import Link, NetworkGraph, NodeSpec, RecipeGraph, TaskSpec
from .errors import ShapeError
from .fd_policy import LinkKind, Mobility, NodeProfile, PowerKind


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _check_range(name, lo_hi, integer=False):
    lo, hi = lo_hi
    if not lo <= hi:
        raise ValueError(f"{name}: empty range {lo_hi}")
    if integer and (int(lo) != lo or int(hi) != hi):
        raise ValueError(f"{name}: integer bounds expected, got {lo_hi}")


@dataclass(frozen=True)
class NetworkGenConfig:
    node_count: int = 10
    wired_fraction: float = 0.6
    connect_prob: dict = field(
        default_factory=lambda: {"wired-wired": 0.8, "wireless-wireless": 0.5, "wireless-wired": 0.4}
    )
    link_energy: dict = field(default_factory=lambda: {"wired": 0.2, "wireless": 0.8})
    resource_range: tuple = (1, 8)
    speed_range: tuple = (1.0, 3.0)
    compute_energy_range: tuple = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        if self.node_count < 0:
            raise ValueError("node_count must be >= 0")
        if not 0.0 <= self.wired_fraction <= 1.0:
            raise ValueError("wired_fraction must lie in [0, 1]")
        if set(self.connect_prob) != {"wired-wired", "wireless-wireless", "wireless-wired"}:
            raise ValueError("connect_prob needs exactly wired-wired, wireless-wireless, wireless-wired")
        if any(not 0.0 <= p <= 1.0 for p in self.connect_prob.values()):
            raise ValueError("connection probabilities must lie in [0, 1]")
        if set(self.link_energy) != {"wired", "wireless"}:
            raise ValueError("link_energy needs exactly wired and wireless")
        if any(e < 0 for e in self.link_energy.values()):
            raise ValueError("link energies must be >= 0")
        _check_range("resource_range", self.resource_range, integer=True)
        _check_range("speed_range", self.speed_range)
        _check_range("compute_energy_range", self.compute_energy_range)
        if self.speed_range[0] <= 0:
            raise ValueError("speed_range must be positive")


@dataclass(frozen=True)
class RecipeGenConfig:
    task_count: int = 4
    shape: str = "long"
    resource_range: tuple = (1, 8)
    output_factor_range: tuple = (0.5, 1.5)
    computation_sizes: tuple = (1, 2)
    seed: int = 0

    def __post_init__(self):
        if self.shape not in ("long", "wide"):
            raise ShapeError(f"unknown recipe shape {self.shape!r}")
        if self.task_count < 2:
            raise ShapeError("a recipe needs at least 2 tasks")
        if self.shape == "wide" and self.task_count < 3:
            raise ShapeError("a wide recipe needs start, end and at least one middle task")
        _check_range("resource_range", self.resource_range, integer=True)
        _check_range("output_factor_range", self.output_factor_range)
        if not self.computation_sizes or min(self.computation_sizes) <= 0:
            raise ValueError("computation_sizes must be a nonempty set of positive values")


@dataclass(frozen=True)
class HeartbeatTraceConfig:
    # (mean s, variance s^2, duration s) per segment
    segments: tuple = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(tuple(s) for s in self.segments))
        for mean, var, duration in self.segments:
            if not mean > 0:
                raise ValueError(f"segment mean must be > 0, got {mean}")
            if var < 0:
                raise ValueError(f"segment variance must be >= 0, got {var}")
            if not duration > 0:
                raise ValueError(f"segment duration must be > 0, got {duration}")

    @property
    def duration(self) -> float:
        return float(sum(d for _, _, d in self.segments))


def gen_network(cfg: NetworkGenConfig) -> NetworkGraph:
    rng = make_rng(cfg.seed)
    n = cfg.node_count
    wired = rng.random(n) < cfg.wired_fraction
    lo, hi = cfg.resource_range
    resources = rng.integers(int(lo), int(hi) + 1, size=n)
    speed = rng.uniform(*cfg.speed_range, size=n)
    energy = rng.uniform(*cfg.compute_energy_range, size=n)

    nodes = []
    for i in range(n):
        profile = NodeProfile(
            LinkKind.WIRED if wired[i] else LinkKind.WIRELESS,
            PowerKind.MAINS if wired[i] else PowerKind.BATTERY,
            Mobility.STATIONARY,
        )
        nodes.append(
            NodeSpec(
                f"n{i}",
                processing_power=float(speed[i]),
                resources=int(resources[i]),
                compute_energy=float(energy[i]),
                profile=profile,
            )
        )

    p = cfg.connect_prob
    prob = np.array(
        [[p["wireless-wireless"], p["wireless-wired"]], [p["wireless-wired"], p["wired-wired"]]]
    )
    kind = wired.astype(int)
    links = []
    for i in range(n - 1):
        draws = rng.random(n - i - 1)
        hit = np.flatnonzero(draws < prob[kind[i], kind[i + 1 :]])
        for j in hit + i + 1:
            # a link is only wired when both ends are
            e = cfg.link_energy["wired" if wired[i] and wired[j] else "wireless"]
            links.append(Link(f"n{i}", f"n{j}", float(e)))
    return NetworkGraph(tuple(nodes), tuple(links))


def gen_recipe(cfg: RecipeGenConfig) -> RecipeGraph:
    rng = make_rng(cfg.seed)
    k = cfg.task_count
    lo, hi = cfg.resource_range
    resources = rng.integers(int(lo), int(hi) + 1, size=k)
    outputs = rng.uniform(*cfg.output_factor_range, size=k)
    sizes = rng.choice(np.asarray(cfg.computation_sizes, dtype=float), size=k)
    tasks = tuple(
        TaskSpec(f"t{i}", int(resources[i]), float(outputs[i]), float(sizes[i])) for i in range(k)
    )
    ids = [t.id for t in tasks]
    if cfg.shape == "long":
        edges = list(zip(ids, ids[1:]))
    else:
        start, end, middles = ids[0], ids[-1], ids[1:-1]
        edges = [(start, m) for m in middles] + [(m, end) for m in middles]
    return RecipeGraph(tasks, tuple(edges))


def gen_heartbeat_trace(cfg: HeartbeatTraceConfig) -> list[float]:
    """Arrival times: cumulative normal inter-arrivals, segment by segment.

    A draw that would land past the end of its segment is discarded and
    the next segment continues from the last accepted arrival.
    """
    rng = make_rng(cfg.seed)
    arrivals = []
    t = 0.0
    seg_end = 0.0
    for mean, var, duration in cfg.segments:
        seg_end += duration
        sd = float(np.sqrt(var))
        while True:
            x = rng.normal(mean, sd)
            while x <= 0:
                x = rng.normal(mean, sd)
            if t + x > seg_end:
                break
            t += x
            arrivals.append(float(t))
    return arrivals


def mean_shift_trace(seed: int, variance: float = 5.0) -> HeartbeatTraceConfig:
    return HeartbeatTraceConfig(((20.0, variance, 3000.0), (50.0, variance, 3000.0)), seed)


def shift_and_back_trace(seed: int) -> HeartbeatTraceConfig:
    return HeartbeatTraceConfig(((20.0, 1.0, 1000.0), (50.0, 1.0, 1000.0), (20.0, 1.0, 500.0)), seed)


def interval_trace(interval: float, seed: int, duration: float = 1000.0, variance: float = 1.0):
    return HeartbeatTraceConfig(((interval, variance, duration),), seed)


def segment_starts(segments: Sequence) -> list[float]:
    out, t = [], 0.0
    for _, _, d in segments:
        out.append(t)
        t += d
    return out
