import math

import numpy as np
import pytest

from selfheal.errors import ShapeError
from selfheal.workload_gen import (
    HeartbeatTraceConfig,
    NetworkGenConfig,
    RecipeGenConfig,
    gen_heartbeat_trace,
    gen_network,
    gen_recipe,
    shift_and_back_trace,
)

ALL = {"wired-wired": 1.0, "wireless-wireless": 1.0, "wireless-wired": 1.0}
NONE = {"wired-wired": 0.0, "wireless-wireless": 0.0, "wireless-wired": 0.0}


def test_empty_network():
    net = gen_network(NetworkGenConfig(node_count=0))
    assert net.nodes == () and net.links == ()


def test_complete_graph():
    n = 9
    net = gen_network(NetworkGenConfig(node_count=n, connect_prob=ALL))
    assert len(net.links) == math.comb(n, 2)


def test_wired_fraction_large_network():
    net = gen_network(NetworkGenConfig(node_count=10_000, connect_prob=NONE, seed=1))
    wired = sum(n.profile.link_kind.value == "wired" for n in net.nodes)
    assert abs(wired / 10_000 - 0.6) <= 0.02


def test_link_energy_rule():
    net = gen_network(NetworkGenConfig(node_count=40, connect_prob=ALL, seed=2))
    kind = {n.id: n.profile.link_kind.value for n in net.nodes}
    for link in net.links:
        both_wired = kind[link.a] == kind[link.b] == "wired"
        assert link.energy == (0.2 if both_wired else 0.8)


def test_connection_probabilities():
    net = gen_network(NetworkGenConfig(node_count=400, seed=3))
    kind = {n.id: n.profile.link_kind.value for n in net.nodes}
    ids = list(kind)
    linked = {frozenset((l.a, l.b)) for l in net.links}
    counts = {}
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            key = "-".join(sorted((kind[ids[i]], kind[ids[j]]), reverse=True))
            hit, total = counts.get(key, (0, 0))
            counts[key] = (hit + (frozenset((ids[i], ids[j])) in linked), total + 1)
    for key, p in (("wired-wired", 0.8), ("wireless-wireless", 0.5), ("wireless-wired", 0.4)):
        hit, total = counts[key]
        assert abs(hit / total - p) < 0.02


def test_node_parameter_means():
    net = gen_network(NetworkGenConfig(node_count=10_000, connect_prob=NONE, seed=4))
    res = np.array([n.resources for n in net.nodes])
    speed = np.array([n.processing_power for n in net.nodes])
    energy = np.array([n.compute_energy for n in net.nodes])
    assert set(np.unique(res)) == set(range(1, 9))
    assert res.mean() == pytest.approx(4.5, rel=0.02)
    assert speed.mean() == pytest.approx(2.0, rel=0.02)
    assert energy.mean() == pytest.approx(1.0, rel=0.02)
    assert speed.min() >= 1 and speed.max() <= 3
    assert energy.min() >= 0.5 and energy.max() <= 1.5


def test_task_parameter_means():
    r = gen_recipe(RecipeGenConfig(task_count=10_000, seed=5))
    res = np.array([t.resources for t in r.tasks])
    out = np.array([t.output_factor for t in r.tasks])
    size = np.array([t.computation_size for t in r.tasks])
    assert res.mean() == pytest.approx(4.5, rel=0.02)
    assert out.mean() == pytest.approx(1.0, rel=0.02)
    assert size.mean() == pytest.approx(1.5, rel=0.02)
    assert set(np.unique(size)) == {1.0, 2.0}


@pytest.mark.parametrize("shape,k,edges", [("long", 4, 3), ("wide", 5, 6), ("long", 2, 1), ("wide", 3, 2)])
def test_recipe_shapes(shape, k, edges):
    r = gen_recipe(RecipeGenConfig(task_count=k, shape=shape))
    assert len(r.edges) == edges


def test_long_is_path_and_wide_is_fan():
    long = gen_recipe(RecipeGenConfig(task_count=4, shape="long"))
    assert list(long.edges) == [("t0", "t1"), ("t1", "t2"), ("t2", "t3")]
    wide = gen_recipe(RecipeGenConfig(task_count=4, shape="wide"))
    assert set(wide.edges) == {("t0", "t1"), ("t0", "t2"), ("t1", "t3"), ("t2", "t3")}


@pytest.mark.parametrize("kwargs", [{"task_count": 2, "shape": "wide"}, {"task_count": 1}, {"shape": "tall"}])
def test_recipe_shape_errors(kwargs):
    with pytest.raises(ShapeError):
        RecipeGenConfig(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"wired_fraction": 1.5},
        {"connect_prob": {"wired-wired": 2.0, "wireless-wireless": 0.5, "wireless-wired": 0.4}},
        {"connect_prob": {"wired-wired": 0.5}},
        {"resource_range": (8, 1)},
        {"speed_range": (0.0, 1.0)},
        {"node_count": -1},
    ],
)
def test_network_config_validation(kwargs):
    with pytest.raises(ValueError):
        NetworkGenConfig(**kwargs)


def test_generators_seed_deterministic():
    for seed in (0, 1, 2**63 - 1):
        assert gen_network(NetworkGenConfig(node_count=30, seed=seed)) == gen_network(
            NetworkGenConfig(node_count=30, seed=seed)
        )
        assert gen_recipe(RecipeGenConfig(task_count=6, shape="wide", seed=seed)) == gen_recipe(
            RecipeGenConfig(task_count=6, shape="wide", seed=seed)
        )
    a = gen_network(NetworkGenConfig(node_count=30, seed=1))
    b = gen_network(NetworkGenConfig(node_count=30, seed=2))
    assert a != b


def test_known_first_draws_are_stable():
    # golden values pin the generator to PCG64 across platforms
    net = gen_network(NetworkGenConfig(node_count=3, seed=123))
    again = gen_network(NetworkGenConfig(node_count=3, seed=123))
    assert [n.processing_power.hex() for n in net.nodes] == [
        n.processing_power.hex() for n in again.nodes
    ]
    rng = np.random.Generator(np.random.PCG64(123))
    wired = rng.random(3) < 0.6
    rng.integers(1, 9, size=3)
    speed = rng.uniform(1.0, 3.0, size=3)
    assert [n.processing_power for n in net.nodes] == speed.tolist()
    assert [n.profile.link_kind.value == "wired" for n in net.nodes] == wired.tolist()


# -- traces ------------------------------------------------------------------------


def test_zero_variance_trace():
    assert gen_heartbeat_trace(HeartbeatTraceConfig(((20.0, 0.0, 100.0),))) == [20, 40, 60, 80, 100]


def test_empty_trace():
    assert gen_heartbeat_trace(HeartbeatTraceConfig(())) == []


def test_window_trace_length():
    lengths = [len(gen_heartbeat_trace(shift_and_back_trace(s))) for s in range(50)]
    assert all(90 <= n <= 100 for n in lengths)


def test_trace_strictly_increasing_and_within_segments():
    cfg = HeartbeatTraceConfig(((2.0, 4.0, 500.0), (5.0, 1.0, 500.0)), seed=3)
    trace = gen_heartbeat_trace(cfg)
    assert all(b > a for a, b in zip(trace, trace[1:]))
    assert trace[-1] <= cfg.duration


def test_trace_segment_means():
    cfg = HeartbeatTraceConfig(((20.0, 5.0, 200_000.0), (50.0, 5.0, 200_000.0)), seed=8)
    trace = np.array(gen_heartbeat_trace(cfg))
    gaps = np.diff(trace)
    first = gaps[trace[1:] <= 200_000.0]
    second = gaps[trace[:-1] > 200_000.0]
    assert first.mean() == pytest.approx(20.0, rel=0.01)
    assert second.mean() == pytest.approx(50.0, rel=0.01)
    assert first.var(ddof=1) == pytest.approx(5.0, rel=0.05)


def test_negative_draws_resampled():
    trace = gen_heartbeat_trace(HeartbeatTraceConfig(((1.0, 4.0, 2000.0),), seed=1))
    assert all(b > a for a, b in zip(trace, trace[1:]))
    assert trace[0] > 0


def test_trace_deterministic():
    cfg = shift_and_back_trace(11)
    assert gen_heartbeat_trace(cfg) == gen_heartbeat_trace(cfg)


@pytest.mark.parametrize("seg", [(0.0, 1.0, 10.0), (1.0, -1.0, 10.0), (1.0, 1.0, 0.0)])
def test_trace_config_validation(seg):
    with pytest.raises(ValueError):
        HeartbeatTraceConfig((seg,))
