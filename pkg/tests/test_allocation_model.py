import dataclasses
import json
import math
import random

import pytest

import oracles
from selfheal.allocation_model import (
    Allocation,
    Link,
    NetworkGraph,
    NodeSpec,
    RecipeGraph,
    TaskSpec,
    avg_outgoing_energy,
    check_feasibility,
    evaluate_energy,
    load_network,
    load_recipe,
    network_from_record,
    network_to_record,
    recipe_from_record,
    recipe_to_record,
    save_graph,
    shortest_path_energy,
)
from selfheal.errors import GraphFormatError, InfeasibleCommunicationError
from selfheal.workload_gen import NetworkGenConfig, RecipeGenConfig, gen_network, gen_recipe


def node(i, P=1.0, R=8, C=1.0, **kw):
    return NodeSpec(i, processing_power=P, resources=R, compute_energy=C, **kw)


def task(i, R=1, O=1.0, S=1.0, **kw):
    return TaskSpec(i, resources=R, output_factor=O, computation_size=S, **kw)


def net_of(ids, links):
    return NetworkGraph(tuple(node(i) for i in ids), tuple(Link(a, b, e) for a, b, e in links))


# -- shortest paths --------------------------------------------------------------


def test_single_node_distance():
    assert shortest_path_energy(net_of(["n"], [])) == {("n", "n"): 0.0}


def test_chain_distance():
    d = shortest_path_energy(net_of("abc", [("a", "b", 0.2), ("b", "c", 0.8)]))
    assert d[("a", "c")] == pytest.approx(1.0)


def test_detour_beats_direct_alternatives():
    net = net_of("abcx", [("a", "b", 0.8), ("b", "c", 0.8), ("a", "x", 0.1), ("x", "c", 0.1)])
    d = shortest_path_energy(net)
    ref = oracles.simple_path_distances(net)
    assert ref[("a", "c")] == pytest.approx(0.2)
    assert d[("a", "c")] == pytest.approx(0.2)
    assert d[("a", "c")] < 0.8


def test_disconnected_pairs_absent():
    d = shortest_path_energy(net_of("abc", [("a", "b", 0.2)]))
    assert ("a", "c") not in d and ("c", "a") not in d
    assert d[("c", "c")] == 0.0


def random_net(rng, k, p=0.5):
    ids = [f"n{i}" for i in range(k)]
    links = [
        (a, b, rng.choice([0.1, 0.2, 0.5, 0.8, rng.uniform(0, 2)]))
        for a, b in zip_pairs(ids)
        if rng.random() < p
    ]
    return net_of(ids, links)


def zip_pairs(ids):
    return [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]


def test_dijkstra_matches_simple_path_enumeration():
    rng = random.Random(11)
    for _ in range(150):
        net = random_net(rng, rng.randint(1, 7), rng.random())
        d = shortest_path_energy(net)
        ref = oracles.simple_path_distances(net)
        assert d.keys() == ref.keys()
        for k in d:
            assert d[k] == pytest.approx(ref[k], abs=1e-12)


def test_distance_symmetric_and_triangle():
    rng = random.Random(12)
    for _ in range(50):
        net = random_net(rng, 7, 0.6)
        d = shortest_path_energy(net)
        for (a, b), v in d.items():
            assert d[(b, a)] == pytest.approx(v, abs=1e-12)
            for c in net.index:
                if (b, c) in d:
                    assert d[(a, c)] <= v + d[(b, c)] + 1e-12


# -- energy -------------------------------------------------------------------------


def test_single_task_energy():
    net = NetworkGraph((node("n", P=2.0, C=0.5),))
    recipe = RecipeGraph((task("t", S=2.0),))
    e = evaluate_energy(recipe, net, Allocation({"t": "n"}))
    assert (e.device_energy, e.network_energy, e.total_energy) == (0.5, 0.0, 0.5)


def test_colocated_tasks_no_network_energy():
    net = net_of("ab", [("a", "b", 0.8)])
    recipe = RecipeGraph((task("t1"), task("t2")), (("t1", "t2"),))
    assert evaluate_energy(recipe, net, Allocation({"t1": "a", "t2": "a"})).network_energy == 0.0


def test_network_energy_output_times_distance():
    net = net_of("ab", [("a", "b", 0.2)])
    recipe = RecipeGraph((task("t1", O=1.5), task("t2")), (("t1", "t2"),))
    e = evaluate_energy(recipe, net, Allocation({"t1": "a", "t2": "b"}))
    assert e.network_energy == pytest.approx(0.3)


def test_disconnected_edge_raises_naming_edge():
    net = net_of("ab", [])
    recipe = RecipeGraph((task("t1"), task("t2")), (("t1", "t2"),))
    with pytest.raises(InfeasibleCommunicationError) as info:
        evaluate_energy(recipe, net, Allocation({"t1": "a", "t2": "b"}))
    assert info.value.edge == ("t1", "t2")


def random_instance(seed, nodes=6, tasks=4, shape="long"):
    net = gen_network(NetworkGenConfig(node_count=nodes, seed=seed, connect_prob={
        "wired-wired": 1.0, "wireless-wireless": 1.0, "wireless-wired": 1.0}))
    recipe = gen_recipe(RecipeGenConfig(task_count=tasks, shape=shape, seed=seed + 1))
    rng = random.Random(seed)
    alloc = Allocation({t.id: rng.choice(list(net.index)) for t in recipe.tasks})
    return recipe, net, alloc


def test_energy_matches_oracle_and_sums():
    for seed in range(40):
        recipe, net, alloc = random_instance(seed, shape="wide" if seed % 2 else "long")
        e = evaluate_energy(recipe, net, alloc)
        dev, netw = oracles.energy(recipe, net, alloc.assignment)
        assert e.device_energy == pytest.approx(dev, rel=1e-12)
        assert e.network_energy == pytest.approx(netw, rel=1e-12, abs=1e-12)
        assert e.total_energy == pytest.approx(e.device_energy + e.network_energy, rel=1e-9)


def test_energy_invariant_under_relabeling():
    for seed in range(20):
        recipe, net, alloc = random_instance(seed)
        rng = random.Random(seed)
        nmap = {n: f"x{i}" for i, n in enumerate(rng.sample(list(net.index), len(net.nodes)))}
        tmap = {t: f"y{i}" for i, t in enumerate(rng.sample(list(recipe.index), len(recipe.tasks)))}
        net2 = NetworkGraph(
            tuple(dataclasses.replace(n, id=nmap[n.id]) for n in reversed(net.nodes)),
            tuple(Link(nmap[l.b], nmap[l.a], l.energy) for l in net.links),
        )
        recipe2 = RecipeGraph(
            tuple(dataclasses.replace(t, id=tmap[t.id]) for t in reversed(recipe.tasks)),
            tuple((tmap[a], tmap[b]) for a, b in recipe.edges),
        )
        alloc2 = Allocation({tmap[t]: nmap[n] for t, n in alloc.assignment.items()})
        a = evaluate_energy(recipe, net, alloc).total_energy
        b = evaluate_energy(recipe2, net2, alloc2).total_energy
        assert b == pytest.approx(a, rel=1e-12)


@pytest.mark.parametrize("lam", [0.25, 3.0, 7.5])
def test_energy_scales_with_costs(lam):
    for seed in range(20):
        recipe, net, alloc = random_instance(seed)
        scaled = NetworkGraph(
            tuple(dataclasses.replace(n, compute_energy=n.compute_energy * lam) for n in net.nodes),
            tuple(Link(l.a, l.b, l.energy * lam) for l in net.links),
        )
        a = evaluate_energy(recipe, net, alloc).total_energy
        b = evaluate_energy(recipe, scaled, alloc).total_energy
        assert b == pytest.approx(lam * a, rel=1e-12)


# -- feasibility ---------------------------------------------------------------------


def test_empty_recipe_feasible():
    assert check_feasibility(RecipeGraph(), net_of("a", []), Allocation()).feasible


def test_overload_reported():
    net = NetworkGraph((node("n", R=8),))
    recipe = RecipeGraph((task("a", R=5), task("b", R=5)))
    report = check_feasibility(recipe, net, Allocation({"a": "n", "b": "n"}))
    assert not report.feasible
    assert report.overloaded_nodes == {"n": (10, 8)}


def test_totality_and_unknowns_reported():
    net = net_of("ab", [("a", "b", 0.2)])
    recipe = RecipeGraph((task("t1"), task("t2")), (("t1", "t2"),))
    report = check_feasibility(recipe, net, Allocation({"t1": "zz", "t9": "a"}))
    assert report.missing_tasks == ["t2"]
    assert report.unknown_tasks == ["t9"]
    assert report.unknown_nodes == ["zz"]
    assert not report.assignment_ok


def test_unreachable_edge_reported():
    net = net_of("ab", [])
    recipe = RecipeGraph((task("t1"), task("t2")), (("t1", "t2"),))
    report = check_feasibility(recipe, net, Allocation({"t1": "a", "t2": "b"}))
    assert report.unreachable_edges == [("t1", "t2")]
    assert report.to_record()["reachability"]["ok"] is False


def test_capability_violation_reported():
    net = NetworkGraph((node("a", capabilities={"cam"}), node("b")))
    recipe = RecipeGraph((task("t", capability="cam"),))
    assert check_feasibility(recipe, net, Allocation({"t": "a"})).feasible
    assert check_feasibility(recipe, net, Allocation({"t": "b"})).capability_violations == [("t", "b")]


# -- average outgoing energy ----------------------------------------------------------


def test_avg_outgoing_energy():
    net = net_of("abcd", [("a", "b", 0.2), ("a", "c", 0.8)])
    t = avg_outgoing_energy(net)
    assert t["a"] == pytest.approx(0.5)
    assert t["b"] == 0.2
    assert t["c"] == 0.8
    assert t["d"] == 0.0


# -- validation and files ------------------------------------------------------------------


@pytest.mark.parametrize(
    "build",
    [
        lambda: RecipeGraph((task("a"),), (("a", "a"),)),
        lambda: RecipeGraph((task("a"),), (("a", "b"),)),
        lambda: RecipeGraph((task("a"), task("a"))),
        lambda: TaskSpec("a", 0, 1, 1),
        lambda: TaskSpec("a", 1, -1, 1),
        lambda: TaskSpec("a", 1, 1, 0),
        lambda: NodeSpec("n", 0, 1, 1),
        lambda: NodeSpec("n", 1, math.inf, 1),
        lambda: net_of("ab", [("a", "b", -0.1)]),
        lambda: net_of("ab", [("a", "b", 0.1), ("b", "a", 0.2)]),
        lambda: net_of("a", [("a", "z", 0.1)]),
    ],
)
def test_invalid_graphs_rejected(build):
    with pytest.raises(ValueError):
        build()


def test_graph_files_roundtrip(tmp_path):
    recipe = gen_recipe(RecipeGenConfig(task_count=5, shape="wide", seed=3))
    net = gen_network(NetworkGenConfig(node_count=7, seed=3))
    save_graph(tmp_path / "r.json", recipe)
    save_graph(tmp_path / "n.json", net)
    assert load_recipe(tmp_path / "r.json") == recipe
    assert load_network(tmp_path / "n.json") == net


def test_graph_records_reject_unknown_keys():
    rec = recipe_to_record(RecipeGraph((task("a"),)))
    rec["tasks"][0]["colour"] = "red"
    with pytest.raises(GraphFormatError, match="colour"):
        recipe_from_record(rec)
    net = network_to_record(net_of("a", []))
    net["version"] = 2
    with pytest.raises(GraphFormatError):
        network_from_record(net)
    with pytest.raises(GraphFormatError):
        recipe_from_record(json.loads('{"format": "network", "version": 1, "tasks": [], "edges": []}'))
