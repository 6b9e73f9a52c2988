"""Exact, heuristic and brute-force task placement.

All three solvers share one tie-breaking rule: among allocations with the
same objective value (compared exactly, as evaluated in task-then-edge
order), the one whose node-index vector is lexicographically smallest in
task order wins.  Exploration order is therefore free to follow bounds.

The exact solver is a depth-first branch and bound over task-to-node
assignments.  Its lower bound lets every unplaced task independently
pick its cheapest node given the remaining capacity, paying device energy
plus the transfer energy towards neighbours that are already placed;
edges between two unplaced tasks are bounded below by zero.  Each term
only drops constraints or non-negative costs, so the bound is admissible.
"""

from __future__ import annotations

import enum
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .allocation_model import (
    Allocation,
    EnergyBreakdown,
    NetworkGraph,
    RecipeGraph,
    avg_outgoing_energy,
    distance_matrix,
    evaluate_energy,
)
from .errors import InfeasibleCommunicationError, InstanceTooLargeError

BRUTE_FORCE_LIMIT = 10**7
# relative slack when pruning, so exact ties are never cut off by rounding
_PRUNE_RTOL = 1e-9


class Status(str, enum.Enum):
    PROVEN_OPTIMAL = "proven_optimal"
    FEASIBLE_HEURISTIC = "feasible_heuristic"
    INFEASIBLE = "infeasible"
    RESOURCE_LIMIT = "resource_limit"


@dataclass(frozen=True)
class Budget:
    time_limit: Optional[float] = None  # CPU seconds
    node_limit: Optional[int] = None


@dataclass
class SolverOutcome:
    status: Status
    allocation: Optional[Allocation] = None
    breakdown: Optional[EnergyBreakdown] = None
    stats: dict = field(default_factory=dict)
    solver: str = ""

    @property
    def total_energy(self) -> Optional[float]:
        return None if self.breakdown is None else self.breakdown.total_energy

    def to_record(self) -> dict:
        return {
            "solver": self.solver,
            "status": self.status.value,
            "allocation": None if self.allocation is None else self.allocation.pairs(),
            "breakdown": None if self.breakdown is None else self.breakdown.to_record(),
            "stats": dict(self.stats),
        }


class _Instance:
    """Index-based view of a recipe/network pair."""

    def __init__(self, recipe: RecipeGraph, net: NetworkGraph):
        self.recipe = recipe
        self.net = net
        self.nt = len(recipe.tasks)
        self.nn = len(net.nodes)
        self.dev = [
            [n.compute_energy * (t.computation_size / n.processing_power) for n in net.nodes]
            for t in recipe.tasks
        ]
        self.eligible = [[n.can_host(t) for n in net.nodes] for t in recipe.tasks]
        self.req = [t.resources for t in recipe.tasks]
        self.cap = [n.resources for n in net.nodes]
        self.dist = distance_matrix(net)
        tidx = recipe.index
        self.edges = [
            (tidx[a], tidx[b], recipe.tasks[tidx[a]].output_factor) for a, b in recipe.edges
        ]

    def allocation(self, vec) -> Allocation:
        return Allocation(
            {t.id: self.net.nodes[n].id for t, n in zip(self.recipe.tasks, vec)}
        )

    def value(self, vec) -> float:
        """Objective of a full assignment, summed exactly as evaluate_energy does."""
        device = 0.0
        for t in range(self.nt):
            device += self.dev[t][vec[t]]
        network = 0.0
        for a, b, out in self.edges:
            network += out * self.dist[vec[a]][vec[b]]
        return device + network

    def feasible(self, vec) -> bool:
        used = [0.0] * self.nn
        for t, n in enumerate(vec):
            if not self.eligible[t][n]:
                return False
            used[n] += self.req[t]
        if any(u > c for u, c in zip(used, self.cap)):
            return False
        return all(math.isfinite(self.dist[vec[a]][vec[b]]) for a, b, _ in self.edges)


def _better(value, vec, best_value, best_vec) -> bool:
    if best_vec is None or value < best_value:
        return True
    return value == best_value and tuple(vec) < tuple(best_vec)


def _outcome(inst, solver, status, vec, stats) -> SolverOutcome:
    if vec is None:
        return SolverOutcome(status, stats=stats, solver=solver)
    alloc = inst.allocation(vec)
    return SolverOutcome(
        status, alloc, evaluate_energy(inst.recipe, inst.net, alloc), stats, solver
    )


# -- exact model ------------------------------------------------------------


@dataclass
class ExactPlacementModel:
    """The linearised quadratic model, materialised as sparse constraint rows.

    X is indexed (task, node); Y is indexed (recipe edge, node, node) and is
    only created for pairs of tasks joined by a recipe edge.  Each row is a
    ``(coefficients, lower, upper)`` triple over the flat variable vector.
    """

    nt: int
    nn: int
    n_edges: int
    cost: np.ndarray
    upper: np.ndarray
    rows: list = field(default_factory=list)
    edge_pairs: list = field(default_factory=list)

    @property
    def num_x(self) -> int:
        return self.nt * self.nn

    @property
    def num_y(self) -> int:
        return self.n_edges * self.nn * self.nn

    @property
    def num_vars(self) -> int:
        return self.num_x + self.num_y

    def x_index(self, t, n) -> int:
        return t * self.nn + n

    def y_index(self, e, n1, n2) -> int:
        return self.num_x + (e * self.nn + n1) * self.nn + n2

    def vector_from_assignment(self, vec) -> np.ndarray:
        x = np.zeros(self.num_vars)
        for t, n in enumerate(vec):
            x[self.x_index(t, n)] = 1.0
        for e, (a, b) in enumerate(self.edge_pairs):
            x[self.y_index(e, vec[a], vec[b])] = 1.0
        return x

    def violations(self, x: np.ndarray, tol: float = 1e-9) -> list[int]:
        bad = []
        for i, (coef, lo, hi) in enumerate(self.rows):
            val = sum(c * x[j] for j, c in coef.items())
            if val < lo - tol or val > hi + tol:
                bad.append(i)
        return bad

    def as_milp(self):
        """Dense ``(c, A, lb, ub, var_upper)`` arrays for an external MILP solver."""
        a = np.zeros((len(self.rows), self.num_vars))
        lb = np.empty(len(self.rows))
        ub = np.empty(len(self.rows))
        for i, (coef, lo, hi) in enumerate(self.rows):
            for j, c in coef.items():
                a[i, j] = c
            lb[i], ub[i] = lo, hi
        return self.cost.copy(), a, lb, ub, self.upper.copy()


def build_exact_model(recipe: RecipeGraph, net: NetworkGraph) -> ExactPlacementModel:
    inst = _Instance(recipe, net)
    model = ExactPlacementModel(
        inst.nt,
        inst.nn,
        len(inst.edges),
        np.zeros(0),
        np.zeros(0),
        edge_pairs=[(a, b) for a, b, _ in inst.edges],
    )
    cost = np.zeros(model.num_vars)
    upper = np.ones(model.num_vars)
    rows = []
    for t in range(inst.nt):
        for n in range(inst.nn):
            cost[model.x_index(t, n)] = inst.dev[t][n]
            if not inst.eligible[t][n]:
                upper[model.x_index(t, n)] = 0.0
        # assigned exactly once
        rows.append(({model.x_index(t, n): 1.0 for n in range(inst.nn)}, 1.0, 1.0))
    for n in range(inst.nn):
        # capacity
        rows.append(
            ({model.x_index(t, n): inst.req[t] for t in range(inst.nt)}, -math.inf, inst.cap[n])
        )
    for e, (a, b, out) in enumerate(inst.edges):
        for n1 in range(inst.nn):
            for n2 in range(inst.nn):
                y = model.y_index(e, n1, n2)
                d = inst.dist[n1][n2]
                if math.isfinite(d):
                    cost[y] = out * d
                else:
                    upper[y] = 0.0
                xa, xb = model.x_index(a, n1), model.x_index(b, n2)
                rows.append(({y: 1.0, xa: -1.0}, -math.inf, 0.0))
                rows.append(({y: 1.0, xb: -1.0}, -math.inf, 0.0))
                rows.append(({y: 1.0, xa: -1.0, xb: -1.0}, -1.0, math.inf))
    model.cost = cost
    model.upper = upper
    model.rows = rows
    return model


def _branch_order(inst: _Instance) -> list[int]:
    """Tasks in breadth-first order over the undirected recipe, so most
    placements see already-placed neighbours."""
    nbrs = [[] for _ in range(inst.nt)]
    for a, b, _ in inst.edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    order, seen = [], set()
    for root in range(inst.nt):
        if root in seen:
            continue
        seen.add(root)
        queue = [root]
        while queue:
            t = queue.pop(0)
            order.append(t)
            for u in sorted(nbrs[t]):
                if u not in seen:
                    seen.add(u)
                    queue.append(u)
    return order


class _BudgetExhausted(Exception):
    pass


def solve_exact(
    recipe: RecipeGraph,
    net: NetworkGraph,
    budget: Optional[Budget] = None,
    seed_incumbent: bool = True,
) -> SolverOutcome:
    budget = budget or Budget()
    cpu0 = time.process_time()
    wall0 = time.perf_counter()
    inst = _Instance(recipe, net)
    nt, nn = inst.nt, inst.nn
    dev = np.array(inst.dev, dtype=float).reshape(nt, nn)
    dist = np.array(inst.dist, dtype=float).reshape(nn, nn)
    eligible = np.array(inst.eligible, dtype=bool).reshape(nt, nn)
    req = np.array(inst.req, dtype=float)
    cap = np.array(inst.cap, dtype=float)
    order = _branch_order(inst)
    # incident edges per task: (other task, output factor, task is the source)
    incident = [[] for _ in range(nt)]
    for a, b, out in inst.edges:
        incident[a].append((b, out, True))
        incident[b].append((a, out, False))
    construction = time.process_time() - cpu0

    best = {"value": math.inf, "vec": None}
    if seed_incumbent and nt:
        try:
            seed = solve_heuristic(recipe, net)
        except InfeasibleCommunicationError:
            seed = None
        if seed is not None and seed.allocation is not None:
            vec = [net.index[seed.allocation[t.id]] for t in recipe.tasks]
            if inst.feasible(vec):
                best["value"], best["vec"] = inst.value(vec), vec

    explored = 0
    vec = [-1] * nt
    inf = math.inf

    def bound_rest(depth, inc, free):
        total = 0.0
        for t in order[depth:]:
            vals = dev[t] + inc[t]
            ok = eligible[t] & (free >= req[t]) & np.isfinite(vals)
            if not ok.any():
                return inf
            total += float(vals[ok].min())
        return total

    def descend(depth, partial, inc, free):
        nonlocal explored
        explored += 1
        if budget.node_limit is not None and explored > budget.node_limit:
            raise _BudgetExhausted
        if budget.time_limit is not None and explored % 256 == 0:
            if time.process_time() - cpu0 > budget.time_limit:
                raise _BudgetExhausted
        if depth == nt:
            value = inst.value(vec)
            if _better(value, vec, best["value"], best["vec"]):
                best["value"], best["vec"] = value, list(vec)
            return
        t = order[depth]
        step = dev[t] + inc[t]
        ok = eligible[t] & (free >= req[t]) & np.isfinite(step)
        children = sorted((float(step[n]), n) for n in np.flatnonzero(ok))
        for cost, n in children:
            new_partial = partial + cost
            new_inc = inc
            if incident[t]:
                new_inc = inc.copy()
                for other, out, is_src in incident[t]:
                    if vec[other] < 0:
                        new_inc[other] = new_inc[other] + out * (dist[n] if is_src else dist[:, n])
            new_free = free.copy()
            new_free[n] -= req[t]
            vec[t] = n
            lb = new_partial + bound_rest(depth + 1, new_inc, new_free)
            limit = best["value"] + _PRUNE_RTOL * max(1.0, abs(best["value"]))
            if lb < inf and lb <= limit:
                descend(depth + 1, new_partial, new_inc, new_free)
            vec[t] = -1

    status = Status.PROVEN_OPTIMAL
    try:
        descend(0, 0.0, np.zeros((nt, nn)), cap.copy())
    except _BudgetExhausted:
        status = Status.RESOURCE_LIMIT
    if status is Status.PROVEN_OPTIMAL and best["vec"] is None:
        status = Status.INFEASIBLE
    stats = {
        "explored_nodes": explored,
        "x_variables": nt * nn,
        "y_variables": len(inst.edges) * nn * nn,
        "construction_cpu_s": construction,
        "cpu_time_s": time.process_time() - cpu0,
        "wall_time_s": time.perf_counter() - wall0,
    }
    return _outcome(inst, "exact", status, best["vec"], stats)


# -- heuristic ----------------------------------------------------------------


def surrogate_costs(recipe: RecipeGraph, net: NetworkGraph) -> list[list[float]]:
    """Per-(task, node) cost of the linear surrogate objective."""
    t_hat = avg_outgoing_energy(net)
    return [
        [
            n.compute_energy * (t.computation_size / n.processing_power)
            + t.output_factor * t_hat[n.id]
            for n in net.nodes
        ]
        for t in recipe.tasks
    ]


def surrogate_value(recipe: RecipeGraph, net: NetworkGraph, alloc: Allocation) -> float:
    costs = surrogate_costs(recipe, net)
    total = 0.0
    for i, t in enumerate(recipe.tasks):
        total += costs[i][net.index[alloc[t.id]]]
    return total


def _solve_gap(costs, req, cap, eligible):
    """Exact generalised assignment by depth-first branch and bound.

    Returns ``(best vector or None, explored node count)``.
    """
    nt = len(costs)
    nn = len(cap)
    # If every task's cheapest node fits, that vector is optimal, and the
    # lowest-index choice per task is also the lexicographically smallest optimum.
    greedy = []
    load = [0.0] * nn
    for t in range(nt):
        m, arg = math.inf, -1
        for n in range(nn):
            if eligible[t][n] and costs[t][n] < m:
                m, arg = costs[t][n], n
        if arg < 0:
            return None, 1
        greedy.append(arg)
        load[arg] += req[t]
    if all(used <= c for used, c in zip(load, cap)):
        return greedy, 1

    # tightest tasks first: fewest eligible nodes, then largest demand
    order = sorted(range(nt), key=lambda t: (sum(eligible[t]), -req[t], t))
    ranked = [sorted((costs[t][n], n) for n in range(nn) if eligible[t][n]) for t in range(nt)]
    free = list(cap)
    vec = [-1] * nt
    best = [math.inf, None]
    explored = 0

    def value(v):
        total = 0.0
        for t in range(nt):
            total += costs[t][v[t]]
        return total

    # greedy incumbent: cheapest node that still fits, in branching order
    for t in order:
        for c, n in ranked[t]:
            if free[n] >= req[t]:
                free[n] -= req[t]
                vec[t] = n
                break
        else:
            break
    if -1 not in vec:
        best[0], best[1] = value(vec), list(vec)
    free = list(cap)
    vec = [-1] * nt

    def rest(depth):
        total = 0.0
        for t in order[depth:]:
            for c, n in ranked[t]:
                if free[n] >= req[t]:
                    total += c
                    break
            else:
                return math.inf
        return total

    def descend(depth, partial):
        nonlocal explored
        explored += 1
        if depth == nt:
            v = value(vec)
            if _better(v, vec, best[0], best[1]):
                best[0], best[1] = v, list(vec)
            return
        t = order[depth]
        limit = best[0] + _PRUNE_RTOL * max(1.0, abs(best[0]))
        for c, n in ranked[t]:
            if free[n] < req[t]:
                continue
            if partial + c > limit:
                break
            free[n] -= req[t]
            vec[t] = n
            lb = partial + c + rest(depth + 1)
            if lb <= best[0] + _PRUNE_RTOL * max(1.0, abs(best[0])):
                descend(depth + 1, partial + c)
            vec[t] = -1
            free[n] += req[t]

    descend(0, 0.0)
    return best[1], explored


def solve_heuristic(recipe: RecipeGraph, net: NetworkGraph) -> SolverOutcome:
    """Optimal allocation for the average-link-energy surrogate objective.

    The reported breakdown is the true energy of that allocation; an
    :class:`InfeasibleCommunicationError` propagates when the surrogate
    picks nodes that cannot reach each other.
    """
    cpu0 = time.process_time()
    wall0 = time.perf_counter()
    costs = surrogate_costs(recipe, net)
    eligible = [[n.can_host(t) for n in net.nodes] for t in recipe.tasks]
    req = [t.resources for t in recipe.tasks]
    cap = [n.resources for n in net.nodes]
    construction = time.process_time() - cpu0
    vec, explored = _solve_gap(costs, req, cap, eligible)
    stats = {
        "explored_nodes": explored,
        "x_variables": len(recipe.tasks) * len(net.nodes),
        "y_variables": 0,
        "construction_cpu_s": construction,
    }
    if vec is None:
        stats["cpu_time_s"] = time.process_time() - cpu0
        stats["wall_time_s"] = time.perf_counter() - wall0
        return SolverOutcome(Status.INFEASIBLE, stats=stats, solver="heuristic")
    alloc = Allocation({t.id: net.nodes[n].id for t, n in zip(recipe.tasks, vec)})
    breakdown = evaluate_energy(recipe, net, alloc)
    stats["surrogate_value"] = sum(costs[t][vec[t]] for t in range(len(vec)))
    stats["cpu_time_s"] = time.process_time() - cpu0
    stats["wall_time_s"] = time.perf_counter() - wall0
    return SolverOutcome(Status.FEASIBLE_HEURISTIC, alloc, breakdown, stats, "heuristic")


# -- oracle -------------------------------------------------------------------


def solve_brute_force(recipe: RecipeGraph, net: NetworkGraph) -> SolverOutcome:
    nt, nn = len(recipe.tasks), len(net.nodes)
    count = nn**nt
    if count > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(
            f"{nn}^{nt} = {count} assignments exceeds the brute-force limit {BRUTE_FORCE_LIMIT}"
        )
    cpu0 = time.process_time()
    inst = _Instance(recipe, net)
    best_value, best_vec = math.inf, None
    enumerated = 0
    # product() walks vectors in lexicographic order, so strict < keeps the
    # lexicographically smallest among ties
    for vec in itertools.product(range(nn), repeat=nt):
        enumerated += 1
        if not inst.feasible(vec):
            continue
        value = inst.value(vec)
        if best_vec is None or value < best_value:
            best_value, best_vec = value, list(vec)
    stats = {"enumerated": enumerated, "cpu_time_s": time.process_time() - cpu0}
    status = Status.PROVEN_OPTIMAL if best_vec is not None else Status.INFEASIBLE
    return _outcome(inst, "brute", status, best_vec, stats)


SOLVERS = {
    "exact": solve_exact,
    "heuristic": solve_heuristic,
    "brute": solve_brute_force,
}
