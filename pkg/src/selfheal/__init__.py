"""Policy-tunable accrual failure detection and energy-aware task placement."""

from .accrual_fd import NEVER_RESET, AccrualEstimator, DetectorConfig, batch_estimate
from .allocation_model import (
    Allocation,
    EnergyBreakdown,
    Link,
    NetworkGraph,
    NodeSpec,
    RecipeGraph,
    TaskSpec,
    avg_outgoing_energy,
    check_feasibility,
    evaluate_energy,
    shortest_path_energy,
)
from .allocation_solvers import (
    Budget,
    SolverOutcome,
    Status,
    build_exact_model,
    solve_brute_force,
    solve_exact,
    solve_heuristic,
)
from .fd_policy import (
    DEFAULT_RULES,
    LinkKind,
    Mobility,
    NodeProfile,
    PolicyRule,
    PowerKind,
    TaskCriticality,
    derive_config,
)

__version__ = "0.1.0"
