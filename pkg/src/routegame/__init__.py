"""Two-class routing game toolkit.

Solves the mixed equilibrium between selfish users and a coordinated fleet
on networks with cubic polynomial delays, computes the system optimum and
the Price of Anarchy, and verifies the structural behaviour of the
equilibrium along fleet-share sweeps: critical share, Lipschitz bounds and
monotonicity on parallel networks.
"""

from .analysis import (
    AssumptionViolated,
    CriticalShareReport,
    MonotonicityReport,
    SupportSets,
    SweepRecord,
    compute_supports,
    construct_scaled_equilibrium,
    detect_critical_share,
    empirical_lipschitz,
    monotonicity_report,
    sweep_alpha,
)
from .calculus import (
    ConditionsReport,
    FlowProfile,
    LoadProfile,
    check_conditions,
    class_costs,
    link_delay,
    marginal_delay,
    operator_H,
    total_delay,
)
from .equilibrium import (
    ConditionsUnverified,
    EquilibriumResult,
    NotConverged,
    project_feasible,
    solve_equilibrium,
    solve_equilibrium_batch,
    vi_gap,
    wardrop_residual,
)
from .netmodel import (
    DelayPoly,
    IncidenceStructure,
    Link,
    Network,
    OdSpec,
    PathCountExceeded,
    enumerate_paths,
    feasibility_residual,
    validate_network,
)
from .oracle import brute_force_equilibrium, brute_force_optimum
from .sysopt import price_of_anarchy, solve_system_optimum

__all__ = [
    "AssumptionViolated",
    "ConditionsReport",
    "ConditionsUnverified",
    "CriticalShareReport",
    "DelayPoly",
    "EquilibriumResult",
    "FlowProfile",
    "IncidenceStructure",
    "Link",
    "LoadProfile",
    "MonotonicityReport",
    "Network",
    "NotConverged",
    "OdSpec",
    "PathCountExceeded",
    "SupportSets",
    "SweepRecord",
    "brute_force_equilibrium",
    "brute_force_optimum",
    "check_conditions",
    "class_costs",
    "compute_supports",
    "construct_scaled_equilibrium",
    "detect_critical_share",
    "empirical_lipschitz",
    "enumerate_paths",
    "feasibility_residual",
    "link_delay",
    "marginal_delay",
    "monotonicity_report",
    "operator_H",
    "price_of_anarchy",
    "project_feasible",
    "solve_equilibrium",
    "solve_equilibrium_batch",
    "solve_system_optimum",
    "sweep_alpha",
    "total_delay",
    "validate_network",
    "vi_gap",
    "wardrop_residual",
]

__version__ = "0.1.0"
