"""Order-statistic solvers: optimal thresholding under volume constraints."""
from .analysis import (assignment_reduce, direction, lagrange_multiplier,
                       objective, satisfies_interval_criterion,
                       separation_violation, variational_objective)
from .solver import (error_energy, feasible_seed_for_interval,
                     induced_clustering, solve_equality, solve_interval,
                     tolerance)
from .types import (Clustering, Exact, Interval, OrderStatistic, SolverStats,
                    SwapPath)

__all__ = [
    "Clustering", "Exact", "Interval", "OrderStatistic", "SolverStats", "SwapPath",
    "induced_clustering", "error_energy", "direction", "solve_equality",
    "solve_interval", "feasible_seed_for_interval", "lagrange_multiplier",
    "variational_objective", "assignment_reduce", "objective",
    "separation_violation", "satisfies_interval_criterion", "tolerance",
]
