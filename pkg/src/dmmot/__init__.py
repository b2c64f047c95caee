"""Dynamic multi-marginal optimal transport on periodic grids.

The discrete problem couples ``k`` one-dimensional marginals through a flow of
measures on ``[0, 1] x T^k`` obeying a staggered continuity equation; it is
solved by a primal-dual splitting and checked against 1D quantile couplings
and dual certificates.
"""

__version__ = "0.1.0"

from .analysis import circular_map_extract, map_error, pair_marginal, terminal_coupling
from .constraints import ConstraintSystem, ConvergenceError
from .cost import CostKind, QuadraticCost, dynamic_cost, prox_conjugate, prox_perspective, static_cost
from .duality import DualPotentials, dual_objective, hj_residual, hopf_lax_lift, legendre
from .flows import ProbabilityKernel, SourceSpec, flow_from_coupling, realize_source, smooth_flow
from .grid import CenteredField, GridSpec, StaggeredField, divergence_residual, interp, interp_adjoint
from .measures import CouplingTable, ValidationError
from .oracle import analytic_map, comonotone_coupling, preset_marginal, static_optimum
from .solver import SolverParams, estimate_opnorm, solve

__all__ = [
    "CenteredField",
    "ConstraintSystem",
    "ConvergenceError",
    "CostKind",
    "CouplingTable",
    "DualPotentials",
    "GridSpec",
    "ProbabilityKernel",
    "QuadraticCost",
    "SolverParams",
    "SourceSpec",
    "StaggeredField",
    "ValidationError",
    "analytic_map",
    "circular_map_extract",
    "comonotone_coupling",
    "divergence_residual",
    "dual_objective",
    "dynamic_cost",
    "estimate_opnorm",
    "flow_from_coupling",
    "hj_residual",
    "hopf_lax_lift",
    "interp",
    "interp_adjoint",
    "legendre",
    "map_error",
    "pair_marginal",
    "preset_marginal",
    "prox_conjugate",
    "prox_perspective",
    "realize_source",
    "smooth_flow",
    "solve",
    "static_cost",
    "static_optimum",
    "terminal_coupling",
]
