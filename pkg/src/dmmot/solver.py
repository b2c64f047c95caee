"""Primal-dual (Chambolle-Pock) iteration for the discrete dynamic problem.

The problem is ``min_h F(K h) + G(h)`` with ``K = Sbar o I`` (interpolation to
the centered grid followed by the cost channels), ``F`` the perspective sum
and ``G`` the indicator of the affine constraint set.  One step reads::

    g <- Prox_{sigma F*}(g + sigma K f)
    h <- Proj(h - tau K* g)
    f <- h + theta (h_new - h_old)
"""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .constraints import ConstraintSystem
from .cost import PerspectivePoint, QuadraticCost, dynamic_cost, prox_conjugate
from .grid import CenteredField, GridSpec, StaggeredField, interp, interp_adjoint, staggered_size
from .measures import ValidationError, product_measure

logger = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = (
    "iteration",
    "objective",
    "continuity_inf",
    "marginal_inf",
    "source_inf",
    "min_mass",
    "step_norm",
)


@dataclass(frozen=True)
class SolverParams:
    theta: float = 1.0
    sigma: float = 85.0
    tau: float = 0.1
    iterations: int = 5000
    log_every: int = 10
    enforce_step_rule: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValidationError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ValidationError(f"iterations must be a nonnegative integer, got {self.iterations}")
        if int(self.log_every) != self.log_every or self.log_every < 1:
            raise ValidationError(f"log_every must be a positive integer, got {self.log_every}")


@dataclass(frozen=True)
class SolverState:
    h: StaggeredField
    f: StaggeredField
    g_dual: PerspectivePoint
    iteration: int = 0
    step_norm: float = float("nan")


@dataclass
class SolverDiagnostics:
    rows: list = field(default_factory=list)
    opnorm: float = float("nan")
    step_product: float = float("nan")
    wall_time: float = 0.0
    final_state: SolverState | None = None

    def append(self, **row):
        self.rows.append(tuple(float(row[c]) if c != "iteration" else int(row[c]) for c in DIAGNOSTIC_COLUMNS))

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[DIAGNOSTIC_COLUMNS.index(name)] for r in self.rows])


# Operator K ---------------------------------------------------------------


def apply_K(u: StaggeredField, cost: QuadraticCost, g: GridSpec) -> PerspectivePoint:
    c = interp(u, g)
    return PerspectivePoint(c.pi_c, cost.channels(c.m_c))


def apply_K_adjoint(y: PerspectivePoint, cost: QuadraticCost, g: GridSpec) -> StaggeredField:
    return interp_adjoint(CenteredField(y.pi, cost.channels_adjoint(y.m)), g)


def dual_zeros(cost: QuadraticCost, g: GridSpec) -> PerspectivePoint:
    shape = (g.n_t,) + g.spatial_shape
    return PerspectivePoint(np.zeros(shape), np.zeros((cost.n_channels,) + shape))


def _dual_ravel(y: PerspectivePoint) -> np.ndarray:
    return np.concatenate([y.pi.ravel(), y.m.ravel()])


def _dual_from_flat(vec: np.ndarray, cost: QuadraticCost, g: GridSpec) -> PerspectivePoint:
    shape = (g.n_t,) + g.spatial_shape
    n = int(np.prod(shape))
    return PerspectivePoint(vec[:n].reshape(shape), vec[n:].reshape((cost.n_channels,) + shape))


def K_operator(cost: QuadraticCost, g: GridSpec) -> spla.LinearOperator:
    """``K`` as a scipy operator on flattened primal and dual vectors."""
    n_in = staggered_size(g)
    n_out = (1 + cost.n_channels) * g.n_t * g.n_cells
    return spla.LinearOperator(
        (n_out, n_in),
        matvec=lambda v: _dual_ravel(apply_K(StaggeredField.from_flat(np.ravel(v), g), cost, g)),
        rmatvec=lambda y: apply_K_adjoint(_dual_from_flat(np.ravel(y), cost, g), cost, g).ravel(),
        dtype=float,
    )


def estimate_opnorm(op, trials: int = 1, seed: int = 0, max_iter: int = 200, rtol: float = 1e-10) -> float:
    """Lower bound on ``||op||`` by power iteration on ``op^T op``.

    Each trial starts from a seeded Gaussian vector; the largest square-root
    Rayleigh quotient over all trials and iterations is returned.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    op = spla.aslinearoperator(op)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        x = rng.standard_normal(op.shape[1])
        x /= np.linalg.norm(x)
        rq_old = 0.0
        for _ in range(max_iter):
            y = op.rmatvec(op.matvec(x))
            rq = float(np.dot(x, y))
            best = max(best, rq)
            ny = np.linalg.norm(y)
            if ny == 0:
                break
            x = y / ny
            if abs(rq - rq_old) <= rtol * abs(rq):
                break
            rq_old = rq
    return float(np.sqrt(best))


# Iteration ----------------------------------------------------------------


def initial_guess(c: ConstraintSystem) -> StaggeredField:
    """Linear-in-time blend of the source and the product of the marginals, zero momentum."""
    g = c.grid
    prod = product_measure(c.marginals)
    src = c.source if c.source is not None else prod
    t = g.t_staggered().reshape((-1,) + (1,) * g.k)
    pi_s = (1.0 - t) * src[None] + t * prod[None]
    return StaggeredField(pi_s, np.zeros((g.k, g.n_t) + g.spatial_shape))


def pd_step(state: SolverState, params: SolverParams, c: ConstraintSystem, cost: QuadraticCost) -> SolverState:
    g = c.grid
    Kf = apply_K(state.f, cost, g)
    y = PerspectivePoint(state.g_dual.pi + params.sigma * Kf.pi, state.g_dual.m + params.sigma * Kf.m)
    g_new = prox_conjugate(params.sigma, y.pi, y.m, weight=cost.weight)
    Ktg = apply_K_adjoint(g_new, cost, g)
    h_new = c.project(state.h - params.tau * Ktg)
    delta = h_new - state.h
    f_new = h_new + params.theta * delta
    return SolverState(h_new, f_new, g_new, state.iteration + 1, delta.norm())


def objective(u: StaggeredField, cost: QuadraticCost, g: GridSpec) -> float:
    """Dynamic cost of ``interp(u)``, ignoring cells with nonpositive mass."""
    return dynamic_cost(interp(u, g), cost, g, relaxed=True)


def check_step_rule(params: SolverParams, opnorm: float) -> float:
    product = params.sigma * params.tau * opnorm**2
    if product >= 1.0:
        msg = (
            f"step sizes violate sigma*tau*||K||^2 < 1: sigma*tau = {params.sigma * params.tau:.6g}, "
            f"||K|| ~ {opnorm:.6g}, sigma*tau*||K||^2 = {product:.6g}"
        )
        if params.enforce_step_rule:
            raise ValidationError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        logger.warning(msg)
    return product


def solve(
    c: ConstraintSystem,
    cost: QuadraticCost,
    params: SolverParams,
    init: StaggeredField | None = None,
    callback=None,
):
    """Run ``params.iterations`` primal-dual steps.

    Returns
    -------
    h : StaggeredField
        Final primal iterate (feasible up to the projection tolerance).
    centered : CenteredField
        ``interp(h)``.
    diagnostics : SolverDiagnostics
        One row every ``log_every`` iterations, plus the operator-norm
        estimate and ``sigma * tau * ||K||^2``.
    """
    g = c.grid
    if cost.k != g.k:
        raise ValidationError(f"cost is for k={cost.k}, grid has k={g.k}")
    start = time.perf_counter()
    diag = SolverDiagnostics()
    diag.opnorm = estimate_opnorm(K_operator(cost, g), seed=params.seed)
    diag.step_product = check_step_rule(params, diag.opnorm)
    h0 = c.project(init if init is not None else initial_guess(c))
    state = SolverState(h0, h0, dual_zeros(cost, g))
    blown_up = False
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(params.iterations):
            state = pd_step(state, params, c, cost)
            if not blown_up and not np.isfinite(state.step_norm):
                blown_up = True
                msg = f"iterates stopped being finite at iteration {state.iteration}; the step sizes are likely too large"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                logger.warning(msg)
            if state.iteration % params.log_every == 0:
                rep = c.residual_report(state.h)
                diag.append(
                    iteration=state.iteration,
                    objective=objective(state.h, cost, g),
                    step_norm=state.step_norm,
                    **rep,
                )
            if callback is not None:
                callback(state)
    diag.wall_time = time.perf_counter() - start
    diag.final_state = state
    return state.h, interp(state.h, g), diag


def primal_dual_gap_probe(state: SolverState, c: ConstraintSystem, cost: QuadraticCost, tol: float = 1e-8,
                          radius: float | None = None) -> float:
    """Duality gap of ``(h, g)`` restricted to feasible points near ``h``.

    With ``F*(g) = 0`` (checked to ``tol``) the gap over the feasible points
    within ``radius`` of ``h`` is ``F(K h) - <g, K h> + radius * |P K* g|``,
    where ``P`` projects onto the null space of the constraints; it vanishes
    at a saddle point.  ``radius`` defaults to ``max(1, |h|)``.  ``F(K h)``
    is evaluated like :func:`objective` (cells with nonpositive mass are
    skipped), since iterates are not sign-constrained.  Returns ``+inf``
    when ``g`` violates ``F*(g) = 0``.  Values carry the same ``1/n_t``
    weight as :func:`dynamic_cost`.
    """
    g = c.grid
    y = state.g_dual
    a = y.pi + np.sum(y.m**2, axis=0) / (4 * cost.weight)
    scale = max(1.0, float(np.max(np.abs(y.pi))) if y.pi.size else 1.0)
    if np.any(a > tol * scale):
        return float("inf")
    Kh = apply_K(state.h, cost, g)
    primal = g.n_t * objective(state.h, cost, g)
    if not np.isfinite(primal):
        return float("inf")
    Kty = apply_K_adjoint(y, cost, g)
    null_part = (c.project(Kty) - c.project(StaggeredField.zeros(g))).norm()
    r = max(1.0, state.h.norm()) if radius is None else float(radius)
    dual = float(np.vdot(y.pi, Kh.pi) + np.vdot(y.m, Kh.m))
    return (primal - dual + r * null_part) / g.n_t


__all__ = [
    "DIAGNOSTIC_COLUMNS",
    "SolverDiagnostics",
    "SolverParams",
    "SolverState",
    "K_operator",
    "apply_K",
    "apply_K_adjoint",
    "estimate_opnorm",
    "initial_guess",
    "objective",
    "pd_step",
    "primal_dual_gap_probe",
    "solve",
]
