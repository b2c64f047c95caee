"""Dual potentials: Hamilton-Jacobi feasibility, domination, dual value, Hopf-Lax lift.

A dual candidate is a space-time potential ``lambda(t, x)`` on the staggered
time grid times the product grid, plus one potential ``lambda_l`` per marginal.
It is feasible when

* ``d_t lambda + L*(grad lambda) <= 0`` on every centered cell, and
* ``sum_l lambda_l(x_l) <= lambda(1, x)`` wherever the product of the
  marginals has mass,

and then ``sum_l <lambda_l, mu_l> - <lambda(0), p>`` bounds the transport
cost from below.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import ndimage
from scipy.optimize import linprog

from .cost import QuadraticCost
from .grid import GridSpec
from .measures import ValidationError, product_measure


@dataclass(frozen=True)
class DualPotentials:
    lambda_t: np.ndarray  # (n_t + 1,) + spatial shape
    lambda_l: tuple

    def __post_init__(self):
        lt = np.asarray(self.lambda_t, dtype=float)
        ll = tuple(np.asarray(v, dtype=float) for v in self.lambda_l)
        if lt.ndim != len(ll) + 1:
            raise ValidationError(f"lambda_t has {lt.ndim - 1} space axes but {len(ll)} marginal potentials given")
        for l, v in enumerate(ll):
            if v.shape != (lt.shape[l + 1],):
                raise ValidationError(f"lambda_{l} has shape {v.shape}, expected ({lt.shape[l + 1]},)")
        if not (np.all(np.isfinite(lt)) and all(np.all(np.isfinite(v)) for v in ll)):
            raise ValidationError("potentials must be finite")
        object.__setattr__(self, "lambda_t", lt)
        object.__setattr__(self, "lambda_l", ll)

    @property
    def k(self) -> int:
        return len(self.lambda_l)

    @classmethod
    def zeros(cls, g: GridSpec) -> "DualPotentials":
        return cls(np.zeros((g.n_t + 1,) + g.spatial_shape), tuple(np.zeros(g.n_x) for _ in range(g.k)))

    def check_grid(self, g: GridSpec) -> None:
        want = (g.n_t + 1,) + g.spatial_shape
        if self.lambda_t.shape != want:
            raise ValidationError(f"lambda_t has shape {self.lambda_t.shape}, grid expects {want}")


def legendre(cost: QuadraticCost, y, tol: float = 1e-9) -> np.ndarray:
    """Conjugate ``L*(y) = sup_v <v, y> - L(v)`` of a quadratic cost.

    With ``L(v) = v^T M v`` this is ``y^T M^+ y / 4`` on the range of ``M`` and
    ``+inf`` off it; ``y`` may carry leading batch axes (velocities last).
    Components of ``y`` outside the range larger than ``tol * (1 + |y|)``
    count as off-range.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != cost.k:
        raise ValidationError(f"expected {cost.k} components on the last axis, got {y.shape[-1]}")
    M = cost.gram()
    Mp = np.linalg.pinv(M)
    val = 0.25 * np.einsum("...i,ij,...j->...", y, Mp, y)
    off = y - y @ (M @ Mp).T
    bad = np.linalg.norm(off, axis=-1) > tol * (1.0 + np.linalg.norm(y, axis=-1))
    return np.where(bad, np.inf, val)


def _centered_gradient(lam: np.ndarray, n_x: int) -> np.ndarray:
    """Periodic centered differences, components on the last axis."""
    k = lam.ndim - 1
    comps = [0.5 * n_x * (np.roll(lam, -1, axis=l + 1) - np.roll(lam, 1, axis=l + 1)) for l in range(k)]
    return np.stack(comps, axis=-1)


def hj_field(p: DualPotentials, cost: QuadraticCost, g: GridSpec) -> np.ndarray:
    """``d_t lambda + L*(grad lambda)`` on the centered grid.

    Time derivatives are forward differences between staggered slices; the
    gradient is the centered periodic difference of the two-slice average.
    """
    p.check_grid(g)
    lam = p.lambda_t
    dt = g.n_t * (lam[1:] - lam[:-1])
    grad = _centered_gradient(0.5 * (lam[1:] + lam[:-1]), g.n_x)
    return dt + legendre(cost, grad)


def hj_residual(p: DualPotentials, cost: QuadraticCost, g: GridSpec) -> float:
    """Largest value of the discrete Hamilton-Jacobi expression; feasible when ``<= 0``."""
    return float(np.max(hj_field(p, cost, g)))


def _sum_potentials(lambda_l) -> np.ndarray:
    k = len(lambda_l)
    out = np.zeros(tuple(len(v) for v in lambda_l))
    for l, v in enumerate(lambda_l):
        shape = [1] * k
        shape[l] = -1
        out = out + np.reshape(v, shape)
    return out


def domination_check(p: DualPotentials, marginals) -> float:
    """``max [sum_l lambda_l(x_l) - lambda(1, x)]`` over the support of the product marginal."""
    support = product_measure(marginals) > 0
    gap = _sum_potentials(p.lambda_l) - p.lambda_t[-1]
    return float(np.max(gap[support])) if np.any(support) else -np.inf


def dual_objective(p: DualPotentials, marginals, source) -> float:
    val = sum(float(np.dot(v, mu)) for v, mu in zip(p.lambda_l, marginals))
    return val - float(np.sum(p.lambda_t[0] * np.asarray(source, dtype=float)))


def _torus_cost_table(cost, n_x: int, k: int, t: float = 1.0) -> np.ndarray:
    """``t L(z / t)`` minimized over periodic images, for index offsets ``z`` in ``[0, n_x)^k``."""
    off = np.stack(np.meshgrid(*[np.arange(n_x)] * k, indexing="ij"), axis=-1) / n_x
    best = np.full(off.shape[:-1], np.inf)
    for shift in product((-1, 0), repeat=k):
        z = off + np.asarray(shift, dtype=float)
        best = np.minimum(best, t * cost(z / t))
    return best


def _offset_index(n_x: int, k: int) -> np.ndarray:
    """Flat index of ``(y - x) mod n_x`` for every (y, x) pair of product-grid points."""
    idx = np.indices((n_x,) * k).reshape(k, -1).T
    diff = (idx[:, None, :] - idx[None, :, :]) % n_x
    return np.ravel_multi_index(tuple(np.moveaxis(diff, -1, 0)), (n_x,) * k)


def _refined_values(lam0: np.ndarray, r: int) -> np.ndarray:
    """Periodic cubic-spline values of ``lam0`` on the grid refined ``r`` times per axis."""
    if r == 1:
        return lam0
    n, k = lam0.shape[0], lam0.ndim
    coords = np.meshgrid(*[np.arange(n * r) / r] * k, indexing="ij")
    return ndimage.map_coordinates(lam0, coords, order=3, mode="grid-wrap")


def auto_refinement(t: float) -> int:
    """Sub-grid factor ``ceil(1 / sqrt(t))`` keeping the lift's search error ``O(h^2)``."""
    return max(1, int(np.ceil(1.0 / np.sqrt(t) - 1e-12)))


def hopf_lax_lift(lambda0, cost, t: float, n_x: int | None = None, refine=1, chunk: int = 64) -> np.ndarray:
    """``lambda(t, y) = min_x [lambda0(x) + t L((y - x) / t)]`` over the product grid.

    Displacements ``y - x`` are taken as the shortest periodic representative
    (the minimum over images of the cost), consistent with the periodic
    gradients used in :func:`hj_residual`.

    ``refine`` (an integer or ``"auto"``) searches ``x`` on a lattice ``refine``
    times finer than the grid, with ``lambda0`` interpolated by periodic cubic
    splines.  With ``refine=1`` the search is exhaustive over grid points, so a
    lifted c-transform dominates the potentials it came from exactly; but
    for small ``t`` a move of one cell costs ``O(h^2 / t)``, which makes the
    discrete time derivative of the lift ``O(1)`` wrong.  ``"auto"`` uses
    :func:`auto_refinement`, which is 1 at ``t = 1``.  Intended for
    ``(refine n_x)^k`` up to a few ``10^4``.
    """
    if not t > 0:
        raise ValidationError(f"lift time must be positive, got {t}")
    lam0 = np.asarray(lambda0, dtype=float)
    k = lam0.ndim
    n = n_x or lam0.shape[0]
    r = auto_refinement(t) if refine == "auto" else int(refine)
    if r < 1:
        raise ValidationError(f"refinement must be a positive integer or 'auto', got {refine!r}")
    N = n * r
    fine = _refined_values(lam0, r).ravel()
    table = _torus_cost_table(cost, N, k, t).ravel()
    # coarse targets sit at multiples of r on the fine lattice
    y = np.indices((n,) * k).reshape(k, -1).T * r
    x = np.indices((N,) * k).reshape(k, -1).T
    out = np.empty(len(y))
    for s in range(0, len(y), chunk):
        diff = (y[s:s + chunk, None, :] - x[None, :, :]) % N
        off = np.ravel_multi_index(tuple(np.moveaxis(diff, -1, 0)), (N,) * k)
        out[s:s + chunk] = np.min(fine[None, :] + table[off], axis=1)
    return out.reshape(lam0.shape)


def ctransform_initial(lambda_l, cost) -> np.ndarray:
    """``lambda0(x) = max_y [sum_l lambda_l(y_l) - L(y - x)]`` with periodic displacements.

    Lifting this potential with :func:`hopf_lax_lift` to ``t = 1`` dominates
    ``sum_l lambda_l`` pointwise.
    """
    total = _sum_potentials(lambda_l)
    k, n = total.ndim, total.shape[0]
    table = _torus_cost_table(cost, n, k).ravel()
    pairs = table[_offset_index(n, k)]  # [y, x]
    return np.max(total.ravel()[:, None] - pairs, axis=0).reshape(total.shape)


def lifted_potentials(lambda_l, cost, g: GridSpec, refine=1) -> DualPotentials:
    """Space-time potentials built from static duals by the Hopf-Lax lift.

    The last slice is always an exact grid minimum, so domination of
    ``sum_l lambda_l`` holds exactly whatever ``refine`` is.
    """
    lam0 = ctransform_initial(lambda_l, cost)
    slices = [lam0]
    for t in g.t_staggered()[1:]:
        r = 1 if t >= 1.0 else refine
        slices.append(hopf_lax_lift(lam0, cost, t, g.n_x, refine=r))
    return DualPotentials(np.stack(slices), tuple(lambda_l))


def static_duals(marginals, cost, periodic: bool = True):
    """Optimal potentials of the discrete static problem by linear programming.

    Maximizes ``sum_l <lambda_l, mu_l>`` subject to
    ``sum_l lambda_l(x_l) <= c(x)`` on the product grid (HiGHS).  With
    ``periodic=True`` the cost of a point is the minimum over periodic images
    of the coordinate differences, matching :func:`hopf_lax_lift`.

    Returns
    -------
    lambda_l : list of arrays
    value : float
    """
    marginals = [np.asarray(mu, dtype=float) for mu in marginals]
    k, n = len(marginals), len(marginals[0])
    idx = np.indices((n,) * k).reshape(k, -1).T
    if periodic:
        c = _torus_cost_table(cost, n, k).ravel()
    else:
        c = cost(idx / n)
    rows = np.arange(len(idx))
    A = np.zeros((len(idx), k * n))
    for l in range(k):
        A[rows, l * n + idx[:, l]] = 1.0
    res = linprog(-np.concatenate(marginals), A_ub=A, b_ub=c, bounds=[(None, None)] * (k * n), method="highs")
    if res.status != 0:
        raise ValidationError(f"static dual LP failed: {res.message}")
    lam = [res.x[l * n:(l + 1) * n].copy() for l in range(k)]
    return lam, float(-res.fun)


def save_potentials(path, p: DualPotentials) -> None:
    """CSV rows ``block, index, flat, value``; block ``t`` for ``lambda(t, x)``, ``l`` for ``lambda_l``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "index", "flat", "value"])
        flat = p.lambda_t.reshape(p.lambda_t.shape[0], -1)
        for i, row in enumerate(flat):
            for j, v in enumerate(row):
                w.writerow(["t", i, j, f"{v:.17g}"])
        for l, v in enumerate(p.lambda_l):
            for j, x in enumerate(v):
                w.writerow(["l", l, j, f"{x:.17g}"])


def load_potentials(path, g: GridSpec) -> DualPotentials:
    lt = np.zeros((g.n_t + 1, g.n_cells))
    ll = [np.zeros(g.n_x) for _ in range(g.k)]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["block", "index", "flat", "value"]:
            raise ValidationError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            i, j, v = int(row["index"]), int(row["flat"]), float(row["value"])
            if row["block"] == "t":
                lt[i, j] = v
            elif row["block"] == "l":
                ll[i][j] = v
            else:
                raise ValidationError(f"{path}: unknown block {row['block']!r}")
    return DualPotentials(lt.reshape((g.n_t + 1,) + g.spatial_shape), tuple(ll))


__all__ = [
    "DualPotentials",
    "auto_refinement",
    "ctransform_initial",
    "domination_check",
    "dual_objective",
    "hj_field",
    "hj_residual",
    "hopf_lax_lift",
    "legendre",
    "lifted_potentials",
    "load_potentials",
    "save_potentials",
    "static_duals",
]
