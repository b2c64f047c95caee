"""Closed-form one-dimensional references.

Grid point ``j / n_x`` stands for the cell ``[j / n_x, (j + 1) / n_x)``; the
mass of a cell is spread uniformly over it, so CDFs are piecewise linear with
breakpoints at the cell edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost import CostKind, QuadraticCost, static_cost
from .measures import CouplingTable, ValidationError, check_probability

PRESETS = ("paper_mu1", "paper_mu2", "paper_mu3", "uniform")


def _density(name: str, x: np.ndarray, delta: float) -> np.ndarray:
    if name == "paper_mu1":
        return (0.5 * np.pi * np.sin(np.pi * x) + delta) / (1.0 + delta)
    if name == "paper_mu2":
        return np.where(x < 0.5, 4.0 * x, 4.0 * (1.0 - x))
    if name == "paper_mu3":
        return np.select(
            [x < 0.25, x < 0.5, x < 0.75],
            [8.0 * x, 4.0 - 8.0 * x, 8.0 * x - 4.0],
            8.0 - 8.0 * x,
        )
    if name == "uniform":
        return np.ones_like(x)
    raise ValidationError(f"unknown preset marginal {name!r}; expected one of {PRESETS}")


def preset_density(name: str, x, delta: float = 0.2) -> np.ndarray:
    """Density of a preset at points of ``[0, 1]``."""
    return _density(name, np.asarray(x, dtype=float), delta)


def preset_marginal(name: str, n_x: int, delta: float = 0.2) -> np.ndarray:
    """Density sampled at ``j / n_x`` times the cell width, renormalized to sum 1."""
    if delta < 0:
        raise ValidationError(f"delta must be nonnegative, got {delta}")
    x = np.arange(n_x) / n_x
    mass = _density(name, x, delta) / n_x
    return mass / mass.sum()


@dataclass(frozen=True)
class Cdf1D:
    breakpoints: np.ndarray
    values: np.ndarray

    def __call__(self, x):
        return np.interp(x, self.breakpoints, self.values)


def cdf(mu) -> Cdf1D:
    mu = check_probability(mu, "marginal", atol=1e-12)
    n = len(mu)
    values = np.concatenate([[0.0], np.cumsum(mu)])
    values[-1] = 1.0
    return Cdf1D(np.arange(n + 1) / n, np.maximum.accumulate(values))


def quantile(c: Cdf1D, q):
    """Left-continuous generalized inverse ``inf {x : F(x) >= q}``."""
    q_arr = np.asarray(q, dtype=float)
    if np.any(q_arr < 0) or np.any(q_arr > 1):
        raise ValidationError("quantile level outside [0, 1]")
    j = np.searchsorted(c.values, q_arr, side="left")
    j = np.clip(j, 1, len(c.values) - 1)
    v0, v1 = c.values[j - 1], c.values[j]
    x0, x1 = c.breakpoints[j - 1], c.breakpoints[j]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(v1 > v0, (q_arr - v0) / (v1 - v0), 0.0)
    out = x0 + np.clip(frac, 0.0, 1.0) * (x1 - x0)
    out = np.where(q_arr <= c.values[0], c.breakpoints[0], out)
    return out if np.ndim(q) else float(out)


def analytic_map(mu1, mul) -> np.ndarray:
    """Monotone map ``F_l^{-1} o F_1`` evaluated at the grid points."""
    c1, cl = cdf(mu1), cdf(mul)
    x = np.arange(len(mu1)) / len(mu1)
    return quantile(cl, np.clip(c1(x), 0.0, 1.0))


def comonotone_coupling(marginals) -> CouplingTable:
    """Quantile coupling ``Law(F_1^{-1}(U), ..., F_k^{-1}(U))`` on the grid.

    The merged CDF values split ``[0, 1]`` into segments on which every
    quantile function stays inside one cell; each segment becomes an atom.
    """
    cdfs = [cdf(mu) for mu in marginals]
    levels = np.unique(np.concatenate([c.values for c in cdfs]))
    lo, hi = levels[:-1], levels[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    mid = 0.5 * (lo + hi)
    idx = np.stack(
        [np.clip(np.searchsorted(c.values, mid, side="right") - 1, 0, len(c.values) - 2) for c in cdfs],
        axis=1,
    )
    # merge consecutive segments landing in the same cells
    if len(idx) > 1:
        new = np.concatenate([[True], np.any(idx[1:] != idx[:-1], axis=1)])
        groups = np.cumsum(new) - 1
        mass = np.bincount(groups, weights=hi - lo)
        idx = idx[new]
    else:
        mass = hi - lo
    return CouplingTable(idx, mass)


def static_optimum(marginals, cost=None) -> float:
    """Static pairwise-quadratic cost of the comonotone coupling (1D optimum)."""
    k = len(marginals)
    cost = cost or QuadraticCost(CostKind.QUADRATIC_PAIRWISE, k)
    if not isinstance(cost, QuadraticCost) or cost.kind is not CostKind.QUADRATIC_PAIRWISE:
        raise ValidationError("static_optimum supports the pairwise quadratic cost only")
    return static_cost(comonotone_coupling(marginals), cost, len(marginals[0]))
