"""Transport costs, their perspective functions and proximal maps.

The shipped costs are quadratic forms ``L(v) = weight * |R v|^2`` where ``R``
maps the ``k`` velocity components to "channels":

* ``quadratic_pairwise``: ``R = S``, the ``k(k-1)/2`` differences
  ``v_i - v_j`` for ``i < j``, ``weight = 1``;
* ``quadratic_full``: ``R = Id``, ``weight = 1/2``.

A semi-convex shift ``alpha`` appends ``sqrt(alpha / (2 weight)) * Id`` to the
channels, so the shifted cost is again of the same form and keeps its prox.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np

from .grid import CenteredField, GridSpec, check_centered
from .measures import CouplingTable, ValidationError


class CostKind(str, Enum):
    QUADRATIC_PAIRWISE = "quadratic_pairwise"
    QUADRATIC_FULL = "quadratic_full"


def pair_list(k: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(k) for j in range(i + 1, k)]


def pairwise_matrix(k: int) -> np.ndarray:
    """Matrix of ``S``: row ``(i, j)`` has ``+1`` at ``i`` and ``-1`` at ``j``."""
    pairs = pair_list(k)
    S = np.zeros((len(pairs), k))
    for row, (i, j) in enumerate(pairs):
        S[row, i] = 1.0
        S[row, j] = -1.0
    return S


def pairwise_diff(m: np.ndarray) -> np.ndarray:
    """Channels ``m_i - m_j`` (``i < j``) of a field with components on axis 0."""
    m = np.asarray(m, dtype=float)
    k = m.shape[0]
    return np.stack([m[i] - m[j] for i, j in pair_list(k)]) if k > 1 else np.zeros((0,) + m.shape[1:])


def pairwise_diff_adjoint(s: np.ndarray, k: int) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros((k,) + s.shape[1:])
    for row, (i, j) in enumerate(pair_list(k)):
        out[i] += s[row]
        out[j] -= s[row]
    return out


@dataclass(frozen=True)
class QuadraticCost:
    """``L(v) = weight * |R v|^2 + alpha/2 * |v|^2`` for one of the shipped kinds."""

    kind: CostKind
    k: int
    alpha: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", CostKind(self.kind))
        if self.k < 1:
            raise ValidationError("cost needs k >= 1")
        if self.alpha < 0:
            raise ValidationError(f"alpha must be nonnegative, got {self.alpha}")
        if self.scale <= 0:
            raise ValidationError(f"scale must be positive, got {self.scale}")

    @property
    def weight(self) -> float:
        base = 1.0 if self.kind is CostKind.QUADRATIC_PAIRWISE else 0.5
        return base * self.scale

    @property
    def channel_matrix(self) -> np.ndarray:
        if self.kind is CostKind.QUADRATIC_PAIRWISE:
            R = pairwise_matrix(self.k)
        else:
            R = np.eye(self.k)
        if self.alpha > 0:
            R = np.vstack([R, np.sqrt(self.alpha / (2.0 * self.weight)) * np.eye(self.k)])
        return R

    @property
    def n_channels(self) -> int:
        return self.channel_matrix.shape[0]

    def gram(self) -> np.ndarray:
        """Symmetric ``M`` with ``L(v) = v^T M v``."""
        R = self.channel_matrix
        return self.weight * R.T @ R

    def channels(self, m: np.ndarray) -> np.ndarray:
        """Apply ``R`` along the component axis (axis 0)."""
        if self.kind is CostKind.QUADRATIC_PAIRWISE and self.alpha == 0:
            return pairwise_diff(m)
        return np.tensordot(self.channel_matrix, m, axes=1)

    def channels_adjoint(self, s: np.ndarray) -> np.ndarray:
        if self.kind is CostKind.QUADRATIC_PAIRWISE and self.alpha == 0:
            return pairwise_diff_adjoint(s, self.k)
        return np.tensordot(self.channel_matrix.T, s, axes=1)

    def __call__(self, v) -> np.ndarray:
        """Evaluate ``L`` on velocities stored on the last axis."""
        v = np.asarray(v, dtype=float)
        Rv = v @ self.channel_matrix.T
        return self.weight * np.sum(Rv**2, axis=-1)

    def to_dict(self) -> dict:
        return {"type": self.kind.value, "alpha": self.alpha, "scale": self.scale}


@dataclass(frozen=True)
class FunctionCost:
    """Evaluation-only cost wrapping a callable on velocities (last axis)."""

    func: Callable[[np.ndarray], np.ndarray]
    k: int
    alpha: float = 0.0

    def __call__(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        out = np.asarray(self.func(v), dtype=float)
        if self.alpha:
            out = out + 0.5 * self.alpha * np.sum(v**2, axis=-1)
        return out


def static_cost(gamma: CouplingTable, cost, n_x: int) -> float:
    """Integral of the cost against a coupling, coordinates in ``[0, 1)``.

    Summed with :func:`math.fsum`, so the value does not depend on atom order
    or memory layout.
    """
    if np.any(gamma.mass < 0):
        raise ValidationError("coupling has negative atom mass")
    if len(gamma) == 0:
        return 0.0
    return math.fsum(gamma.mass * cost(gamma.coordinates(n_x)))


# Perspective function -------------------------------------------------------


class PerspectivePoint(NamedTuple):
    """Mass ``pi`` and channel vector ``m`` (channels on axis 0)."""

    pi: np.ndarray
    m: np.ndarray


def perspective(pi, m, weight: float = 1.0) -> np.ndarray:
    """Lower-semicontinuous ``weight * |m|^2 / pi`` applied pointwise.

    ``m`` carries the channel axis first.  Zero at ``(0, 0)``; ``+inf`` when
    ``pi < 0`` or ``pi == 0`` with ``m != 0``.
    """
    pi = np.asarray(pi, dtype=float)
    m2 = np.sum(np.asarray(m, dtype=float) ** 2, axis=0)
    out = np.full(np.broadcast(pi, m2).shape, np.inf)
    pos = pi > 0
    out[pos] = weight * (m2 * np.ones_like(pi))[pos] / (pi * np.ones_like(m2))[pos]
    out[(pi == 0) & (m2 == 0)] = 0.0
    return out


def _largest_root(p: np.ndarray, q2: np.ndarray, gamma: float, max_iter: int = 100) -> np.ndarray:
    """Largest root of ``(x - p)(x + 2 gamma)^2 = gamma q2`` if positive, else 0.

    ``f`` is increasing and convex on ``[max(p, 0), inf)``; Newton started at an
    upper bound decreases monotonically onto the root.
    """
    lo = np.maximum(p, 0.0)
    f_lo = (lo - p) * (lo + 2 * gamma) ** 2 - gamma * q2
    x = lo + gamma * q2 / (lo + 2 * gamma) ** 2
    active = f_lo < 0
    # f(lo) == 0 means lo itself is the root (p > 0 with zero momentum)
    x = np.where(active, x, np.where(f_lo == 0, lo, 0.0))
    it = 0
    while np.any(active) and it < max_iter:
        xa, pa, qa = x[active], p[active], q2[active]
        f = (xa - pa) * (xa + 2 * gamma) ** 2 - gamma * qa
        fp = (xa + 2 * gamma) * (3 * xa + 2 * gamma - 2 * pa)
        step = f / fp
        x_new = np.maximum(xa - step, lo[active])
        x[active] = x_new
        done = (step <= 1e-15 * np.maximum(x_new, 1e-300)) | (f <= 0)
        idx = np.flatnonzero(active)
        active[idx[done]] = False
        it += 1
    if np.any(active):
        # bisection on whatever Newton left unfinished
        idx = np.flatnonzero(active)
        a, b = lo[idx].copy(), x[idx].copy()
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = (mid - p[idx]) * (mid + 2 * gamma) ** 2 - gamma * q2[idx]
            b = np.where(fm >= 0, mid, b)
            a = np.where(fm >= 0, a, mid)
        x[idx] = b
    return x


def prox_perspective(gamma: float, pi, m=None) -> PerspectivePoint:
    """Proximal map of ``gamma * |m|^2 / pi`` (perspective, pointwise).

    Minimizes ``1/2 (a - pi)^2 + 1/2 |b - m|^2 + gamma |b|^2 / a`` over
    ``a >= 0``.  ``m`` has the channel axis first; a :class:`PerspectivePoint`
    may be passed as the second argument instead.
    """
    if m is None:
        pi, m = pi
    if not gamma > 0:
        raise ValidationError(f"prox step must be positive, got {gamma}")
    pi = np.asarray(pi, dtype=float)
    m = np.asarray(m, dtype=float)
    shape = pi.shape
    p = np.ravel(pi).copy()
    q2 = np.ravel(np.sum(m**2, axis=0)) if m.shape[0] else np.zeros_like(p)
    x = _largest_root(p, q2, gamma).reshape(shape)
    pos = x > 0
    factor = np.where(pos, x / np.where(pos, x + 2 * gamma, 1.0), 0.0)
    return PerspectivePoint(np.where(pos, x, 0.0), m * factor)


def prox_conjugate(sigma: float, pi, m=None, weight: float = 1.0) -> PerspectivePoint:
    """Prox of ``sigma * F^*`` for ``F = weight * |m|^2 / pi`` via Moreau's identity.

    Because ``F`` is positively 1-homogeneous, the result is the projection
    onto ``{(a, b): a + |b|^2 / (4 weight) <= 0}``, whatever ``sigma`` is.
    """
    if m is None:
        pi, m = pi
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    pi = np.asarray(pi, dtype=float)
    m = np.asarray(m, dtype=float)
    inner = prox_perspective(weight / sigma, pi / sigma, m / sigma)
    return PerspectivePoint(pi - sigma * inner.pi, m - sigma * inner.m)


def dynamic_cost(u: CenteredField, cost: QuadraticCost, g: GridSpec, relaxed: bool = False) -> float:
    """Kinetic cost of a centered field, each time slice weighted by ``1/n_t``.

    Fields hold cell masses, so ``sum_x L(m/pi) pi`` already integrates over
    space.  With ``relaxed=True`` cells with ``pi <= 0`` are skipped instead of
    producing ``+inf``; iterates of the solver are not sign-constrained.
    """
    check_centered(u, g)
    s = cost.channels(u.m_c)
    if relaxed:
        pos = u.pi_c > 0
        s2 = np.sum(s**2, axis=0)
        total = cost.weight * np.sum(s2[pos] / u.pi_c[pos])
    else:
        total = float(np.sum(perspective(u.pi_c, s, cost.weight)))
    return float(total) / g.n_t


def semiconvex_shift(cost, alpha: float, marginals, n_x: int | None = None):
    """Shift ``L -> L + alpha/2 |x|^2`` and return ``(shifted, correction)``.

    ``correction = alpha/2 * sum_l sum_x |x|^2 mu_l(x)`` with grid coordinates
    ``x = j / n_x``; static values of the original cost equal shifted optima
    minus this correction.
    """
    if alpha < 0:
        raise ValidationError(f"alpha must be nonnegative, got {alpha}")
    correction = 0.0
    for mu in marginals:
        mu = np.asarray(mu, dtype=float)
        n = n_x or mu.shape[0]
        x = np.arange(mu.shape[0]) / n
        correction += float(np.dot(x**2, mu))
    correction *= 0.5 * alpha
    if alpha == 0:
        return cost, 0.0
    if isinstance(cost, QuadraticCost):
        shifted = QuadraticCost(cost.kind, cost.k, cost.alpha + alpha, cost.scale)
    elif isinstance(cost, FunctionCost):
        shifted = FunctionCost(cost.func, cost.k, cost.alpha + alpha)
    else:
        shifted = FunctionCost(cost, len(marginals), alpha)
    return shifted, correction
