"""Space-time grids on the periodic unit cube and the fields that live on them.

Masses live on the fully centered spatial grid ``{j / n_x}`` and on the
staggered time grid ``{i / n_t}``.  Momentum component ``l`` lives on the
centered time grid and on the spatial grid shifted by ``e_l / (2 n_x)``, so
index ``j`` along axis ``l`` of ``m_s[l]`` sits at ``j / n_x + 1 / (2 n_x)``.

All arrays keep the ``k`` spatial axes separate (shape ``(n_x,) * k``); the
flat spatial index used in CSV output is the row-major ``np.ravel_multi_index``
of those axes (axis 0 slowest).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class GridError(ValueError):
    """Raised when an array does not conform to its grid."""


class ScalingMode(str, Enum):
    DIVIDED_DIFFERENCES = "divided_differences"
    PAPER_LITERAL = "paper_literal"


@dataclass(frozen=True)
class GridSpec:
    """Discretization of ``[0, 1] x T^k``.

    Parameters
    ----------
    k : int
        Number of marginals (spatial dimension of the product space).
    n_t : int
        Number of temporal cells.
    n_x : int
        Number of spatial cells per axis.
    scaling_mode : ScalingMode or str
        Coefficients of the discrete continuity equation: ``(n_t, n_x)`` for
        divided differences, ``(1/n_t, 1/n_x)`` for the literal variant.
    """

    k: int
    n_t: int
    n_x: int
    scaling_mode: ScalingMode = ScalingMode.DIVIDED_DIFFERENCES

    def __post_init__(self):
        object.__setattr__(self, "scaling_mode", ScalingMode(self.scaling_mode))
        if int(self.k) != self.k or self.k < 2:
            raise GridError(f"k must be an integer >= 2, got {self.k}")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise GridError(f"n_t must be an integer >= 1, got {self.n_t}")
        if int(self.n_x) != self.n_x or self.n_x < 2:
            raise GridError(f"n_x must be an integer >= 2, got {self.n_x}")

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.k

    @property
    def n_cells(self) -> int:
        return self.n_x**self.k

    @property
    def coefficients(self) -> tuple[float, float]:
        """``(c_t, c_x)`` multiplying the time and space differences."""
        if self.scaling_mode is ScalingMode.DIVIDED_DIFFERENCES:
            return float(self.n_t), float(self.n_x)
        return 1.0 / self.n_t, 1.0 / self.n_x

    def t_centered(self) -> np.ndarray:
        return (np.arange(self.n_t) + 0.5) / self.n_t

    def t_staggered(self) -> np.ndarray:
        return np.arange(self.n_t + 1) / self.n_t

    def x_centered(self) -> np.ndarray:
        return np.arange(self.n_x) / self.n_x

    def x_staggered(self) -> np.ndarray:
        return (np.arange(self.n_x) + 0.5) / self.n_x

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n_t": self.n_t,
            "n_x": self.n_x,
            "scaling_mode": self.scaling_mode.value,
        }


@dataclass(frozen=True)
class StaggeredField:
    """Unknowns of the discrete problem.

    ``pi_s`` has shape ``(n_t + 1, n_x, ..., n_x)``; ``m_s`` stacks the ``k``
    momentum components and has shape ``(k, n_t, n_x, ..., n_x)``.
    """

    pi_s: np.ndarray
    m_s: np.ndarray

    @classmethod
    def zeros(cls, g: GridSpec) -> "StaggeredField":
        return cls(
            np.zeros((g.n_t + 1,) + g.spatial_shape),
            np.zeros((g.k, g.n_t) + g.spatial_shape),
        )

    @classmethod
    def from_flat(cls, vec: np.ndarray, g: GridSpec) -> "StaggeredField":
        vec = np.asarray(vec, dtype=float)
        n_pi = (g.n_t + 1) * g.n_cells
        if vec.shape != (staggered_size(g),):
            raise GridError(f"expected flat vector of length {staggered_size(g)}, got {vec.shape}")
        return cls(
            vec[:n_pi].reshape((g.n_t + 1,) + g.spatial_shape),
            vec[n_pi:].reshape((g.k, g.n_t) + g.spatial_shape),
        )

    def ravel(self) -> np.ndarray:
        return np.concatenate([self.pi_s.ravel(), self.m_s.ravel()])

    def __add__(self, other: "StaggeredField") -> "StaggeredField":
        return StaggeredField(self.pi_s + other.pi_s, self.m_s + other.m_s)

    def __sub__(self, other: "StaggeredField") -> "StaggeredField":
        return StaggeredField(self.pi_s - other.pi_s, self.m_s - other.m_s)

    def __mul__(self, a: float) -> "StaggeredField":
        return StaggeredField(a * self.pi_s, a * self.m_s)

    __rmul__ = __mul__

    def dot(self, other: "StaggeredField") -> float:
        return float(np.vdot(self.pi_s, other.pi_s) + np.vdot(self.m_s, other.m_s))

    def norm(self) -> float:
        return float(np.sqrt(self.dot(self)))


@dataclass(frozen=True)
class CenteredField:
    """Mass and momentum colocated on the centered grid.

    ``pi_c`` has shape ``(n_t, n_x, ..., n_x)`` and ``m_c`` has shape
    ``(k, n_t, n_x, ..., n_x)``.
    """

    pi_c: np.ndarray
    m_c: np.ndarray

    @classmethod
    def zeros(cls, g: GridSpec) -> "CenteredField":
        return cls(
            np.zeros((g.n_t,) + g.spatial_shape),
            np.zeros((g.k, g.n_t) + g.spatial_shape),
        )

    def dot(self, other: "CenteredField") -> float:
        return float(np.vdot(self.pi_c, other.pi_c) + np.vdot(self.m_c, other.m_c))


def staggered_size(g: GridSpec) -> int:
    return (g.n_t + 1) * g.n_cells + g.k * g.n_t * g.n_cells


def check_staggered(u: StaggeredField, g: GridSpec) -> None:
    if u.pi_s.shape != (g.n_t + 1,) + g.spatial_shape:
        raise GridError(f"pi_s has shape {u.pi_s.shape}, grid expects {(g.n_t + 1,) + g.spatial_shape}")
    if u.m_s.shape != (g.k, g.n_t) + g.spatial_shape:
        raise GridError(f"m_s has shape {u.m_s.shape}, grid expects {(g.k, g.n_t) + g.spatial_shape}")


def check_centered(u: CenteredField, g: GridSpec) -> None:
    if u.pi_c.shape != (g.n_t,) + g.spatial_shape:
        raise GridError(f"pi_c has shape {u.pi_c.shape}, grid expects {(g.n_t,) + g.spatial_shape}")
    if u.m_c.shape != (g.k, g.n_t) + g.spatial_shape:
        raise GridError(f"m_c has shape {u.m_c.shape}, grid expects {(g.k, g.n_t) + g.spatial_shape}")


# Multi-indices ---------------------------------------------------------------


def flat_index(coords, n_x: int) -> np.ndarray:
    """Row-major linear index of integer coordinates (last axis = coordinate)."""
    coords = np.asarray(coords, dtype=np.int64)
    k = coords.shape[-1]
    if np.any(coords < 0) or np.any(coords >= n_x):
        raise GridError(f"coordinates out of range [0, {n_x})")
    weights = n_x ** np.arange(k - 1, -1, -1, dtype=np.int64)
    return coords @ weights


def multi_index(flat, k: int, n_x: int) -> np.ndarray:
    """Inverse of :func:`flat_index`; returns coordinates on the last axis."""
    flat = np.asarray(flat, dtype=np.int64)
    return np.stack(np.unravel_index(flat, (n_x,) * k), axis=-1)


# Interpolation ---------------------------------------------------------------


def interp(u: StaggeredField, g: GridSpec) -> CenteredField:
    """Average staggered unknowns onto the centered grid.

    Mass is averaged over the two neighbouring time slices; momentum component
    ``l`` is averaged over its two neighbours along axis ``l`` only.
    """
    check_staggered(u, g)
    pi_c = 0.5 * (u.pi_s[1:] + u.pi_s[:-1])
    m_c = np.empty_like(u.m_s)
    for l in range(g.k):
        m_c[l] = 0.5 * (u.m_s[l] + np.roll(u.m_s[l], 1, axis=1 + l))
    return CenteredField(pi_c, m_c)


def interp_adjoint(u: CenteredField, g: GridSpec) -> StaggeredField:
    """Transpose of :func:`interp` for the plain Euclidean inner products."""
    check_centered(u, g)
    pi_s = np.zeros((g.n_t + 1,) + g.spatial_shape)
    pi_s[1:] += 0.5 * u.pi_c
    pi_s[:-1] += 0.5 * u.pi_c
    m_s = np.empty_like(u.m_c)
    for l in range(g.k):
        m_s[l] = 0.5 * (u.m_c[l] + np.roll(u.m_c[l], -1, axis=1 + l))
    return StaggeredField(pi_s, m_s)


# Finite differences ----------------------------------------------------------


def laplacian(f: np.ndarray, n_x: int, axes) -> np.ndarray:
    """Periodic second difference summed over ``axes``, scaled by ``n_x**2``."""
    out = np.zeros_like(f)
    for ax in axes:
        out += np.roll(f, 1, axis=ax) + np.roll(f, -1, axis=ax) - 2.0 * f
    return (n_x**2) * out


def divergence_residual(u: StaggeredField, g: GridSpec, diffusion: float = 0.0) -> np.ndarray:
    """Residual of the discrete continuity equation at every centered cell.

    ``r = c_t * (pi_s(t+) - pi_s(t-)) + c_x * sum_l (m_l(x+) - m_l(x-))
    - diffusion * Lap(time average of pi_s)``; shape ``(n_t,) + spatial``.
    """
    check_staggered(u, g)
    c_t, c_x = g.coefficients
    r = c_t * (u.pi_s[1:] - u.pi_s[:-1])
    for l in range(g.k):
        r = r + c_x * (u.m_s[l] - np.roll(u.m_s[l], 1, axis=1 + l))
    if diffusion:
        pi_bar = 0.5 * (u.pi_s[1:] + u.pi_s[:-1])
        r = r - diffusion * laplacian(pi_bar, g.n_x, range(1, g.k + 1))
    return r


def divergence_adjoint(y: np.ndarray, g: GridSpec, diffusion: float = 0.0) -> StaggeredField:
    """Transpose of :func:`divergence_residual` as a linear map."""
    if y.shape != (g.n_t,) + g.spatial_shape:
        raise GridError(f"residual array has shape {y.shape}")
    c_t, c_x = g.coefficients
    pi_s = np.zeros((g.n_t + 1,) + g.spatial_shape)
    pi_s[1:] += c_t * y
    pi_s[:-1] -= c_t * y
    if diffusion:
        ly = -diffusion * laplacian(y, g.n_x, range(1, g.k + 1))
        pi_s[1:] += 0.5 * ly
        pi_s[:-1] += 0.5 * ly
    m_s = np.empty((g.k,) + y.shape)
    for l in range(g.k):
        m_s[l] = c_x * (y - np.roll(y, -1, axis=1 + l))
    return StaggeredField(pi_s, m_s)


def marginalize(mass: np.ndarray, axis: int) -> np.ndarray:
    """Sum a mass array on the product grid over every axis except ``axis``."""
    mass = np.asarray(mass, dtype=float)
    if not 0 <= axis < mass.ndim:
        raise GridError(f"axis {axis} out of range for {mass.ndim}-dimensional mass")
    others = tuple(a for a in range(mass.ndim) if a != axis)
    return mass.sum(axis=others)
