"""Discrete probability measures and sparse couplings on the periodic grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import GridError, flat_index, multi_index


class ValidationError(ValueError):
    """Raised for malformed measures, couplings or parameters."""


def normalize(mass, name: str = "measure") -> np.ndarray:
    """Return ``mass / mass.sum()`` after checking it is a nonnegative finite array."""
    mass = np.asarray(mass, dtype=float)
    if not np.all(np.isfinite(mass)):
        raise ValidationError(f"{name} has non-finite entries")
    if np.any(mass < 0):
        raise ValidationError(f"{name} has negative entries")
    total = mass.sum()
    if total <= 0:
        raise ValidationError(f"{name} has zero total mass")
    return mass / total


def check_probability(mass, name: str = "measure", atol: float = 1e-12) -> np.ndarray:
    mass = np.asarray(mass, dtype=float)
    if np.any(mass < 0):
        raise ValidationError(f"{name} has negative entries")
    if abs(mass.sum() - 1.0) > atol:
        raise ValidationError(f"{name} sums to {mass.sum():.17g}, expected 1")
    return mass


def product_measure(marginals) -> np.ndarray:
    """Tensor product ``mu_1 x ... x mu_k`` as a ``k``-dimensional array."""
    out = np.asarray(marginals[0], dtype=float)
    for mu in marginals[1:]:
        out = np.multiply.outer(out, np.asarray(mu, dtype=float))
    return out


@dataclass(frozen=True)
class CouplingTable:
    """Sparse list of atoms of a measure on the ``k``-fold product grid.

    ``indices`` holds integer grid coordinates (one row per atom) and ``mass``
    the corresponding weights.
    """

    indices: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        mass = np.asarray(self.mass, dtype=float)
        if idx.ndim != 2:
            idx = idx.reshape(len(mass), -1)
        if len(idx) != len(mass):
            raise ValidationError("indices and mass must have the same length")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "mass", mass)

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def __len__(self) -> int:
        return len(self.mass)

    @classmethod
    def empty(cls, k: int) -> "CouplingTable":
        return cls(np.zeros((0, k), dtype=np.int64), np.zeros(0))

    @classmethod
    def from_dense(cls, arr: np.ndarray, threshold: float = 0.0) -> "CouplingTable":
        """Atoms of every entry with ``|mass| > threshold``, in row-major order."""
        arr = np.asarray(arr, dtype=float)
        flat = np.flatnonzero(np.abs(arr.ravel()) > threshold)
        n_x = arr.shape[0]
        return cls(multi_index(flat, arr.ndim, n_x), arr.ravel()[flat])

    def to_dense(self, n_x: int) -> np.ndarray:
        out = np.zeros((n_x,) * self.k)
        if len(self):
            try:
                flat = flat_index(self.indices, n_x)
            except GridError as exc:
                raise ValidationError(str(exc)) from exc
            np.add.at(out.reshape(-1), flat, self.mass)
        return out

    def coordinates(self, n_x: int) -> np.ndarray:
        return self.indices / n_x

    def marginal(self, axis: int, n_x: int) -> np.ndarray:
        out = np.zeros(n_x)
        np.add.at(out, self.indices[:, axis], self.mass)
        return out
