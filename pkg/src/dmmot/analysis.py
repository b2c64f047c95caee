"""Post-processing: terminal couplings, pair marginals and circular-mean map estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import StaggeredField
from .measures import ValidationError


class DegenerateOutputError(ValueError):
    """Raised when solver output carries no usable mass."""


@dataclass(frozen=True)
class TerminalCoupling:
    mass: np.ndarray
    clipped_mass: float


def terminal_coupling(u) -> TerminalCoupling:
    """Last mass slice with negative entries clipped and the rest renormalized.

    ``u`` is a :class:`StaggeredField` or the slice itself.  ``clipped_mass``
    is the total of the removed negative entries (as a positive number).
    """
    last = np.asarray(u.pi_s[-1] if isinstance(u, StaggeredField) else u, dtype=float)
    if not np.all(np.isfinite(last)):
        raise DegenerateOutputError("terminal slice contains non-finite values")
    clipped = float(-np.sum(last[last < 0]))
    kept = np.where(last > 0, last, 0.0)
    total = kept.sum()
    if total <= 0:
        raise DegenerateOutputError(f"terminal slice has no positive mass (sum {last.sum():.3g})")
    return TerminalCoupling(kept / total, clipped)


def pair_marginal(coupling, i: int, j: int) -> np.ndarray:
    """Joint law of axes ``i`` and ``j`` (in that order)."""
    coupling = np.asarray(coupling, dtype=float)
    k = coupling.ndim
    if i == j or not (0 <= i < k and 0 <= j < k):
        raise ValidationError(f"need two distinct axes in [0, {k}), got {i}, {j}")
    rest = tuple(a for a in range(k) if a not in (i, j))
    out = coupling.sum(axis=rest) if rest else coupling
    return out if i < j else out.T


@dataclass(frozen=True)
class MapEstimate:
    values: np.ndarray  # images in [0, 1); NaN where invalid
    valid: np.ndarray

    @property
    def n_x(self) -> int:
        return len(self.values)


def circular_mean(positions, weights) -> tuple[float, float]:
    """Circular mean of points of ``[0, 1)`` and the length of the weighted resultant."""
    z = np.sum(np.asarray(weights) * np.exp(2j * np.pi * np.asarray(positions)))
    ang = np.angle(z) / (2 * np.pi)
    return float(ang % 1.0), float(abs(z))


def circular_map_extract(pair, mu1=None, condition_on: str = "row_marginal", threshold: float | None = None,
                         resultant_tol: float = 1e-12) -> MapEstimate:
    """Circular conditional mean of the second coordinate given the first.

    ``T(x_1) = arg(sum_{x_2} exp(2 pi i x_2) pair(x_1, x_2) / w(x_1)) / (2 pi)``
    wrapped into ``[0, 1)``, where ``w`` is the row sum of ``pair``
    (``condition_on="row_marginal"``) or ``mu1`` (``"target_mu1"``).
    Rows with ``w <= threshold`` (default ``1e-3 / n_x``) or a resultant of
    length ``<= resultant_tol`` are flagged invalid.
    """
    pair = np.asarray(pair, dtype=float)
    n1, n2 = pair.shape
    if condition_on == "row_marginal":
        w = pair.sum(axis=1)
    elif condition_on == "target_mu1":
        if mu1 is None:
            raise ValidationError("condition_on='target_mu1' needs mu1")
        w = np.asarray(mu1, dtype=float)
        if w.shape != (n1,):
            raise ValidationError(f"mu1 has shape {w.shape}, expected ({n1},)")
    else:
        raise ValidationError(f"condition_on must be 'row_marginal' or 'target_mu1', got {condition_on!r}")
    if threshold is None:
        threshold = 1e-3 / n1
    phase = np.exp(2j * np.pi * np.arange(n2) / n2)
    ok = w > threshold
    z = np.zeros(n1, dtype=complex)
    z[ok] = pair[ok] @ phase / w[ok]
    ok &= np.abs(z) > resultant_tol
    vals = np.where(ok, (np.angle(z) / (2 * np.pi)) % 1.0, np.nan)
    vals = np.where(vals >= 1.0, 0.0, vals)
    return MapEstimate(vals, ok)


def circular_distance(a, b) -> np.ndarray:
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def map_error(est: MapEstimate, ref, weight) -> dict:
    """Weighted circular errors over valid points.

    ``l1`` renormalizes ``weight`` over the valid points; ``coverage`` is the
    share of ``weight`` carried by valid points.
    """
    ref = np.asarray(ref, dtype=float)
    weight = np.asarray(weight, dtype=float)
    if ref.shape != est.values.shape or weight.shape != est.values.shape:
        raise ValidationError("estimate, reference and weight must share one grid")
    total = weight.sum()
    covered = weight[est.valid].sum()
    if not np.any(est.valid) or covered <= 0:
        return {"l1": float("nan"), "linf": float("nan"), "coverage": 0.0}
    d = circular_distance(est.values[est.valid], ref[est.valid])
    return {
        "l1": float(np.dot(weight[est.valid], d) / covered),
        "linf": float(np.max(d)),
        "coverage": float(covered / total) if total > 0 else 0.0,
    }


def identity_estimate(n_x: int) -> MapEstimate:
    return MapEstimate(np.arange(n_x) / n_x, np.ones(n_x, dtype=bool))


__all__ = [
    "DegenerateOutputError",
    "MapEstimate",
    "TerminalCoupling",
    "circular_distance",
    "circular_map_extract",
    "circular_mean",
    "identity_estimate",
    "map_error",
    "pair_marginal",
    "terminal_coupling",
]
