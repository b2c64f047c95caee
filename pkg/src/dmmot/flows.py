"""Source presets, flows built from static couplings, and kernel smoothing."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import product

import numpy as np

from .grid import GridSpec, StaggeredField, check_staggered, flat_index
from .measures import CouplingTable, ValidationError, normalize


class SourceKind(str, Enum):
    DIAGONAL = "diagonal"
    DELTA = "delta"
    EXPLICIT = "explicit"


@dataclass(frozen=True)
class SourceSpec:
    """Initial measure ``p`` on the product grid.

    ``diagonal`` puts ``nu(x)`` at ``(x, ..., x)``; ``delta`` is a unit atom at
    an on-grid multi-index; ``explicit`` carries a full mass array.
    """

    kind: SourceKind
    nu: np.ndarray | None = None
    point: tuple | None = None
    mass: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))

    @classmethod
    def diagonal(cls, nu) -> "SourceSpec":
        return cls(SourceKind.DIAGONAL, nu=np.asarray(nu, dtype=float))

    @classmethod
    def delta(cls, point) -> "SourceSpec":
        return cls(SourceKind.DELTA, point=tuple(point))

    @classmethod
    def explicit(cls, mass) -> "SourceSpec":
        return cls(SourceKind.EXPLICIT, mass=np.asarray(mass, dtype=float))


def realize_source(s: SourceSpec, g: GridSpec) -> np.ndarray:
    out = np.zeros(g.spatial_shape)
    if s.kind is SourceKind.DIAGONAL:
        nu = normalize(s.nu, "diagonal source")
        if nu.shape != (g.n_x,):
            raise ValidationError(f"diagonal source needs {g.n_x} weights, got {nu.shape}")
        j = np.arange(g.n_x)
        out[(j,) * g.k] = nu
    elif s.kind is SourceKind.DELTA:
        pt = s.point
        if len(pt) != g.k:
            raise ValidationError(f"delta point has {len(pt)} coordinates, expected {g.k}")
        for c in pt:
            if int(c) != c or not 0 <= c < g.n_x:
                raise ValidationError(f"delta point {pt} is not on the grid")
        out[tuple(int(c) for c in pt)] = 1.0
    else:
        mass = np.asarray(s.mass, dtype=float)
        if mass.shape != g.spatial_shape:
            raise ValidationError(f"explicit source has shape {mass.shape}, expected {g.spatial_shape}")
        out = normalize(mass, "explicit source")
    return out


def diagonal_source(nu, k: int) -> np.ndarray:
    nu = np.asarray(nu, dtype=float)
    return realize_source(SourceSpec.diagonal(nu), GridSpec(k, 1, len(nu)))


# Flows from couplings ---------------------------------------------------------


def _is_diagonal(table: CouplingTable) -> bool:
    return bool(np.all(table.indices == table.indices[:, :1]))


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> CouplingTable:
    """Monotone pairing of two mass vectors (in the given order)."""
    ca = np.concatenate([[0.0], np.cumsum(a)])
    cb = np.concatenate([[0.0], np.cumsum(b)])
    ca[-1] = cb[-1] = max(ca[-1], cb[-1])
    levels = np.unique(np.concatenate([ca, cb]))
    lo, hi = levels[:-1], levels[1:]
    mid = 0.5 * (lo + hi)
    ia = np.clip(np.searchsorted(ca, mid, side="right") - 1, 0, len(a) - 1)
    ib = np.clip(np.searchsorted(cb, mid, side="right") - 1, 0, len(b) - 1)
    return CouplingTable(np.stack([ia, ib], axis=1), hi - lo)


def default_pairing(source_atoms: CouplingTable, gamma: CouplingTable) -> CouplingTable:
    """Monotone pairing for diagonal sources, independent product otherwise."""
    if _is_diagonal(source_atoms):
        sa = np.argsort(source_atoms.indices[:, 0], kind="stable")
        sg = np.lexsort(gamma.indices.T[::-1])
        nw = _northwest_corner(source_atoms.mass[sa], gamma.mass[sg])
        idx = np.stack([sa[nw.indices[:, 0]], sg[nw.indices[:, 1]]], axis=1)
        return CouplingTable(idx, nw.mass)
    ia, ib = np.meshgrid(np.arange(len(source_atoms)), np.arange(len(gamma)), indexing="ij")
    mass = np.outer(source_atoms.mass, gamma.mass)
    return CouplingTable(np.stack([ia.ravel(), ib.ravel()], axis=1), mass.ravel())


def _window_tail(tau, i, n_t):
    """Fraction of the time window of slice ``i`` lying after ``tau``.

    Interior slices average over ``[t_i - dt/2, t_i + dt/2]``; the first and
    last slices are point evaluations at ``t = 0`` and ``t = 1``.
    """
    if i == 0:
        return (tau < 0).astype(float)
    if i == n_t:
        return (tau < 1).astype(float)
    hi = (i + 0.5) / n_t
    return np.clip((hi - tau) * n_t, 0.0, 1.0)


def _tent_weights(pos, corner):
    base = np.floor(pos).astype(np.int64)
    frac = pos - base
    c = np.asarray(corner)
    return base + c, np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1)


def flow_from_coupling(source, gamma: CouplingTable, g: GridSpec, pairing: CouplingTable | None = None) -> StaggeredField:
    """Straight-line flow from the source atoms to the coupling atoms.

    Each pair ``(a, b, w)`` of the pairing moves mass ``w`` along
    ``X(t) = (1 - t) a + t b`` (coordinates in ``[0, 1)``, no periodic
    shortcut).  The first and last mass slices are the multilinear splats of
    ``X(0)`` and ``X(1)``; interior slices average the splat of ``X(t)`` over
    one time step centered at the slice.  Momenta are the exact face fluxes
    of that moving splat, integrated against the matching time kernel, so
    the discrete continuity equation holds to rounding and momentum never
    appears in a cell without mass.

    Parameters
    ----------
    source : array
        Mass array on the product grid.
    gamma : CouplingTable
    g : GridSpec
    pairing : CouplingTable, optional
        Two-column table ``(source atom, gamma atom)``; atoms are numbered in
        the order of ``CouplingTable.from_dense(source)`` and of ``gamma``.
        Defaults to :func:`default_pairing`.
    """
    source = np.asarray(source, dtype=float)
    if source.shape != g.spatial_shape:
        raise ValidationError(f"source has shape {source.shape}, expected {g.spatial_shape}")
    src = CouplingTable.from_dense(source)
    if pairing is None:
        pairing = default_pairing(src, gamma)
    ia, ib = pairing.indices[:, 0], pairing.indices[:, 1]
    if np.any(ia >= len(src)) or np.any(ib >= len(gamma)):
        raise ValidationError("pairing refers to atoms that do not exist")
    if np.max(np.abs(np.bincount(ia, pairing.mass, len(src)) - src.mass), initial=0) > 1e-10:
        raise ValidationError("pairing first marginal does not match the source")
    if np.max(np.abs(np.bincount(ib, pairing.mass, len(gamma)) - gamma.mass), initial=0) > 1e-10:
        raise ValidationError("pairing second marginal does not match the coupling")

    n, n_t, k = g.n_x, g.n_t, g.k
    keep = pairing.mass > 0
    a = src.indices[ia[keep]].astype(float)  # grid units
    d = (gamma.indices[ib[keep]] - src.indices[ia[keep]]).astype(float)
    w = pairing.mass[keep]
    out = StaggeredField.zeros(g)
    flat_pi = out.pi_s.reshape(n_t + 1, -1)
    flat_m = out.m_s.reshape(k, n_t, -1)
    for corner in product((0, 1), repeat=k):
        for slot, pos in ((0, a), (n_t, a + d)):
            idx, wt = _tent_weights(pos, corner)
            np.add.at(flat_pi[slot], flat_index(idx % n, n), w * wt)
    if len(w) == 0:
        return out

    # per-atom breakpoints: window edges and integer crossings of each axis
    edges = (np.arange(1, n_t) - 0.5) / n_t
    edges = np.concatenate([edges, edges + 1.0 / n_t])
    edges = edges[(edges > 0) & (edges < 1)]
    max_d = int(np.max(np.abs(d))) if d.size else 0
    crossings = []
    steps = np.arange(1, max_d + 1)
    for l in range(k):
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = np.where(d[:, l:l + 1] != 0, steps[None, :] / np.abs(d[:, l:l + 1]), 2.0)
        crossings.append(tc)
    bp = np.concatenate(
        [np.zeros((len(w), 1)), np.ones((len(w), 1)), np.broadcast_to(edges, (len(w), len(edges)))] + crossings,
        axis=1,
    )
    bp = np.sort(np.clip(bp, 0.0, 1.0), axis=1)
    lo, hi = bp[:, :-1], bp[:, 1:]
    n_gauss = k // 2 + 1
    xg, wg = np.polynomial.legendre.leggauss(n_gauss)
    for xq, wq in zip(xg, wg):
        tau = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xq
        dt_w = 0.5 * (hi - lo) * wq
        live = dt_w > 0
        tau, dt_w = tau[live], dt_w[live]
        atom = np.nonzero(live)[0]
        pos = a[atom] + tau[:, None] * d[atom]
        mass = w[atom] * dt_w
        # interior mass slices
        slot = np.rint(tau * n_t).astype(np.int64)
        inner = (slot >= 1) & (slot <= n_t - 1)
        for corner in product((0, 1), repeat=k):
            idx, wt = _tent_weights(pos[inner], corner)
            flat = flat_index(idx % n, n)
            np.add.at(flat_pi, (slot[inner], flat), n_t * mass[inner] * wt)
        # face fluxes, one step kernel per candidate step
        base = np.floor(pos).astype(np.int64)
        frac = pos - base
        step0 = np.floor(tau * n_t).astype(np.int64)
        for shift in (-1, 0, 1):
            i = step0 + shift
            ok = (i >= 0) & (i <= n_t - 1)
            kern = np.zeros_like(tau)
            for ii in np.unique(i[ok]):
                sel = ok & (i == ii)
                kern[sel] = _window_tail(tau[sel], ii + 1, n_t) - _window_tail(tau[sel], ii, n_t)
            ok &= kern > 0
            if not np.any(ok):
                continue
            for l in range(k):
                moving = ok & (d[atom, l] != 0)
                if not np.any(moving):
                    continue
                others = [x for x in range(k) if x != l]
                flux = (n_t / n) * mass[moving] * kern[moving] * d[atom[moving], l]
                for corner in product((0, 1), repeat=k - 1):
                    idx = base[moving].copy()
                    wt = np.ones(np.count_nonzero(moving))
                    for c, ax in zip(corner, others):
                        idx[:, ax] += c
                        wt = wt * (frac[moving, ax] if c else 1.0 - frac[moving, ax])
                    np.add.at(flat_m[l], (i[moving], flat_index(idx % n, n)), flux * wt)
    return out


# Smoothing ----------------------------------------------------------------


@dataclass(frozen=True)
class ProbabilityKernel:
    """Symmetric probability weights on a centered stencil.

    ``weights`` has shape ``(2 r + 1,) * k``; entry ``r`` along every axis is
    the origin.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if any(s % 2 == 0 for s in w.shape):
            raise ValidationError("kernel stencil must have odd extent on every axis")
        if np.any(w < 0):
            raise ValidationError("kernel weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-14:
            raise ValidationError(f"kernel weights sum to {w.sum():.17g}")
        if not np.array_equal(w, np.flip(w)):
            raise ValidationError("kernel must be even under x -> -x")
        object.__setattr__(self, "weights", w)

    @property
    def radius(self) -> int:
        return self.weights.shape[0] // 2

    @classmethod
    def point(cls, k: int) -> "ProbabilityKernel":
        return cls(np.ones((1,) * k))

    @classmethod
    def from_1d(cls, w1d, k: int) -> "ProbabilityKernel":
        """Tensor product of a symmetric 1D stencil."""
        w1d = np.asarray(w1d, dtype=float)
        w1d = 0.5 * (w1d + w1d[::-1])
        w = w1d
        for _ in range(k - 1):
            w = np.multiply.outer(w, w1d)
        w = w / w.sum()
        return cls(0.5 * (w + np.flip(w)))

    @classmethod
    def random(cls, k: int, radius: int, rng) -> "ProbabilityKernel":
        w = rng.random((2 * radius + 1,) * k)
        w = w + np.flip(w)
        w = w / w.sum()
        return cls(0.5 * (w + np.flip(w)))


def convolve_periodic(arr: np.ndarray, kernel: ProbabilityKernel, axes) -> np.ndarray:
    """Periodic convolution over ``axes`` (one per kernel axis)."""
    r = kernel.radius
    out = np.zeros_like(arr)
    for offset in np.ndindex(*kernel.weights.shape):
        w = kernel.weights[offset]
        if w == 0:
            continue
        shifts = tuple(o - r for o in offset)
        out += w * np.roll(arr, shifts, axis=axes)
    return out


def smooth_flow(u: StaggeredField, kernel: ProbabilityKernel, g: GridSpec | None = None) -> StaggeredField:
    """Convolve every time slice of mass and momentum with ``kernel`` in space."""
    k = u.pi_s.ndim - 1
    if kernel.weights.ndim != k:
        raise ValidationError(f"kernel is {kernel.weights.ndim}-dimensional, field has k={k}")
    if g is not None:
        check_staggered(u, g)
    axes = tuple(range(1, k + 1))
    pi_s = convolve_periodic(u.pi_s, kernel, axes)
    m_s = np.stack([convolve_periodic(u.m_s[l], kernel, axes) for l in range(k)])
    return StaggeredField(pi_s, m_s)
