"""Affine constraint set of the discrete problem and the projection onto it.

Rows, in order:

1. one continuity row per centered cell ``(t, x)``;
2. ``n_x`` marginal rows per axis ``l``: the ``l``-th marginal of the
   terminal slice ``pi_s(1, .)`` equals ``mu_l``;
3. one source row per spatial cell: ``pi_s(0, .) = p`` (absent when the
   initial slice is free).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import (
    GridSpec,
    StaggeredField,
    check_staggered,
    divergence_adjoint,
    divergence_residual,
    marginalize,
    staggered_size,
)
from .measures import ValidationError


class ConvergenceError(RuntimeError):
    """Inner linear solve did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved relative residual {residual:.3e})")
        self.residual = residual


def _cyclic_shift(n: int) -> sp.csr_matrix:
    """``(P v)[j] = v[j - 1]`` with periodic wrap."""
    return sp.csr_matrix((np.ones(n), (np.arange(n), (np.arange(n) - 1) % n)), shape=(n, n))


def _axis_operator(op, l: int, k: int, n: int) -> sp.csr_matrix:
    """Embed a 1D operator acting along axis ``l`` of the row-major ``n**k`` grid."""
    left = sp.identity(n**l, format="csr")
    right = sp.identity(n ** (k - 1 - l), format="csr")
    return sp.kron(sp.kron(left, op), right, format="csr")


@dataclass(frozen=True)
class ConstraintSystem:
    """Continuity, terminal-marginal and (optional) source constraints.

    Parameters
    ----------
    grid : GridSpec
    marginals : sequence of arrays
        ``k`` probability vectors of length ``n_x``.
    source : array or None
        Probability array of shape ``(n_x,) * k`` imposed on ``pi_s(0, .)``;
        ``None`` leaves the initial slice free.
    diffusion_epsilon : float
    projector_tolerance : float
        Relative residual target of the inner solve.
    max_inner_iterations : int, optional
        CG iteration cap; defaults to ten times the number of rows.
    method : {"spectral", "direct", "cg"}
        ``"spectral"`` eliminates the continuity rows with a fast
        sine/Fourier solver and factorizes the small dense Schur complement
        on the boundary rows; ``"direct"`` factorizes a full-rank row subset
        of ``A A^T`` with a sparse LU; ``"cg"`` runs matrix-free
        preconditioned conjugate gradients.
    """

    grid: GridSpec
    marginals: tuple
    source: np.ndarray | None = None
    diffusion_epsilon: float = 0.0
    projector_tolerance: float = 1e-10
    max_inner_iterations: int | None = None
    method: str = "spectral"
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        g = self.grid
        if len(self.marginals) != g.k:
            raise ValidationError(f"expected {g.k} marginals, got {len(self.marginals)}")
        margs = []
        for l, mu in enumerate(self.marginals):
            mu = np.asarray(mu, dtype=float)
            if mu.shape != (g.n_x,):
                raise ValidationError(f"marginal {l} has shape {mu.shape}, expected ({g.n_x},)")
            if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
                raise ValidationError(f"marginal {l} is not a probability vector")
            margs.append(mu)
        object.__setattr__(self, "marginals", tuple(margs))
        if self.source is not None:
            src = np.asarray(self.source, dtype=float)
            if src.shape != g.spatial_shape:
                raise ValidationError(f"source has shape {src.shape}, expected {g.spatial_shape}")
            if np.any(src < 0) or abs(src.sum() - 1.0) > 1e-12:
                raise ValidationError("source is not a probability measure")
            object.__setattr__(self, "source", src)
        if self.diffusion_epsilon < 0:
            raise ValidationError("diffusion epsilon must be nonnegative")
        if not self.projector_tolerance > 0:
            raise ValidationError("projection tolerance must be positive")
        if self.method not in ("spectral", "direct", "cg"):
            raise ValidationError(f"unknown projection method {self.method!r}")

    # sizes ------------------------------------------------------------------

    @property
    def free_initial(self) -> bool:
        return self.source is None

    @property
    def n_continuity(self) -> int:
        return self.grid.n_t * self.grid.n_cells

    @property
    def n_marginal(self) -> int:
        return self.grid.k * self.grid.n_x

    @property
    def n_source(self) -> int:
        return 0 if self.source is None else self.grid.n_cells

    @property
    def n_rows(self) -> int:
        return self.n_continuity + self.n_marginal + self.n_source

    @property
    def inner_iteration_cap(self) -> int:
        return self.max_inner_iterations or 10 * self.n_rows

    def split(self, y: np.ndarray):
        """Split a row vector into (continuity, marginal, source) blocks."""
        g = self.grid
        a, b = self.n_continuity, self.n_continuity + self.n_marginal
        return (
            y[:a].reshape((g.n_t,) + g.spatial_shape),
            y[a:b].reshape(g.k, g.n_x),
            y[b:].reshape(g.spatial_shape) if self.n_source else None,
        )

    def rhs(self) -> np.ndarray:
        if "b" not in self._cache:
            parts = [np.zeros(self.n_continuity), np.concatenate(self.marginals)]
            if self.source is not None:
                parts.append(self.source.ravel())
            self._cache["b"] = np.concatenate(parts)
        return self._cache["b"]

    # operators --------------------------------------------------------------

    def apply_A(self, u: StaggeredField) -> np.ndarray:
        g = self.grid
        check_staggered(u, g)
        parts = [divergence_residual(u, g, self.diffusion_epsilon).ravel()]
        terminal = u.pi_s[-1]
        parts.append(np.concatenate([marginalize(terminal, l) for l in range(g.k)]))
        if self.source is not None:
            parts.append(u.pi_s[0].ravel())
        return np.concatenate(parts)

    def apply_A_adjoint(self, y: np.ndarray) -> StaggeredField:
        g = self.grid
        y = np.asarray(y, dtype=float)
        if y.shape != (self.n_rows,):
            raise ValidationError(f"row vector has shape {y.shape}, expected ({self.n_rows},)")
        cont, marg, src = self.split(y)
        out = divergence_adjoint(cont, g, self.diffusion_epsilon)
        pi_s = out.pi_s
        for l in range(g.k):
            shape = [1] * g.k
            shape[l] = g.n_x
            pi_s[-1] += marg[l].reshape(shape)
        if src is not None:
            pi_s[0] += src
        return out

    def matrix(self) -> sp.csr_matrix:
        """Sparse ``A`` acting on :meth:`StaggeredField.ravel` vectors."""
        if "A" in self._cache:
            return self._cache["A"]
        g = self.grid
        n, N, nt, k = g.n_x, g.n_cells, g.n_t, g.k
        c_t, c_x = g.coefficients
        D_t = sp.diags([-np.ones(nt), np.ones(nt)], [0, 1], shape=(nt, nt + 1), format="csr")
        A_pi = c_t * sp.kron(D_t, sp.identity(N), format="csr")
        if self.diffusion_epsilon:
            avg = sp.diags([0.5 * np.ones(nt), 0.5 * np.ones(nt)], [0, 1], shape=(nt, nt + 1))
            lap1 = (n**2) * (_cyclic_shift(n) + _cyclic_shift(n).T - 2 * sp.identity(n))
            lap = sum(_axis_operator(lap1, l, k, n) for l in range(k))
            A_pi = A_pi - self.diffusion_epsilon * sp.kron(avg, lap, format="csr")
        diff1 = sp.identity(n, format="csr") - _cyclic_shift(n)
        A_m = sp.hstack(
            [c_x * sp.kron(sp.identity(nt), _axis_operator(diff1, l, k, n)) for l in range(k)],
            format="csr",
        )
        blocks = [[A_pi, A_m]]
        last = sp.csr_matrix(([1.0], ([0], [nt])), shape=(1, nt + 1))
        summ = sp.vstack([self._marginal_operator(l) for l in range(k)], format="csr")
        blocks.append([sp.kron(last, summ), sp.csr_matrix((k * n, k * nt * N))])
        if self.source is not None:
            first = sp.csr_matrix(([1.0], ([0], [0])), shape=(1, nt + 1))
            blocks.append([sp.kron(first, sp.identity(N)), sp.csr_matrix((N, k * nt * N))])
        A = sp.bmat(blocks, format="csr")
        self._cache["A"] = A
        return A

    def _marginal_operator(self, l: int) -> sp.csr_matrix:
        g = self.grid
        n, k = g.n_x, g.k
        ones_left = sp.csr_matrix(np.ones((1, n**l)))
        ones_right = sp.csr_matrix(np.ones((1, n ** (k - 1 - l))))
        return sp.kron(sp.kron(ones_left, sp.identity(n)), ones_right, format="csr")

    def independent_rows(self) -> np.ndarray:
        """Row indices of a full-rank subset of ``A``.

        Total mass is encoded once per marginal block and once more through
        source plus continuity rows, so one marginal row of every axis but the
        first and one source row are redundant for consistent data.
        """
        keep = np.ones(self.n_rows, dtype=bool)
        n_x = self.grid.n_x
        for l in range(1, self.grid.k):
            keep[self.n_continuity + l * n_x] = False
        if self.source is not None:
            keep[self.n_continuity + self.n_marginal] = False
        return np.flatnonzero(keep)

    def _factor(self):
        if "lu" not in self._cache:
            rows = self.independent_rows()
            A_r = self.matrix()[rows]
            G = (A_r @ A_r.T).tocsc()
            self._cache["rows"] = rows
            self._cache["A_r"] = A_r
            self._cache["lu"] = spla.splu(G, permc_spec="MMD_AT_PLUS_A")
        return self._cache["A_r"], self._cache["rows"], self._cache["lu"]

    # projection -------------------------------------------------------------

    def project(self, u: StaggeredField) -> StaggeredField:
        """Euclidean projection of ``u`` onto ``{A u = b}``."""
        check_staggered(u, self.grid)
        vec = u.ravel()
        if self.method == "spectral":
            out = self._project_spectral(vec)
        elif self.method == "direct":
            out = self._project_direct(vec)
        else:
            out = self._project_cg(vec)
        return StaggeredField.from_flat(out, self.grid)

    def _spectral(self) -> "_SchurProjector":
        if "schur" not in self._cache:
            self._cache["schur"] = _SchurProjector(self)
        return self._cache["schur"]

    def _project_spectral(self, vec: np.ndarray) -> np.ndarray:
        solver = self._spectral()
        A_r, b = solver.A_r, solver.b
        return _refine(vec, A_r, b, solver.solve, self.projector_tolerance)

    def _project_direct(self, vec: np.ndarray) -> np.ndarray:
        A_r, rows, lu = self._factor()
        return _refine(vec, A_r, self.rhs()[rows], lu.solve, self.projector_tolerance)

    def _project_cg(self, vec: np.ndarray) -> np.ndarray:
        g = self.grid
        r = self.apply_A(StaggeredField.from_flat(vec, g)) - self.rhs()
        rnorm = np.linalg.norm(r)
        if rnorm == 0:
            return vec.copy()

        def normal(y):
            return self.apply_A(StaggeredField.from_flat(self.apply_A_adjoint(y).ravel(), g))

        n = self.n_rows
        op = spla.LinearOperator((n, n), matvec=normal, dtype=float)
        if "diag" not in self._cache:
            A = self.matrix()
            self._cache["diag"] = np.asarray(A.multiply(A).sum(axis=1)).ravel()
        prec = spla.LinearOperator((n, n), matvec=lambda y: y / self._cache["diag"], dtype=float)
        lam, info = spla.cg(op, r, rtol=self.projector_tolerance, atol=0.0, maxiter=self.inner_iteration_cap, M=prec)
        if info != 0:
            achieved = np.linalg.norm(normal(lam) - r) / rnorm
            raise ConvergenceError(f"projection CG stopped after {self.inner_iteration_cap} iterations", achieved)
        return vec - self.apply_A_adjoint(lam).ravel()

    def residual_report(self, u: StaggeredField) -> dict:
        """Max-norm residual of each constraint block and the minimum mass."""
        cont, marg, src = self.split(self.apply_A(u) - self.rhs())
        return {
            "continuity_inf": float(np.max(np.abs(cont))),
            "marginal_inf": float(np.max(np.abs(marg))),
            "source_inf": float(np.max(np.abs(src))) if src is not None else 0.0,
            "min_mass": float(np.min(u.pi_s)),
        }


def _refine(x, A_r, b, solve, tol, max_steps=3):
    """``x - A_r^T (A_r A_r^T)^{-1} (A_r x - b)`` with iterative refinement."""
    scale = max(np.linalg.norm(b), np.linalg.norm(A_r @ x), 1.0)
    r = A_r @ x - b
    rn = np.linalg.norm(r)
    for _ in range(max_steps):
        x = x - A_r.T @ solve(r)
        r = A_r @ x - b
        prev, rn = rn, np.linalg.norm(r)
        if rn <= 0.1 * tol * scale or rn > 0.5 * prev:
            break
    return x


class _SchurProjector:
    """Solver for ``A_r A_r^T`` exploiting the structure of the continuity block.

    With ``C`` the continuity rows, ``C C^T`` is a sum of Kronecker products
    of tridiagonal Toeplitz matrices in time (diagonalized by the type-I
    sine transform) and circulants in space (diagonalized by the FFT); the
    cross terms of the diffusion part cancel.  The remaining boundary rows
    ``B`` are few, so their Schur complement is formed densely once.
    """

    def __init__(self, c: ConstraintSystem, chunk: int = 64):
        g = c.grid
        rows = c.independent_rows()
        A = c.matrix()
        self.A_r = A[rows]
        self.b = c.rhs()[rows]
        self.n_c = c.n_continuity
        self.C = A[: self.n_c]
        self.B = A[rows[rows >= self.n_c]]
        self.shape = (g.n_t,) + g.spatial_shape
        c_t, c_x = g.coefficients
        theta = np.pi * np.arange(1, g.n_t + 1) / (g.n_t + 1)
        lam_t = (2 - 2 * np.cos(theta)).reshape((-1,) + (1,) * g.k)
        avg_t = (0.5 + 0.5 * np.cos(theta)).reshape((-1,) + (1,) * g.k)
        omega = 2 - 2 * np.cos(2 * np.pi * np.arange(g.n_x) / g.n_x)
        lam_x = np.zeros(g.spatial_shape)
        for l in range(g.k):
            shp = [1] * g.k
            shp[l] = g.n_x
            lam_x = lam_x + omega.reshape(shp)
        eig = c_t**2 * lam_t + c_x**2 * lam_x[None]
        eps = c.diffusion_epsilon
        if eps:
            eig = eig + (eps * g.n_x**2) ** 2 * avg_t * lam_x[None] ** 2
        self.eig = eig
        # dense Schur complement on the boundary rows
        CBt = (self.C @ self.B.T).toarray()
        W = np.empty_like(CBt)
        for j in range(0, CBt.shape[1], chunk):
            W[:, j : j + chunk] = self.solve_cc(CBt[:, j : j + chunk])
        S = (self.B @ self.B.T).toarray() - CBt.T @ W
        self.chol = sla.cho_factor(0.5 * (S + S.T))

    def solve_cc(self, r: np.ndarray) -> np.ndarray:
        """Solve ``C C^T z = r`` for one vector or a batch of columns."""
        batch = r.ndim == 2
        arr = r.T.reshape((-1,) + self.shape) if batch else r.reshape(self.shape)
        t_ax = 1 if batch else 0
        sp_axes = tuple(range(t_ax + 1, arr.ndim))
        hat = sfft.dst(arr, type=1, axis=t_ax, norm="ortho")
        hat = sfft.fftn(hat, axes=sp_axes)
        hat = hat / self.eig
        z = sfft.ifftn(hat, axes=sp_axes).real
        z = sfft.dst(z, type=1, axis=t_ax, norm="ortho")
        return z.reshape(arr.shape[0], -1).T if batch else z.ravel()

    def solve(self, r: np.ndarray) -> np.ndarray:
        rc, rb = r[: self.n_c], r[self.n_c :]
        z = self.solve_cc(rc)
        lam_b = sla.cho_solve(self.chol, rb - self.B @ (self.C.T @ z), check_finite=False)
        lam_c = z - self.solve_cc(self.C @ (self.B.T @ lam_b))
        return np.concatenate([lam_c, lam_b])


def project(u: StaggeredField, c: ConstraintSystem) -> StaggeredField:
    return c.project(u)


def residual_report(u: StaggeredField, c: ConstraintSystem) -> dict:
    return c.residual_report(u)


def apply_A(u: StaggeredField, c: ConstraintSystem) -> np.ndarray:
    return c.apply_A(u)


def apply_A_adjoint(y: np.ndarray, c: ConstraintSystem) -> StaggeredField:
    return c.apply_A_adjoint(y)


__all__ = [
    "ConstraintSystem",
    "ConvergenceError",
    "apply_A",
    "apply_A_adjoint",
    "project",
    "residual_report",
    "staggered_size",
]
