# -*- coding: utf-8 -*-

"""
Sparse matrices and the direct solver for the monolithic systems.

Storage is compressed sparse row with sorted, duplicate-free columns,
delegated to scipy.  The per-step systems are nonsymmetric saddle-point
matrices whose blocks differ in scale by up to 1/alpha (1e17), so the
solver equilibrates rows and columns to unit maximum magnitude before
factorising with SuperLU, and always verifies the residual of the
computed solution.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SparseMatrix",
    "SingularMatrixError",
    "LinearSolveError",
    "spadd",
    "sptranspose",
    "triple_product",
    "lu_solve",
]


class SingularMatrixError(Exception):
    """Structural or numerical singularity found during factorisation."""


class LinearSolveError(Exception):
    """The computed solution failed the residual bound."""


class SparseMatrix:
    """CSR matrix with canonical (sorted, merged) structure."""

    def __init__(self, mat):
        mat = sp.csr_matrix(mat, dtype=float)
        mat.sum_duplicates()
        mat.sort_indices()
        self.mat = mat

    @classmethod
    def from_coo(cls, rows, cols, vals, shape):
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=shape))

    @property
    def shape(self):
        return self.mat.shape

    @property
    def nnz(self):
        return self.mat.nnz

    def toarray(self):
        return self.mat.toarray()

    def matvec(self, x):
        return self.mat @ np.asarray(x, dtype=float)

    def copy(self):
        return SparseMatrix(self.mat.copy())

    def __matmul__(self, x):
        return self.matvec(x)


def spadd(a, b):
    """Canonical sparse sum a + b."""
    if a.shape != b.shape:
        raise ValueError("shape mismatch %s + %s" % (a.shape, b.shape))
    return SparseMatrix(a.mat + b.mat)


def sptranspose(a):
    return SparseMatrix(a.mat.T)


def triple_product(p, b):
    """P^T B P for an interpolation-type matrix P and square B."""
    if b.shape[0] != b.shape[1] or b.shape[1] != p.shape[0]:
        raise ValueError("dimension mismatch in P^T B P: P %s, B %s"
                         % (p.shape, b.shape))
    return SparseMatrix(p.mat.T @ (b.mat @ p.mat))


def _equilibrate(mat):
    """Row then column scalings bringing max magnitudes to one."""
    n, m = mat.shape
    absdata = np.abs(mat.data)
    counts = np.diff(mat.indptr)
    rmax = np.zeros(n)
    nonempty = counts > 0
    rmax[nonempty] = np.maximum.reduceat(
        absdata, mat.indptr[:-1][nonempty])
    r = np.where(rmax > 0.0, 1.0 / np.maximum(rmax, 1e-300), 1.0)
    scaled_data = mat.data * np.repeat(r, counts)
    cmax = np.zeros(m)
    np.maximum.at(cmax, mat.indices, np.abs(scaled_data))
    c = np.where(cmax > 0.0, 1.0 / np.maximum(cmax, 1e-300), 1.0)
    scaled = sp.csr_matrix((scaled_data * c[mat.indices], mat.indices,
                            mat.indptr), shape=mat.shape)
    return r, c, sp.csc_matrix(scaled)


class LUSolver:
    """Reusable factorisation of one equilibrated matrix."""

    def __init__(self, a, zero_pivot_rtol=1e-14):
        mat = a.mat if isinstance(a, SparseMatrix) else sp.csr_matrix(a)
        n, m = mat.shape
        if n != m:
            raise ValueError("matrix must be square, got %s" % (mat.shape,))
        nz_rows = np.diff(mat.indptr) > 0
        if not nz_rows.all():
            raise SingularMatrixError(
                "structurally empty row %d" % int(np.nonzero(~nz_rows)[0][0]))
        self._R, self._C, scaled = _equilibrate(mat)
        self._mat = mat
        try:
            self._lu = spla.splu(scaled)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        # entries of the equilibrated matrix have unit max magnitude, so
        # the zero-pivot tolerance applies to the U diagonal directly
        udiag = np.abs(self._lu.U.diagonal())
        bad = udiag <= zero_pivot_rtol
        if bad.any():
            row = int(np.nonzero(bad)[0][0])
            raise SingularMatrixError(
                "near-zero pivot at row %d (|u|=%.3e, tol %.1e)"
                % (row, udiag[bad][0], zero_pivot_rtol))

    def solve(self, b, rtol=1e-9, max_refine=2):
        b = np.asarray(b, dtype=float)
        x = self._C * self._lu.solve(self._R * b)
        bnorm = max(np.linalg.norm(b), 1e-300)
        rel = np.linalg.norm(self._mat @ x - b) / bnorm
        # a round of iterative refinement recovers the lost digits on
        # badly scaled steps at the cost of one triangular solve
        for _ in range(max_refine):
            if np.isfinite(rel) and rel <= 0.01 * rtol:
                break
            resid = b - self._mat @ x
            x = x + self._C * self._lu.solve(self._R * resid)
            rel = np.linalg.norm(self._mat @ x - b) / bnorm
        if not np.isfinite(rel) or rel > rtol:
            raise LinearSolveError(
                "relative residual %.3e exceeds %.1e" % (rel, rtol))
        return x, rel


def lu_solve(a, b, rtol=1e-9):
    """
    Direct solve of a sparse square system.

    Returns
    -------
    x : ndarray
    residual : float
        relative residual ||Ax - b|| / max(||b||, tiny), guaranteed
        below `rtol`

    Raises
    ------
    SingularMatrixError
        empty row, factorisation breakdown, or a pivot below the relative
        zero-pivot tolerance
    LinearSolveError
        residual bound violated despite factorisation succeeding
    """
    return LUSolver(a).solve(b, rtol=rtol)
