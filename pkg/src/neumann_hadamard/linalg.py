"""Small dense and sparse symmetric linear algebra.

Dense symmetric matrices are plain ``numpy`` arrays whose lower triangle is
authoritative.  Sparse symmetric matrices are stored as the lower triangle in
compressed-row form (:class:`SparseSymMatrix`).

Three solvers build on these:

* :func:`dense_sym_eigen` -- cyclic Jacobi rotations, deterministic output.
* :func:`spd_solve` / :class:`SPDFactor` -- sparse symmetric factorization
  with a positive-pivot check and iterative refinement.
* :func:`generalized_lowest_modes` -- blocked inverse subspace iteration with
  Rayleigh--Ritz for the lowest modes of ``A v = mu M v``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, InputError, SolverError

__all__ = [
    "EigenPairs",
    "SparseSymMatrix",
    "SPDFactor",
    "dense_sym_eigen",
    "symmetrize_lower",
    "spd_solve",
    "generalized_lowest_modes",
]

JACOBI_THRESHOLD = 1e-14
JACOBI_MAX_SWEEPS = 50
GUARD_VECTORS = 4
BACKWARD_TOL = 1e3 * np.finfo(float).eps
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in ascending order with matching column eigenvectors.

    ``gram`` names the inner product the columns are orthonormal in:
    ``"identity"`` for standard problems, ``"mass"`` for ``A v = mu M v``.
    """

    values: np.ndarray
    vectors: np.ndarray
    gram: str = "identity"

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class SparseSymMatrix:
    """Symmetric sparse matrix held as its lower triangle (CSR)."""

    lower: sp.csr_matrix

    def __post_init__(self):
        low = self.lower
        if low.shape[0] != low.shape[1] or low.shape[0] == 0:
            raise InputError(f"sparse symmetric matrix must be square and non-empty, got {low.shape}")
        if sp.triu(low, k=1).nnz:
            raise InputError("entries above the diagonal are not allowed in lower storage")

    @classmethod
    def from_full(cls, a) -> "SparseSymMatrix":
        """Build from any (symmetric) sparse or dense matrix; the lower triangle wins."""
        low = sp.tril(sp.csr_matrix(a), format="csr")
        low.eliminate_zeros()
        low.sort_indices()
        mat = cls(low)
        rows = np.diff(mat.full.indptr)
        if np.any(rows == 0):
            raise InputError("matrix has an empty row")
        return mat

    @property
    def order(self) -> int:
        return self.lower.shape[0]

    @cached_property
    def full(self) -> sp.csr_matrix:
        strict = sp.tril(self.lower, k=-1)
        out = (self.lower + strict.T).tocsr()
        out.sort_indices()
        return out

    def __matmul__(self, x):
        return self.full @ x

    def toarray(self) -> np.ndarray:
        return self.full.toarray()


def _as_sparse(a) -> sp.csr_matrix:
    if isinstance(a, SparseSymMatrix):
        return a.full
    if sp.issparse(a):
        return sp.csr_matrix(a)
    return sp.csr_matrix(np.asarray(a, dtype=float))


def symmetrize_lower(a) -> np.ndarray:
    """Return the symmetric matrix defined by the lower triangle of ``a``."""
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    low = np.tril(a)
    return low + np.tril(a, -1).T


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    # largest-magnitude component of every column is made positive
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def dense_sym_eigen(a, tol: float = JACOBI_THRESHOLD, max_sweeps: int = JACOBI_MAX_SWEEPS) -> EigenPairs:
    """Full eigendecomposition of a dense symmetric matrix by cyclic Jacobi.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Only the lower triangle is read.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm is below
        ``tol * ||a||_F``.
    max_sweeps : int
        Hard cap on the number of cyclic sweeps.

    Returns
    -------
    EigenPairs
        Ascending eigenvalues, orthonormal eigenvectors whose largest-magnitude
        entry is positive.
    """
    a = symmetrize_lower(a)
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    drop = 1e-18 * scale
    if n > 1 and scale > 0.0:
        for _ in range(max_sweeps):
            off = np.sqrt(2.0 * np.sum(np.tril(a, -1) ** 2))
            if off <= tol * scale:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    small = 100.0 * abs(apq)
                    if abs(apq) <= drop or (small <= _EPS * abs(a[p, p]) and small <= _EPS * abs(a[q, q])):
                        # below rounding of both diagonal entries
                        a[p, q] = a[q, p] = 0.0
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    if abs(theta) > 1e150:
                        t = 0.5 / theta
                    else:
                        t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                    c = 1.0 / np.sqrt(t * t + 1.0)
                    s = t * c
                    col_p = a[:, p].copy()
                    col_q = a[:, q].copy()
                    a[:, p] = c * col_p - s * col_q
                    a[:, q] = s * col_p + c * col_q
                    row_p = a[p, :].copy()
                    row_q = a[q, :].copy()
                    a[p, :] = c * row_p - s * row_q
                    a[q, :] = s * row_p + c * row_q
                    a[p, q] = a[q, p] = 0.0
                    vp = v[:, p].copy()
                    vq = v[:, q].copy()
                    v[:, p] = c * vp - s * vq
                    v[:, q] = s * vp + c * vq
        else:
            off = np.sqrt(2.0 * np.sum(np.tril(a, -1) ** 2))
            if off > tol * scale:
                raise SolverError(f"Jacobi did not converge in {max_sweeps} sweeps", residual=off / scale)
    values = np.diag(a).copy()
    order = np.argsort(values, kind="stable")
    return EigenPairs(values[order], _fix_signs(v[:, order]))


def dense_pencil_eigen(a, g) -> EigenPairs:
    """Eigenpairs of the symmetric-definite pencil ``a x = mu g x``.

    Vectors are ``g``-orthonormal.  Reduction is through the Cholesky factor
    of ``g``; raises :class:`numpy.linalg.LinAlgError` if ``g`` is not
    positive definite.
    """
    a = symmetrize_lower(a)
    g = symmetrize_lower(g)
    chol = np.linalg.cholesky(g)
    tmp = np.linalg.solve(chol, a)
    reduced = np.linalg.solve(chol, tmp.T).T
    pairs = dense_sym_eigen(0.5 * (reduced + reduced.T))
    vecs = np.linalg.solve(chol.T, pairs.vectors)
    return EigenPairs(pairs.values, _fix_signs(vecs), gram="mass")


class SPDFactor:
    """Sparse factorization of a symmetric positive definite matrix.

    The factorization is SuperLU run in symmetric mode without numerical
    pivoting, so the diagonal of ``U`` holds the ``LDL^T`` pivots; a
    non-positive pivot means the matrix is not positive definite.
    """

    def __init__(self, a, rtol: float = 1e-10, max_refine: int = 5):
        self.matrix = _as_sparse(a).tocsc()
        self.rtol = rtol
        self.max_refine = max_refine
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise InputError("matrix must be square")
        if not np.all(np.isfinite(self.matrix.data)):
            raise InputError("matrix has non-finite entries")
        try:
            self._lu = spla.splu(
                self.matrix,
                permc_spec="MMD_AT_PLUS_A",
                diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise InputError(f"matrix is singular or indefinite: {exc}") from exc
        pivots = self._lu.U.diagonal()
        if np.any(pivots <= 0.0):
            raise InputError(f"matrix is not positive definite (pivot {pivots.min():.3e})")

    @property
    def order(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def norm_inf(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())

    def solve(self, b, backward: bool = False) -> np.ndarray:
        """Solve with iterative refinement.

        The default acceptance test is ``||A x - b|| <= rtol ||b||`` per
        column.  With ``backward=True`` a column is also accepted once its
        normwise backward error ``||r|| / (||A|| ||x|| + ||b||)`` is within
        a small multiple of machine precision, the floor that refinement can
        reach when ``||A|| ||x||`` dwarfs ``||b||``.
        """
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        bnorm = np.linalg.norm(b, axis=0)
        for _ in range(self.max_refine + 1):
            r = b - self.matrix @ x
            rnorm = np.linalg.norm(r, axis=0)
            ok = rnorm <= self.rtol * bnorm
            if backward:
                scale = self.norm_inf * np.linalg.norm(x, axis=0) + bnorm
                ok |= rnorm <= BACKWARD_TOL * scale
            if np.all(ok):
                return x
            x = x + self._lu.solve(r)
        worst = float(np.max(rnorm / np.where(bnorm > 0, bnorm, 1.0)))
        raise SolverError("residual above tolerance after iterative refinement", residual=worst)


def spd_solve(a, b, factor: SPDFactor | None = None) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive definite sparse ``A``.

    Guarantees ``||A x - b|| <= 1e-10 ||b||`` per right-hand side column or
    raises :class:`SolverError`.
    """
    factor = factor or SPDFactor(a)
    return factor.solve(b)


def generalized_lowest_modes(
    a,
    m,
    n_modes: int,
    tol: float = 1e-9,
    max_iter: int = 1000,
    factor: SPDFactor | None = None,
    seed: int = 0,
) -> EigenPairs:
    """Lowest ``n_modes`` eigenpairs of ``A v = mu M v`` with ``A, M`` SPD.

    Blocked inverse subspace iteration: the block carries ``n_modes`` plus
    four guard vectors, every step solves ``A X = M Y`` and re-projects with
    Rayleigh--Ritz.  Iteration stops when each wanted Ritz pair satisfies
    ``||A v - mu M v|| <= tol * mu * ||M v||``, or, when that is below
    working precision, ``||A v - mu M v|| <= 1e3 eps ||A|| ||v||``.

    Returns ``M``-orthonormal vectors; guard vectors are dropped.
    """
    a_mat = _as_sparse(a)
    m_mat = _as_sparse(m)
    n = a_mat.shape[0]
    if m_mat.shape != (n, n):
        raise InputError("A and M must have the same order")
    if not 0 < n_modes <= n:
        raise InputError(f"need 0 < n_modes <= order, got n_modes={n_modes}, order={n}")
    factor = factor or SPDFactor(a_mat)
    block = min(n_modes + GUARD_VECTORS, n)
    x = np.random.default_rng(seed).standard_normal((n, block))
    res = np.full(block, np.inf)
    for _ in range(max_iter):
        x = factor.solve(m_mat @ x, backward=True)
        ax = a_mat @ x
        mx = m_mat @ x
        ritz = dense_pencil_eigen(x.T @ ax, x.T @ mx)
        x = x @ ritz.vectors
        ax = ax @ ritz.vectors
        mx = mx @ ritz.vectors
        vals = ritz.values
        r = ax - mx * vals
        mnorm = np.abs(vals) * np.linalg.norm(mx, axis=0)
        res = np.linalg.norm(r, axis=0) / mnorm
        # rounding in forming A v bounds how small the residual can get
        floor = BACKWARD_TOL * factor.norm_inf * np.linalg.norm(x, axis=0) / mnorm
        if np.all(res[:n_modes] <= np.maximum(tol, floor[:n_modes])):
            return EigenPairs(vals[:n_modes].copy(), _fix_signs(x[:, :n_modes]), gram="mass")
    bad = [int(i) for i in np.flatnonzero(res[:n_modes] > tol)]
    raise ConvergenceError(
        f"inverse iteration: modes {bad} unconverged after {max_iter} steps",
        unconverged=bad,
        residual=float(np.max(res[:n_modes])),
    )
