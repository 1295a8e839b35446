"""Sparse matrix assembly helpers and linear solves.

Thin layer over scipy.sparse: triplet-based CSR construction with duplicate
summation, a solve front end (sparse direct by default, preconditioned
Krylov optionally), the M-matrix predicate used by the runtime checks, and a
MatrixMarket dump hook for debugging.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolveFailure


@dataclass(frozen=True)
class SolveReport:
    """Outcome of one linear solve."""

    method: str
    iterations: int
    residual_norm: float
    converged: bool

    def __str__(self):
        state = "converged" if self.converged else "NOT converged"
        return (
            f"{self.method} {state} in {self.iterations} iterations, "
            f"residual {self.residual_norm:.3e}"
        )


def csr_from_triplets(n, triplets):
    """Build an n-by-n CSR matrix from (row, col, value) triplets.

    Duplicate entries are summed.  ``triplets`` may be an iterable of tuples
    or a (rows, cols, values) triple of arrays.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3:
        rows, cols, vals = (np.asarray(a) for a in triplets)
    else:
        triplets = list(triplets)
        if triplets:
            rows = np.array([t[0] for t in triplets], dtype=np.int64)
            cols = np.array([t[1] for t in triplets], dtype=np.int64)
            vals = np.array([t[2] for t in triplets], dtype=np.float64)
        else:
            rows = np.zeros(0, dtype=np.int64)
            cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
    if rows.size and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n):
        raise ValueError("triplet index out of range")
    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.sum_duplicates()
    a.sort_indices()
    return a


def solve(A, b, tol=1e-12, max_iter=2000, method="direct"):
    """Solve A x = b; returns (x, SolveReport).

    ``method`` is 'direct' (sparse LU), 'bicgstab', or 'gmres'.  The Krylov
    paths use an incomplete-LU preconditioner with a diagonal fallback.
    Raises SolveFailure when the residual does not meet ``tol`` (relative to
    ||b||) or the factorization breaks down.
    """
    b = np.asarray(b, dtype=np.float64)
    A = A.tocsr() if not sp.issparse(A) else A.tocsr()
    bnorm = np.linalg.norm(b)

    if method == "direct":
        try:
            lu = spla.splu(A.tocsc())
            x = lu.solve(b)
        except (RuntimeError, ValueError) as exc:
            report = SolveReport("direct", 0, np.inf, False)
            raise SolveFailure(f"sparse LU failed ({exc})", report) from exc
        resid = np.linalg.norm(b - A @ x)
        converged = resid <= tol * bnorm if bnorm > 0 else resid == 0.0
        # Direct solves sit at the roundoff floor; only reject genuinely
        # broken factorizations (NaNs or residuals far above the target).
        if not np.all(np.isfinite(x)) or (bnorm > 0 and resid > max(tol, 1e-9) * bnorm):
            report = SolveReport("direct", 1, resid, False)
            raise SolveFailure("direct solve residual too large", report)
        return x, SolveReport("direct", 1, resid, converged)

    if method not in ("bicgstab", "gmres"):
        raise ValueError(f"unknown solve method '{method}'")

    M = None
    try:
        ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=10)
        M = spla.LinearOperator(A.shape, ilu.solve)
    except RuntimeError:
        d = A.diagonal()
        if np.all(d != 0):
            M = sp.diags(1.0 / d)

    count = [0]

    def cb(_):
        count[0] += 1

    kw = dict(rtol=tol, atol=0.0, maxiter=max_iter, M=M)
    if method == "bicgstab":
        x, info = spla.bicgstab(A, b, callback=cb, **kw)
    else:
        x, info = spla.gmres(A, b, callback=cb, callback_type="pr_norm", **kw)
    resid = np.linalg.norm(b - A @ x)
    converged = info == 0 and (resid <= tol * bnorm if bnorm > 0 else resid == 0.0)
    report = SolveReport(method, count[0], resid, converged)
    if not converged:
        raise SolveFailure("Krylov solve did not converge", report)
    return x, report


class Factorization:
    """Reusable sparse LU of a fixed matrix for repeated right-hand sides."""

    def __init__(self, A):
        self.A = A.tocsr()
        try:
            self._lu = spla.splu(A.tocsc())
        except (RuntimeError, ValueError) as exc:
            raise SolveFailure(f"sparse LU failed ({exc})") from exc

    def solve(self, b):
        b = np.asarray(b, dtype=np.float64)
        x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolveFailure("factorized solve produced non-finite values")
        return x


def factorize(A):
    return Factorization(A)


def is_m_matrix(A, tol=1e-12):
    """Check the sign pattern used by the monotonicity arguments.

    True when all off-diagonal entries are <= tol, all diagonal entries are
    strictly positive, and every row sum is >= -tol.
    """
    A = A.tocsr()
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        return False
    coo = A.tocoo()
    off = coo.row != coo.col
    if np.any(coo.data[off] > tol):
        return False
    row_sums = np.asarray(A.sum(axis=1)).ravel()
    if np.any(row_sums < -tol):
        return False
    return n > 0


def dump_matrix(A, path):
    """Write the matrix in MatrixMarket coordinate format (debug aid)."""
    scipy.io.mmwrite(str(path), A.tocoo())
