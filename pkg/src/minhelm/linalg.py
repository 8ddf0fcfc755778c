"""Krylov solvers for the symmetric positive-definite block systems.

Storage is scipy CSR. The incomplete Cholesky factorisation and its
triangular solves are numba kernels, since scipy ships neither.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class IndefiniteMatrixError(ArithmeticError):
    """CG met a direction with p^T A p <= 0; carries the last iterate."""

    def __init__(self, msg, x=None, report=None):
        super().__init__(msg)
        self.x = x
        self.report = report


class IncompleteCholeskyError(ArithmeticError):
    pass


class InnerSolveWarning(UserWarning):
    pass


@dataclass
class SolveReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = False
    inner_iterations_total: int = 0
    inner_iterations: list = field(default_factory=list)  # per outer iteration
    extremal_eigs: tuple | None = None
    indefinite: bool = False
    message: str = ""


def as_sparse_sym(A, check: bool = True, atol: float = 1e-12) -> sp.csr_matrix:
    """CSR copy of ``A`` after checking symmetry."""
    A = sp.csr_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if check and A.nnz:
        skew = abs(A - A.T).max()
        if skew > atol * max(1.0, abs(A).max()):
            raise ValueError(f"matrix is not symmetric (max |A - A^T| = {skew:.3g})")
    A.sort_indices()
    return A


def _matvec(A):
    return A.matvec if hasattr(A, "matvec") and not sp.issparse(A) else (lambda v: A @ v)


def cg(A, b, tol: float = 1e-8, maxit: int | None = None, x0=None):
    """Conjugate gradients; stops at ||b - Ax|| <= tol ||b||."""
    return pcg(A, b, None, tol=tol, maxit=maxit, x0=x0)


def pcg(A, b, precond=None, tol: float = 1e-8, maxit: int | None = None, x0=None,
        flexible: bool = False, callback=None):
    """Preconditioned conjugate gradients.

    ``precond`` is a callable ``r -> z`` approximating ``A^{-1} r`` (None for
    plain CG). Objects with an ``inner_iterations`` counter have their
    per-application totals recorded in the report. ``flexible`` switches
    beta to the Polak-Ribiere form, which tolerates preconditioners that
    vary between applications; the default is the classical update.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    maxit = 10 * n if maxit is None else maxit
    Av = _matvec(A)
    M = precond if precond is not None else (lambda r: r.copy())
    rep = SolveReport()
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0:
        x[:] = 0.0
        rep.converged = True
        rep.residual_history = [0.0]
        return x, rep
    r = b - Av(x)
    rel = np.linalg.norm(r) / bnorm
    rep.residual_history.append(rel)
    if rel <= tol:
        rep.converged = True
        return x, rep

    def apply(r):
        before = getattr(precond, "inner_iterations", 0)
        try:
            z = M(r)
        except IndefiniteMatrixError as inner:
            rep.indefinite = True
            rep.message = f"preconditioner is not positive definite ({inner})"
            raise IndefiniteMatrixError(rep.message, x=x, report=rep) from inner
        used = getattr(precond, "inner_iterations", 0) - before
        rep.inner_iterations.append(used)
        rep.inner_iterations_total += used
        return z

    z = apply(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Ap = Av(p)
        pAp = p @ Ap
        if not pAp > 0:
            rep.iterations = it - 1
            rep.indefinite = True
            rep.message = f"indefinite: p^T A p = {pAp:.3e} at iteration {it}"
            raise IndefiniteMatrixError(rep.message, x=x, report=rep)
        alpha = rz / pAp
        x += alpha * p
        r_old = r
        r = r - alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        rep.residual_history.append(rel)
        rep.iterations = it
        if callback is not None:
            callback(it, rel, rep.inner_iterations[-1] if rep.inner_iterations else 0)
        if rel <= tol:
            rep.converged = True
            break
        z = apply(r)
        rz_new = r @ z
        beta = (rz_new - r_old @ z) / rz if flexible else rz_new / rz
        rz = rz_new
        p = z + beta * p
    if not rep.converged:
        rep.message = f"no convergence in {maxit} iterations (relres {rel:.3e})"
    return x, rep


# ---------------------------------------------------------------- IC(0)

@numba.njit(cache=True)
def _ic0_kernel(indptr, indices, data, n):
    # data/indices: lower triangle incl. diagonal, sorted, diagonal last in row
    L = data.copy()
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for p in range(start, end - 1):
            k = indices[p]
            s = L[p]
            # dot of row i (cols < k) with row k (cols < k)
            a, a_end = start, p
            c, c_end = indptr[k], indptr[k + 1] - 1
            while a < a_end and c < c_end:
                ca, cc = indices[a], indices[c]
                if ca == cc:
                    s -= L[a] * L[c]
                    a += 1
                    c += 1
                elif ca < cc:
                    a += 1
                else:
                    c += 1
            L[p] = s / L[indptr[k + 1] - 1]
        d = L[end - 1]
        for p in range(start, end - 1):
            d -= L[p] * L[p]
        if d <= 0.0:
            return L, i
        L[end - 1] = np.sqrt(d)
    return L, -1


@numba.njit(cache=True)
def _lower_solve(indptr, indices, L, b):
    n = b.shape[0]
    x = b.copy()
    for i in range(n):
        s = x[i]
        for p in range(indptr[i], indptr[i + 1] - 1):
            s -= L[p] * x[indices[p]]
        x[i] = s / L[indptr[i + 1] - 1]
    return x


@numba.njit(cache=True)
def _upper_solve(indptr, indices, L, b):
    # solves L^T x = b using the row storage of L
    n = b.shape[0]
    x = b.copy()
    for i in range(n - 1, -1, -1):
        x[i] = x[i] / L[indptr[i + 1] - 1]
        for p in range(indptr[i], indptr[i + 1] - 1):
            x[indices[p]] -= L[p] * x[i]
    return x


@dataclass
class IncompleteCholesky:
    """Zero-fill factor ``L`` (CSR, lower) with ``L L^T ~ A + shift*diag(A)``."""

    L: sp.csr_matrix
    shift: float = 0.0

    def solve(self, r):
        L = self.L
        y = _lower_solve(L.indptr, L.indices, L.data, np.asarray(r, dtype=float))
        return _upper_solve(L.indptr, L.indices, L.data, y)

    __call__ = solve


def ic0(A, max_shifts: int = 10, tau0: float = 1e-8) -> IncompleteCholesky:
    """Incomplete Cholesky with no fill on the pattern of ``A``.

    A non-positive pivot triggers a retry on ``A + tau*diag(A)`` with tau
    starting at ``tau0`` and doubling; after ``max_shifts`` failed retries
    :class:`IncompleteCholeskyError` is raised.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise IncompleteCholeskyError("incomplete Cholesky needs a positive diagonal")
    low = sp.tril(A, format="csr")
    low.sum_duplicates()
    low.sort_indices()
    indptr = low.indptr.astype(np.int64)
    indices = low.indices.astype(np.int64)
    base = low.data.astype(float)
    diag_pos = indptr[1:] - 1
    if not np.array_equal(indices[diag_pos], np.arange(n)):
        raise IncompleteCholeskyError("structurally zero diagonal entry")
    tau = 0.0
    for attempt in range(max_shifts + 1):
        data = base.copy()
        data[diag_pos] += tau * diag
        L, bad = _ic0_kernel(indptr, indices, data, n)
        if bad < 0:
            return IncompleteCholesky(sp.csr_matrix((L, indices, indptr), shape=(n, n)), tau)
        tau = tau0 if tau == 0.0 else 2 * tau
        log.debug("ic0: non-positive pivot at row %d, retrying with shift %.2e", bad, tau)
    raise IncompleteCholeskyError(f"non-positive pivots persist after {max_shifts} shifts")


# ------------------------------------------------------- block Jacobi

class _Diagonal:
    def __init__(self, A):
        self.d = A.diagonal()

    def __call__(self, r):
        return r / self.d


class BlockJacobiPreconditioner:
    """Applies ``diag(A1, A2, A3)^{-1}`` by an inner PCG per block, each
    preconditioned with the block's IC(0) factor.

    Inner solves stop at relative residual ``inner_tol`` or ``inner_maxit``
    iterations; solves hitting the cap are counted in ``inner_failures`` and
    a single warning is emitted.
    """

    def __init__(self, A, sizes, inner_tol: float = 1e-2, inner_maxit: int = 50):
        A = sp.csr_matrix(A)
        self.inner_tol = inner_tol
        self.inner_maxit = inner_maxit
        self.inner_iterations = 0
        self.inner_failures = 0
        self._warned = False
        self.slices = []
        self.blocks = []
        self.factors = []
        start = 0
        for size in sizes:
            s = slice(start, start + size)
            start += size
            blk = A[s, s].tocsr()
            try:
                fac = ic0(blk)
            except IncompleteCholeskyError as exc:
                log.warning("IC(0) failed on a diagonal block (%s); using Jacobi scaling", exc)
                fac = _Diagonal(blk)
            self.slices.append(s)
            self.blocks.append(blk)
            self.factors.append(fac)

    @classmethod
    def from_system(cls, system, **kw) -> "BlockJacobiPreconditioner":
        return cls(system.A, system.sizes, **kw)

    def __call__(self, r):
        z = np.empty_like(r)
        for s, blk, fac in zip(self.slices, self.blocks, self.factors):
            zs, rep = pcg(blk, r[s], fac, tol=self.inner_tol, maxit=self.inner_maxit)
            self.inner_iterations += rep.iterations
            if not rep.converged:
                self.inner_failures += 1
                if not self._warned:
                    warnings.warn(f"inner block solve stopped at {self.inner_maxit} iterations "
                                  f"(relres {rep.residual_history[-1]:.2e})", InnerSolveWarning,
                                  stacklevel=2)
                    self._warned = True
            z[s] = zs
        return z

    def matvec_M(self, v):
        out = np.empty_like(v)
        for s, blk in zip(self.slices, self.blocks):
            out[s] = blk @ v[s]
        return out


# ------------------------------------------------------------ Lanczos

@dataclass(frozen=True)
class EigenEstimate:
    lam_min: float
    lam_max: float
    breakdown: bool = False
    iterations: int = 0

    @property
    def condition(self) -> float:
        return self.lam_max / self.lam_min


def extremal_eigs(A, n_iter: int = 100, M_solve=None, M_matvec=None, seed: int = 0) -> EigenEstimate:
    """Extremal Ritz values from Lanczos with full reorthogonalisation.

    With ``M_solve`` (and ``M_matvec``) the Lanczos process runs on
    ``M^{-1} A`` in the M inner product, whose Ritz values are those of
    ``M^{-1/2} A M^{-1/2}``.
    """
    Av = _matvec(A)
    n = A.shape[0]
    m = min(n_iter, n)
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(n)
    precond = M_solve is not None
    Mv = M_matvec if precond else (lambda v: v)
    Minv = M_solve if precond else (lambda v: v)
    Mq = Mv(q)
    q /= np.sqrt(q @ Mq)
    Mq = Mv(q)
    Q, MQ = [q], [Mq]
    alpha, beta = [], []
    breakdown = False
    for j in range(m):
        w = Minv(Av(Q[-1]))
        a = w @ MQ[-1]
        alpha.append(a)
        w = w - a * Q[-1] - (beta[-1] * Q[-2] if j > 0 else 0.0)
        for _ in range(2):
            for qi, mqi in zip(Q, MQ):
                w -= (w @ mqi) * qi
        Mw = Mv(w)
        bnorm = np.sqrt(max(w @ Mw, 0.0))
        if j == m - 1:
            break
        if bnorm < 1e-12 * max(1.0, abs(a)):
            breakdown = j + 1 < n
            break
        beta.append(bnorm)
        Q.append(w / bnorm)
        MQ.append(Mw / bnorm)
    T = np.diag(alpha) + np.diag(beta[:len(alpha) - 1], 1) + np.diag(beta[:len(alpha) - 1], -1)
    ev = np.linalg.eigvalsh(T)
    return EigenEstimate(float(ev[0]), float(ev[-1]), breakdown, len(alpha))
