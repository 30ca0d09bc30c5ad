"""Diagonalization-based ground truth.

The eigensolver is a cyclic Jacobi method compiled with numba, so the
reference results do not share code with LAPACK or with the matrix
polynomial kernels they are used to check.
"""

from dataclasses import dataclass
import math

import numba
import numpy as np

from .errors import NonConvergenceError, ValidationError
from .matrix import as_symmetric
from .scalar import entropy_of_energy, fermi

__all__ = [
    "EigenDecomposition",
    "jacobi_eigendecomposition",
    "exact_density_matrix",
    "exact_mu",
    "exact_thermodynamics",
    "ExactThermodynamics",
]


@dataclass(frozen=True)
class EigenDecomposition:
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self, fn=None):
        """``V diag(fn(values)) V^T`` (``fn`` defaults to the identity)."""
        vals = self.values if fn is None else np.asarray(fn(self.values), dtype=float)
        return (self.vectors * vals) @ self.vectors.T


@numba.njit(cache=True)
def _off_norm2(A):
    n = A.shape[0]
    off = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            off += 2.0 * A[i, j] * A[i, j]
    return off


@numba.njit(cache=True)
def _jacobi(A, tol, max_sweeps):
    """Cyclic Jacobi in round-robin order.

    Each round rotates n/2 disjoint index pairs at once, so the update is
    one pass over the affected rows and one pass over every row for the
    columns; both touch memory contiguously.
    """
    n = A.shape[0]
    m = n + (n % 2)  # odd sizes get a dummy player that sits out
    half = m // 2
    # VT holds eigenvectors as rows so rotations touch contiguous memory
    VT = np.eye(n)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += A[i, j] * A[i, j]
    target = (tol * tol) * total
    order = np.arange(m)
    P = np.empty(half, np.int64)
    Q = np.empty(half, np.int64)
    C = np.empty(half)
    S = np.empty(half)
    for sweep in range(max_sweeps):
        if _off_norm2(A) <= target:
            return VT, sweep
        for _ in range(m - 1):
            npair = 0
            for i in range(half):
                p = min(order[i], order[m - 1 - i])
                q = max(order[i], order[m - 1 - i])
                if q >= n or A[p, q] == 0.0:
                    continue
                apq = A[p, q]
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                P[npair] = p
                Q[npair] = q
                C[npair] = c
                S[npair] = t * c
                npair += 1
            # rows of A and VT
            for r in range(npair):
                p, q, c, s = P[r], Q[r], C[r], S[r]
                for k in range(n):
                    ap = A[p, k]
                    aq = A[q, k]
                    A[p, k] = c * ap - s * aq
                    A[q, k] = s * ap + c * aq
                for k in range(n):
                    vp = VT[p, k]
                    vq = VT[q, k]
                    VT[p, k] = c * vp - s * vq
                    VT[q, k] = s * vp + c * vq
            # columns of A, one row at a time
            for k in range(n):
                for r in range(npair):
                    p, q, c, s = P[r], Q[r], C[r], S[r]
                    ap = A[k, p]
                    aq = A[k, q]
                    A[k, p] = c * ap - s * aq
                    A[k, q] = s * ap + c * aq
            for r in range(npair):
                A[P[r], Q[r]] = 0.0
                A[Q[r], P[r]] = 0.0
            # next pairing: player 0 stays, the rest rotate one seat
            last = order[m - 1]
            for i in range(m - 1, 1, -1):
                order[i] = order[i - 1]
            order[1] = last
    if _off_norm2(A) <= target:
        return VT, max_sweeps
    return VT, -1


def jacobi_eigendecomposition(H, tol=1e-15, max_sweeps=60):
    """Eigenpairs of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius mass is at most
    ``tol * |H|_F``. Values are sorted ascending; columns of ``vectors``
    are the matching eigenvectors.
    """
    A = np.array(as_symmetric(H, "H"), dtype=np.float64, order="C")
    n = A.shape[0]
    if n == 1:
        return EigenDecomposition(A[0].copy(), np.ones((1, 1)))
    VT, sweeps = _jacobi(A, float(tol), int(max_sweeps))
    if sweeps < 0:
        raise NonConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    vals = np.diag(A).copy()
    order = np.argsort(vals, kind="stable")
    return EigenDecomposition(vals[order], np.ascontiguousarray(VT[order].T))


def _eig(H, eig):
    return eig if eig is not None else jacobi_eigendecomposition(H)


def exact_density_matrix(H, beta, mu, eig=None):
    """``V diag(fermi(lambda)) V^T``; pass ``eig`` to reuse a decomposition."""
    e = _eig(H, eig)
    return e.reconstruct(lambda v: fermi(v, beta, mu))


def _occupation(vals, beta, mu):
    return float(np.sum(fermi(vals, beta, mu)))


def exact_mu(H, beta, n_occ, tol=1e-12, eig=None, max_iter=400):
    """Chemical potential with ``sum fermi(lambda_i) = n_occ`` by bisection.

    The bracket starts at the extreme eigenvalues and is widened until it
    encloses the root, so very small ``beta`` also works.
    """
    e = _eig(H, eig)
    vals = e.values
    N = vals.size
    if not 0 < n_occ < N:
        raise ValidationError(f"n_occ must lie in (0, {N})")
    lo, hi = float(vals[0]), float(vals[-1])
    span = max(hi - lo, 1.0 / beta, 1e-12)
    while _occupation(vals, beta, lo) > n_occ:
        lo -= span
        span *= 2.0
    span = max(hi - lo, 1.0 / beta, 1e-12)
    while _occupation(vals, beta, hi) < n_occ:
        hi += span
        span *= 2.0
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g = _occupation(vals, beta, mid) - n_occ
        if abs(g) <= tol:
            return mid
        if g < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4.0 * np.spacing(max(abs(lo), abs(hi))):
            break
    return mid


@dataclass(frozen=True)
class ExactThermodynamics:
    entropy_trace: float
    band_energy: float
    free_energy: float
    density: np.ndarray


def exact_thermodynamics(H, beta, mu, eig=None):
    """Entropy, band energy and free energy summed over eigenvalues."""
    e = _eig(H, eig)
    v = e.values
    f = fermi(v, beta, mu)
    s = entropy_of_energy(v, beta, mu)
    band = float(np.sum(f * (v - mu)))
    ent = float(np.sum(s))
    return ExactThermodynamics(ent, band, band - ent / beta, e.reconstruct(lambda _: f))
