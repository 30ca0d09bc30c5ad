"""Dense symmetric kernels: bounds, rescaling, model application and SP2.

Matrices are plain 2-D float64 numpy arrays. Functions that accept a
Hamiltonian symmetrize it first with ``(M + M.T) / 2``, and every squaring
result is symmetrized the same way, so intermediates are exactly symmetric.
"""

from dataclasses import dataclass
from enum import Enum
import math

import numpy as np

from .errors import (
    DivergedEvaluationError,
    HalfPrecisionOverflowError,
    NonConvergenceError,
    OutOfRegionError,
    ValidationError,
)
from .models import Architecture
from .scalar import LN2

__all__ = [
    "ACCUMULATOR_SKIP",
    "SpectralBounds",
    "NormalizedProblem",
    "PrecisionMode",
    "MatmulCounter",
    "DensityStatistics",
    "as_symmetric",
    "spectral_bounds",
    "normalize_problem",
    "rescale_to_model",
    "in_region_of_validity",
    "region_violations",
    "split_half",
    "mixed_square",
    "mixed_product",
    "apply_model",
    "sp2_trace_matrix",
    "density_statistics",
]

#: Matrix application drops MLSP2 accumulator weights smaller than this.
ACCUMULATOR_SKIP = 1e-8
HALF_MAX = float(np.finfo(np.float16).max)


def as_symmetric(M, name="matrix"):
    """Return ``(M + M.T) / 2`` as float64 after shape and finiteness checks."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValidationError(f"{name} must be a non-empty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValidationError(f"{name} has non-finite entries")
    return 0.5 * (M + M.T)


def _sym(M):
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class SpectralBounds:
    eps_min: float
    eps_max: float

    def __post_init__(self):
        if not (math.isfinite(self.eps_min) and math.isfinite(self.eps_max)):
            raise ValidationError("spectral bounds must be finite")
        if not self.eps_min < self.eps_max:
            raise ValidationError(f"degenerate bounds [{self.eps_min}, {self.eps_max}]")

    @property
    def width(self):
        return self.eps_max - self.eps_min


def spectral_bounds(H):
    """Gershgorin enclosure of the spectrum, widened by ``1e-12`` of its width.

    A zero-width enclosure (a multiple of the identity) is widened by
    ``1e-12 * max(1, |c|)`` instead so that the bounds stay ordered.
    """
    H = as_symmetric(H, "H")
    d = np.diag(H)
    radius = np.abs(H).sum(axis=1) - np.abs(d)
    lo = float(np.min(d - radius))
    hi = float(np.max(d + radius))
    w = hi - lo
    pad = 1e-12 * w if w > 0 else 1e-12 * max(1.0, abs(lo))
    return SpectralBounds(lo - pad, hi + pad)


@dataclass(frozen=True)
class NormalizedProblem:
    """Flipped, unit-width problem ``(H', beta', mu')``.

    ``f(H; beta, mu) = I - fermi(H'; beta', mu')``: low energies of ``H``
    map near 1 in ``H'``.
    """

    h_prime: np.ndarray
    beta_prime: float
    mu_prime: float
    bounds: SpectralBounds


def normalize_problem(H, beta, mu, bounds=None):
    H = as_symmetric(H, "H")
    if not (math.isfinite(beta) and beta > 0):
        raise ValidationError("beta must be positive")
    if not math.isfinite(mu):
        raise ValidationError("mu must be finite")
    if bounds is None:
        bounds = spectral_bounds(H)
    w = bounds.width
    hp = (bounds.eps_max * np.eye(H.shape[0]) - H) / w
    return NormalizedProblem(hp, w * beta, (bounds.eps_max - mu) / w, bounds)


def region_violations(beta_prime, mu_prime, beta0, mu0, rtol=1e-12):
    """Inequalities of the validity region that ``(beta', mu')`` breaks.

    Written as ``beta' mu' <= beta0 mu0`` and
    ``beta' (1 - mu') <= beta0 (1 - mu0)``, which keep the rescaled spectrum
    inside [0, 1] and stay meaningful for ``mu'`` outside (0, 1).
    """
    out = []
    lhs, rhs = beta_prime * mu_prime, beta0 * mu0
    if lhs > rhs * (1.0 + rtol):
        out.append(f"beta' mu' <= beta0 mu0 violated: {lhs:.6g} > {rhs:.6g}")
    lhs, rhs = beta_prime * (1.0 - mu_prime), beta0 * (1.0 - mu0)
    if lhs > rhs * (1.0 + rtol):
        out.append(f"beta' (1 - mu') <= beta0 (1 - mu0) violated: {lhs:.6g} > {rhs:.6g}")
    return out


def in_region_of_validity(beta_prime, mu_prime, beta0, mu0):
    return not region_violations(beta_prime, mu_prime, beta0, mu0)


def rescale_to_model(problem, beta0, mu0):
    """``H0 = (beta'/beta0) (H' - mu' I) + mu0 I``, spectrum inside [0, 1]."""
    bad = region_violations(problem.beta_prime, problem.mu_prime, beta0, mu0)
    if bad:
        raise OutOfRegionError(
            f"(beta'={problem.beta_prime:.6g}, mu'={problem.mu_prime:.6g}) is outside the "
            f"region of the (beta0={beta0:.6g}, mu0={mu0:.6g}) model: " + "; ".join(bad),
            violated=tuple(bad))
    s = problem.beta_prime / beta0
    n = problem.h_prime.shape[0]
    return s * problem.h_prime + (mu0 - s * problem.mu_prime) * np.eye(n)


class PrecisionMode(str, Enum):
    DOUBLE = "double"
    SINGLE = "single"
    MIXED_EMULATED = "mixed"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for mode in cls:
            if key in (mode.value, mode.name.lower()):
                return mode
        raise ValidationError(f"unknown precision {value!r}")


class MatmulCounter:
    """Counts full-precision and half-input matrix multiplications."""

    def __init__(self):
        self.full = 0
        self.half = 0

    def __repr__(self):
        return f"MatmulCounter(full={self.full}, half={self.half})"


def split_half(X):
    """Split ``X`` into binary16 parts with ``X ~= X0 + X1``.

    Both parts are returned as float32 arrays holding exact binary16 values.
    """
    X = np.asarray(X, dtype=np.float32)
    if np.max(np.abs(X), initial=0.0) > HALF_MAX:
        raise HalfPrecisionOverflowError("matrix entries exceed the binary16 range")
    X0 = X.astype(np.float16)
    X1 = (X - X0.astype(np.float32)).astype(np.float16)
    return X0.astype(np.float32), X1.astype(np.float32)


def mixed_square(X, counter=None):
    """Emulated tensor-core square ``X0 X0 + X0 X1 + (X0 X1)^T``.

    Inputs are rounded to binary16, products accumulate in binary32 and
    the ``X1 X1`` term is dropped. Exactly two half-input multiplications.
    """
    X0, X1 = split_half(X)
    Y0 = X0 @ X0
    Y1 = X0 @ X1
    if counter is not None:
        counter.half += 2
    Y = Y0 + (Y1 + Y1.T)
    return _sym(Y)


def mixed_product(L, R, counter=None):
    """``L R`` from binary16 splits, dropping ``L1 R1`` (three multiplies)."""
    L0, L1 = split_half(L)
    R0, R1 = split_half(R)
    Y = L0 @ R0 + (L0 @ R1 + L1 @ R0)
    if counter is not None:
        counter.half += 3
    return Y


class _Kernel:
    def __init__(self, mode, counter):
        self.mode = mode
        self.counter = counter if counter is not None else MatmulCounter()
        self.dtype = np.float64 if mode is PrecisionMode.DOUBLE else np.float32

    def cast(self, M):
        return np.asarray(M, dtype=self.dtype)

    def square(self, X):
        if self.mode is PrecisionMode.MIXED_EMULATED:
            return mixed_square(X, self.counter)
        self.counter.full += 1
        return _sym(X @ X)

    def product(self, L, R):
        if self.mode is PrecisionMode.MIXED_EMULATED:
            return _sym(mixed_product(L, R, self.counter))
        self.counter.full += 1
        return _sym(L @ R)


def _check(X, layer):
    if not np.all(np.isfinite(X)):
        raise DivergedEvaluationError(layer)


def _run_mlsp2(layers, X, k, skip_small=True):
    n = X.shape[0]
    eye = np.eye(n, dtype=X.dtype)
    A = None
    for i, (a, b, c, d) in enumerate(layers):
        if d != 0.0 and not (skip_small and abs(d) < ACCUMULATOR_SKIP):
            A = d * X if A is None else A + d * X
        X = a * k.square(X) + b * X + c * eye
        _check(X, i)
    return X if A is None else A + X


def apply_model(H0, m, mode=PrecisionMode.DOUBLE, counter=None):
    """Matrix polynomial ``p(H0)`` of a model's scalar recursion.

    Parameters
    ----------
    H0 : (N, N) array
        Rescaled Hamiltonian with spectrum in [0, 1].
    m : ModelCoefficients
    mode : PrecisionMode or str
    counter : MatmulCounter, optional
        Incremented once per multiplication (twice per mixed squaring).

    Notes
    -----
    MLSP2 accumulator weights below ``ACCUMULATOR_SKIP`` are skipped here
    but not in scalar evaluation.
    """
    mode = PrecisionMode.parse(mode)
    H0 = as_symmetric(H0, "H0")
    k = _Kernel(mode, counter)
    n = H0.shape[0]
    eye = np.eye(n, dtype=k.dtype)
    arch, p = m.architecture, m.payload

    if arch is Architecture.ENTROPY:
        X = k.cast((1.0 - p.mu0) * np.eye(n) - p.alpha * (H0 - p.mu0 * np.eye(n)))
        Y = _run_mlsp2(p.inner.layers, X, k)
        S = 4.0 * LN2 * (Y - k.square(Y))
        _check(S, p.n_layers)
        return S.astype(float)

    X = k.cast(np.eye(n) - H0)
    if arch is Architecture.SP2:
        for i, s in enumerate(p.signs):
            Y = k.square(X)
            X = Y if s > 0 else 2.0 * X - Y
            _check(X, i)
        out = X
    elif arch is Architecture.MLSP2:
        out = _run_mlsp2(p.layers, X, k)
    elif arch is Architecture.MLSP2_COMPACT:
        A = np.zeros_like(X)
        for i, (t, u) in enumerate(p.pairs):
            A = A + u * X
            X = k.square(X + t * eye)
            _check(X, i)
        out = A + p.final[0] * eye + p.final[1] * X
    elif arch is Architecture.MAXSP2:
        xs = [X]
        for i in range(p.n_layers):
            Z = p.delta[i] * eye
            for j in range(i + 1):
                if p.theta[i, j] != 0.0:
                    Z = Z + p.theta[i, j] * xs[j]
            xs.append(k.square(Z))
            _check(xs[-1], i)
        out = p.offset * eye
        for g, Xj in zip(p.gamma, xs):
            if g != 0.0:
                out = out + g * Xj
    elif arch is Architecture.SKIPSP2:
        depth, K = p.skip_depth, p.accumulators
        xs = [X]
        acc = [p.acc0[l] * eye for l in range(K)]
        for i in range(p.n_layers):
            Z = p.alpha[i, depth] * eye
            for j in range(min(depth, i + 1)):
                Z = Z + p.alpha[i, j] * xs[i - j]
            for l in range(K):
                Z = Z + p.beta[i, l] * acc[l]
            acc = [acc[l] + p.gamma[i, l] * xs[i] for l in range(K)]
            xs.append(k.square(Z))
            _check(xs[-1], i)
            if len(xs) > depth + 1:
                xs[len(xs) - depth - 2] = None
        out = acc[0] + p.gamma_out * xs[-1]
    elif arch is Architecture.ARBSP2:
        xs = [X]
        for i in range(p.n_layers):
            L = p.delta[i] * eye
            R = p.delta2[i] * eye
            for j in range(i + 1):
                L = L + p.phi[i, j] * xs[j]
                R = R + p.psi[i, j] * xs[j]
            xs.append(k.product(L, R))
            _check(xs[-1], i)
        out = p.offset * eye
        for g, Xj in zip(p.gamma, xs):
            out = out + g * Xj
    else:
        raise ValidationError(f"unsupported architecture {arch}")
    return _sym(np.asarray(out, dtype=float))


def sp2_trace_matrix(H_prime, n_occ, max_layers=100, tol=1e-8, counter=None):
    """Zero-temperature density matrix by trace-driven SP2.

    ``H_prime`` is a flipped, normalized Hamiltonian (occupied states near
    1). Each step squares or applies ``2X - X^2``, whichever brings the
    trace closer to ``n_occ`` (ties square). Stops once the trace is within
    ``tol`` of ``n_occ`` and ``Tr X - Tr X^2 <= tol``.
    """
    X = as_symmetric(H_prime, "H_prime")
    N = X.shape[0]
    if not 0 < n_occ < N:
        raise ValidationError(f"n_occ must lie in (0, {N}), got {n_occ}")
    k = _Kernel(PrecisionMode.DOUBLE, counter)
    for i in range(int(max_layers)):
        tr = float(np.trace(X))
        tr2 = float(np.sum(X * X))
        if abs(tr - n_occ) <= tol and tr - tr2 <= tol:
            return X
        Y = k.square(X)
        if abs(tr2 - n_occ) <= abs(2.0 * tr - tr2 - n_occ):
            X = Y
        else:
            X = 2.0 * X - Y
        _check(X, i)
    tr = float(np.trace(X))
    tr2 = float(np.sum(X * X))
    if abs(tr - n_occ) <= tol and tr - tr2 <= tol:
        return X
    raise NonConvergenceError(
        f"trace SP2 did not converge in {max_layers} layers "
        f"(|Tr X - n_occ| = {abs(tr - n_occ):.3e}, Tr X - Tr X^2 = {tr - tr2:.3e}); "
        "the gap may be closed")


@dataclass(frozen=True)
class DensityStatistics:
    trace: float
    trace_square: float


def density_statistics(D):
    """``Tr D`` and ``Tr D^2 = sum_ij D_ij^2`` (numpy pairwise summation)."""
    D = np.asarray(D, dtype=float)
    return DensityStatistics(float(np.sum(np.diag(D))), float(np.sum(D * D)))
