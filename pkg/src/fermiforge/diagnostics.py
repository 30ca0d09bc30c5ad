"""Validity heatmaps, benchmark timings and random test matrices."""

from dataclasses import dataclass
import time

import numpy as np
from scipy.stats import ortho_group

from .errors import DivergedEvaluationError
from .matrix import (
    MatmulCounter,
    PrecisionMode,
    apply_model,
    in_region_of_validity,
    normalize_problem,
    rescale_to_model,
    spectral_bounds,
)
from .models import evaluate_model
from .oracle import exact_density_matrix, jacobi_eigendecomposition
from .scalar import fermi

__all__ = [
    "HeatmapCell",
    "validity_heatmap",
    "BenchRow",
    "run_benchmark",
    "random_hamiltonian",
    "random_orthogonal",
    "BENCH_NOTE",
]

BENCH_NOTE = ("note: CPU timings only. GPU tensor-core speedups over a vendor "
              "eigensolver (16x / 9x) are not reproduced or claimed here.")


def random_orthogonal(n, rng):
    if n == 1:
        return np.ones((1, 1))
    return ortho_group.rvs(n, random_state=rng)


def random_hamiltonian(n, rng, spread=1.0):
    """Symmetric matrix with eigenvalues uniform in ``[-spread, spread]``."""
    Q = random_orthogonal(n, rng)
    vals = rng.uniform(-spread, spread, size=n)
    H = (Q * vals) @ Q.T
    return 0.5 * (H + H.T)


@dataclass(frozen=True)
class HeatmapCell:
    beta_prime: float
    mu_prime: float
    max_error: float
    in_region: bool


def _probe_points(beta_prime, mu_prime, n):
    xs = np.linspace(0.0, 1.0, n)
    near = mu_prime + np.linspace(-10.0, 10.0, 401) / beta_prime
    return np.unique(np.concatenate([xs, np.clip(near, 0.0, 1.0)]))


def validity_heatmap(m, beta_max=None, grid=(50, 50), probe=2001):
    """Scalar error of ``m`` served at normalized ``(beta', mu')`` cells.

    For each cell the model is evaluated at ``x0 = (beta'/beta0)(x' - mu') + mu0``
    over probe points ``x'`` in [0, 1] and compared with
    ``fermi(x'; beta', mu')``. ``beta'`` runs over ``beta_max * (i + 1) / W``
    and ``mu'`` over ``(j + 1/2) / H``. Diverging cells report ``inf``.
    """
    W, Hn = grid
    if beta_max is None:
        beta_max = 2.0 * m.beta0
    cells = []
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(W):
            bp = beta_max * (i + 1) / W
            for j in range(Hn):
                mp = (j + 0.5) / Hn
                x = _probe_points(bp, mp, probe)
                x0 = (bp / m.beta0) * (x - mp) + m.mu0
                try:
                    err = np.abs(evaluate_model(m, x0) - fermi(x, bp, mp))
                    e = float(np.max(err)) if np.all(np.isfinite(err)) else np.inf
                except DivergedEvaluationError:
                    e = np.inf
                cells.append(HeatmapCell(bp, mp, e, in_region_of_validity(bp, mp, m.beta0, m.mu0)))
    return cells


@dataclass(frozen=True)
class BenchRow:
    size: int
    precision: str
    apply_seconds: float
    full_matmuls: int
    half_matmuls: int
    jacobi_seconds: float
    lapack_seconds: float
    error_2norm: float


def _bench_problem(n, m, rng):
    H = random_hamiltonian(n, rng)
    b = spectral_bounds(H)
    mu = 0.5 * (b.eps_min + b.eps_max)
    # largest beta' at mu' = 1/2 that the model serves, with a safety factor
    beta_prime = 0.9 * 2.0 * m.beta0 * min(m.mu0, 1.0 - m.mu0)
    return H, beta_prime / b.width, mu, b


def run_benchmark(sizes, m, precisions=(PrecisionMode.DOUBLE,), seed=0):
    """Time model application against diagonalization for each size.

    The Hamiltonian for each size is random with ``mu`` at the centre of
    its Gershgorin interval and ``beta`` chosen near the model's limit.
    """
    rng = np.random.default_rng(seed)
    rows = []
    jacobi_eigendecomposition(np.eye(2) + 0.1)  # compile outside the timings
    for n in sizes:
        H, beta, mu, bounds = _bench_problem(int(n), m, rng)
        t = time.perf_counter()
        eig = jacobi_eigendecomposition(H)
        ref = exact_density_matrix(H, beta, mu, eig)
        t_jac = time.perf_counter() - t
        t = time.perf_counter()
        np.linalg.eigh(H)
        t_lapack = time.perf_counter() - t
        problem = normalize_problem(H, beta, mu, bounds)
        H0 = rescale_to_model(problem, m.beta0, m.mu0)
        for prec in precisions:
            prec = PrecisionMode.parse(prec)
            counter = MatmulCounter()
            t = time.perf_counter()
            F = apply_model(H0, m, prec, counter)
            t_apply = time.perf_counter() - t
            D = np.eye(n) - F
            err = float(np.linalg.norm(D - ref, 2))
            rows.append(BenchRow(int(n), prec.value, t_apply, counter.full, counter.half,
                                 t_jac, t_lapack, err))
    return rows
