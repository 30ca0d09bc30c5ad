"""End-to-end density matrices from a library of trained models.

The chain is: Gershgorin bounds, flip and normalize, pick the cheapest
model whose validity region holds ``(beta', mu')``, rescale into that
model's coordinates, apply it as a matrix polynomial. Because the
normalization flips the spectrum, the model output is ``I - D``.
"""

from dataclasses import dataclass, field
import glob
import logging
import math
import os
from importlib import resources

import numpy as np

from .errors import (
    FlatDerivativeError,
    MissingEntropyModelError,
    NoValidModelError,
    ValidationError,
)
from .io import load_model
from .matrix import (
    MatmulCounter,
    PrecisionMode,
    apply_model,
    as_symmetric,
    density_statistics,
    in_region_of_validity,
    normalize_problem,
    rescale_to_model,
    spectral_bounds,
)
from .scalar import beta0_for_layer_count

log = logging.getLogger(__name__)

__all__ = [
    "ModelLibrary",
    "MuSolveReport",
    "ThermodynamicResult",
    "select_model",
    "compute_density_matrix",
    "newton_derivative",
    "solve_chemical_potential",
    "thermodynamics",
    "expectation",
    "minimal_model_for",
]

#: mu0 used when suggesting a model for uncovered parameters
SUGGESTED_MU0 = 1.0 / 3.0


class ModelLibrary:
    """Ordered, read-only-after-load collection of models."""

    def __init__(self, models=()):
        self._models = []
        for m in models:
            self.add(m)

    def add(self, m):
        self._models.append(m)
        return self

    def __iter__(self):
        return iter(self._models)

    def __len__(self):
        return len(self._models)

    def fermi_models(self):
        return [m for m in self._models if not m.is_entropy]

    def entropy_for(self, beta0, mu0):
        for m in self._models:
            if m.is_entropy and m.beta0 == beta0 and m.mu0 == mu0:
                return m
        return None

    @classmethod
    def from_paths(cls, paths):
        """Load every ``*.json`` model from files and directories in ``paths``."""
        lib = cls()
        for p in paths:
            if not p:
                continue
            if os.path.isdir(p):
                files = sorted(glob.glob(os.path.join(p, "*.json")))
            else:
                files = [p]
            for f in files:
                lib.add(load_model(f))
        return lib

    @classmethod
    def default(cls):
        """Packaged models followed by those on ``FERMIFORGE_MODEL_PATH``."""
        paths = [str(resources.files("fermiforge") / "data")]
        env = os.environ.get("FERMIFORGE_MODEL_PATH", "")
        paths.extend(p for p in env.split(os.pathsep) if p)
        return cls.from_paths(paths)


def _model_error(m):
    e = m.info.get("final_max_error")
    return math.inf if e is None else float(e)


def minimal_model_for(beta_prime, mu_prime, mu0=SUGGESTED_MU0):
    """Smallest ``(beta0, layers)`` on the ``4 (2 phi)^n`` ladder covering a query."""
    need = max(beta_prime * mu_prime / mu0, beta_prime * (1.0 - mu_prime) / (1.0 - mu0), 0.0)
    n = 1
    while beta0_for_layer_count(n) < need and n < 200:
        n += 1
    return beta0_for_layer_count(n), n


def select_model(lib, beta_prime, mu_prime):
    """Fewest-layer Fermi model whose region holds ``(beta', mu')``.

    Ties go to the smaller recorded max error, then to the earlier model.
    """
    if not len(lib):
        raise ValidationError("model library is empty")
    best = None
    for idx, m in enumerate(lib.fermi_models()):
        if not in_region_of_validity(beta_prime, mu_prime, m.beta0, m.mu0):
            continue
        key = (m.layers, _model_error(m), idx)
        if best is None or key < best[0]:
            best = (key, m)
    if best is None:
        beta0, n = minimal_model_for(beta_prime, mu_prime)
        raise NoValidModelError(
            f"no model covers beta'={beta_prime:.6g}, mu'={mu_prime:.6g}; a model at "
            f"beta0 >= {beta0:.6g}, mu0 = 1/3 ({n} layers) would",
            beta0_needed=beta0, layers_needed=n)
    return best[1]


def _prepare(H, beta, mu, lib, bounds=None):
    problem = normalize_problem(H, beta, mu, bounds)
    m = select_model(lib, problem.beta_prime, problem.mu_prime)
    return problem, m, rescale_to_model(problem, m.beta0, m.mu0)


def _provenance(problem, m, mode, counter):
    return {
        "eps_min": problem.bounds.eps_min,
        "eps_max": problem.bounds.eps_max,
        "beta_prime": problem.beta_prime,
        "mu_prime": problem.mu_prime,
        "model": {
            "architecture": m.architecture.value,
            "beta0": m.beta0,
            "mu0": m.mu0,
            "layers": m.layers,
            "final_max_error": m.info.get("final_max_error"),
            "source": m.info.get("source"),
        },
        "precision": mode.value,
        "matmuls": {"full": counter.full, "half": counter.half},
    }


def compute_density_matrix(H, beta, mu, lib, mode=PrecisionMode.DOUBLE, bounds=None,
                           counter=None):
    """Finite-temperature density matrix ``f(H; beta, mu)``.

    Returns
    -------
    D : ndarray
    provenance : dict
        Bounds, ``(beta', mu')``, the chosen model and the multiplication
        count.
    """
    mode = PrecisionMode.parse(mode)
    counter = counter if counter is not None else MatmulCounter()
    problem, m, H0 = _prepare(H, beta, mu, lib, bounds)
    F = apply_model(H0, m, mode, counter)
    D = np.eye(F.shape[0]) - F
    return D, _provenance(problem, m, mode, counter)


def newton_derivative(D, beta):
    """``d Tr D / d mu = beta (Tr D - Tr D^2)`` from the density alone."""
    st = density_statistics(D)
    return beta * (st.trace - st.trace_square)


@dataclass
class MuSolveReport:
    mu_final: float
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False
    steps: list = field(default_factory=list)
    bisection_steps: int = 0
    notes: list = field(default_factory=list)


def solve_chemical_potential(H, beta, n_occ, mu_guess, lib, tol=1e-8, max_iter=50,
                             mode=PrecisionMode.DOUBLE):
    """Newton iteration for ``Tr D(mu) = n_occ``.

    Each iteration evaluates one density matrix. Steps are capped at half
    the spectral width. When the derivative is flat, or a Newton step would
    leave the bracket established by earlier evaluations, the step bisects
    that bracket instead (or jumps half a width toward the root while one
    side is still unknown).

    Returns
    -------
    D : ndarray
        Density matrix at ``mu_final``.
    report : MuSolveReport
        ``iterations`` counts updates of mu; ``residual_history`` holds
        ``(mu, Tr D - n_occ)`` for every evaluation.
    """
    H = as_symmetric(H, "H")
    N = H.shape[0]
    if not 0 < n_occ < N:
        raise ValidationError(f"n_occ must lie in (0, {N}), got {n_occ}")
    if not math.isfinite(mu_guess):
        raise ValidationError("mu_guess must be finite")
    mode = PrecisionMode.parse(mode)
    bounds = spectral_bounds(H)
    width = bounds.width
    report = MuSolveReport(mu_final=float(mu_guess), iterations=0)
    lo, hi = -math.inf, math.inf
    mu = float(mu_guess)
    D = None
    for _ in range(int(max_iter) + 1):
        D, _prov = compute_density_matrix(H, beta, mu, lib, mode, bounds)
        st = density_statistics(D)
        g = st.trace - n_occ
        report.residual_history.append((mu, g))
        report.mu_final = mu
        if abs(g) <= tol:
            report.converged = True
            break
        if report.iterations >= max_iter:
            break
        if g < 0:
            lo = max(lo, mu)
        else:
            hi = min(hi, mu)
        deriv = beta * (st.trace - st.trace_square)
        try:
            if deriv < 1e-14 * beta * N:
                raise FlatDerivativeError(
                    f"d Tr D / d mu = {deriv:.3e} is flat at mu = {mu:.6g}; using bisection")
            step = -g / deriv
            step = max(-0.5 * width, min(0.5 * width, step))
            new = mu + step
            if not lo < new < hi:
                raise FlatDerivativeError("Newton step left the bracket; using bisection")
        except FlatDerivativeError as exc:
            report.notes.append(str(exc))
            report.bisection_steps += 1
            if math.isfinite(lo) and math.isfinite(hi):
                new = 0.5 * (lo + hi)
            elif g > 0:
                new = mu - 0.5 * width
            else:
                new = mu + 0.5 * width
        report.steps.append(new - mu)
        report.iterations += 1
        mu = new
    return D, report


@dataclass
class ThermodynamicResult:
    density: np.ndarray
    entropy_trace: float
    band_energy: float
    free_energy: float
    provenance: dict = field(default_factory=dict)


def expectation(D, A):
    """``Tr(D A)`` as ``sum_ij D_ij A_ij`` for symmetric operands."""
    D = np.asarray(D, dtype=float)
    A = np.asarray(A, dtype=float)
    if D.shape != A.shape or D.ndim != 2:
        raise ValidationError(f"dimension mismatch: {D.shape} vs {A.shape}")
    return float(np.sum(D * A))


def thermodynamics(H, beta, mu, lib, mode=PrecisionMode.DOUBLE):
    """Density, entropy trace, band energy and free energy at fixed ``mu``."""
    mode = PrecisionMode.parse(mode)
    H = as_symmetric(H, "H")
    counter = MatmulCounter()
    problem, m, H0 = _prepare(H, beta, mu, lib)
    em = lib.entropy_for(m.beta0, m.mu0)
    if em is None:
        raise MissingEntropyModelError(
            f"no entropy model for beta0={m.beta0!r}, mu0={m.mu0!r}; train one with "
            "the same training point")
    D = np.eye(H.shape[0]) - apply_model(H0, m, mode, counter)
    S = apply_model(H0, em, mode, counter)
    ent = float(np.trace(S))
    band = expectation(D, H - mu * np.eye(H.shape[0]))
    prov = _provenance(problem, m, mode, counter)
    prov["entropy_model"] = {"alpha": em.payload.alpha, "layers": em.layers,
                             "final_max_error": em.info.get("final_max_error")}
    return ThermodynamicResult(D, ent, band, band - ent / beta, prov)
