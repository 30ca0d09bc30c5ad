"""Scalar Fermi, entropy and SP2 building blocks.

Everything here acts elementwise on floats or numpy arrays. The matrix
code and the trainer reuse these definitions so that scalar and matrix
results agree to roundoff.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import entr

from .errors import DomainError, ValidationError

__all__ = [
    "INV_GOLDEN",
    "LN2",
    "ENTROPY_ALPHA",
    "FermiParams",
    "fermi",
    "fermi_derivative",
    "entropy_exact",
    "entropy_of_energy",
    "sp2_sign_sequence",
    "layer_count_exact",
    "layer_count_estimate",
    "beta0_for_layer_count",
    "step_composition_f1f0",
    "step_composition_derivative",
    "entropy_ansatz",
]

#: Inverse golden ratio, the fixed point of x -> 2x^2 - x^4.
INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
LN2 = math.log(2.0)
#: Input contraction that matches the entropy curvature at the peak.
ENTROPY_ALPHA = 1.0 / math.sqrt(2.0 * LN2)


@dataclass(frozen=True)
class FermiParams:
    """Inverse temperature and chemical potential of a Fermi function."""

    beta: float
    mu: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValidationError(f"beta must be finite and > 0, got {self.beta}")
        if not math.isfinite(self.mu):
            raise ValidationError(f"mu must be finite, got {self.mu}")


def _params(p, mu):
    if isinstance(p, FermiParams):
        return p.beta, p.mu
    return float(p), float(mu)


def fermi(x, p, mu=None):
    """Fermi function ``1 / (1 + exp(beta (x - mu)))``.

    ``p`` is either a :class:`FermiParams` or ``beta`` (then ``mu`` must be
    given). The exponential is always taken of a non-positive argument, so
    no overflow occurs for any finite input.
    """
    beta, mu = _params(p, mu)
    x = np.asarray(x, dtype=float)
    t = beta * (x - mu)
    e = np.exp(-np.abs(t))
    out = np.where(t > 0, e / (1.0 + e), 1.0 / (1.0 + e))
    return out[()] if out.ndim == 0 else out


def fermi_derivative(x, p, mu=None):
    """d/dx of :func:`fermi`, i.e. ``-beta f (1 - f)``."""
    beta, mu = _params(p, mu)
    x = np.asarray(x, dtype=float)
    # 1 - f(x) == f(2 mu - x), without cancellation
    out = -beta * fermi(x, beta, mu) * fermi(2.0 * mu - x, beta, mu)
    return out[()] if np.ndim(out) == 0 else out


def entropy_exact(y):
    """Occupation entropy ``-y ln y - (1-y) ln(1-y)`` with ``0 ln 0 = 0``."""
    y = np.asarray(y, dtype=float)
    if np.any(~np.isfinite(y)) or np.any((y < 0.0) | (y > 1.0)):
        raise DomainError("entropy is defined for occupations in [0, 1] only")
    out = entr(y) + entr(1.0 - y)
    return out[()] if out.ndim == 0 else out


def entropy_of_energy(x, p, mu=None):
    """Entropy of the Fermi occupation at energy ``x``.

    Uses ``s = ln(1 + e^-|t|) + |t| e^-|t| / (1 + e^-|t|)`` with
    ``t = beta (x - mu)``, which keeps full relative accuracy in the tails
    where ``entropy_exact(fermi(x))`` would cancel.
    """
    beta, mu = _params(p, mu)
    t = np.abs(beta * (np.asarray(x, dtype=float) - mu))
    e = np.exp(-t)
    out = np.log1p(e) + t * e / (1.0 + e)
    return out[()] if out.ndim == 0 else out


def sp2_sign_sequence(mu_prime, max_layers, tol=None):
    """Sign sequence of the chemical-potential driven SP2 recursion.

    Starting from ``mu_0 = mu_prime``, each step picks ``mu^2`` (sign +1)
    or ``2 mu - mu^2`` (sign -1), whichever lands closer to ``mu_prime``;
    exact ties square. Iteration stops after ``max_layers`` steps, or
    earlier once ``|mu_{i+1} - mu_prime| <= tol`` when ``tol`` is given.

    Returns
    -------
    signs : tuple of int
    trajectory : list of float
        ``mu_0, ..., mu_n`` (one longer than ``signs``).
    """
    if not 0.0 < mu_prime < 1.0:
        raise ValidationError(f"mu_prime must lie in (0, 1), got {mu_prime}")
    signs = []
    traj = [float(mu_prime)]
    m = float(mu_prime)
    for _ in range(int(max_layers)):
        sq = m * m
        other = 2.0 * m - sq
        if abs(sq - mu_prime) <= abs(other - mu_prime):
            signs.append(1)
            m = sq
        else:
            signs.append(-1)
            m = other
        traj.append(m)
        if tol is not None and abs(m - mu_prime) <= tol:
            break
    return tuple(signs), traj


def layer_count_exact(beta_prime):
    """Real-valued layer estimate ``ln(beta'/4) / ln(2 * INV_GOLDEN)``."""
    return math.log(beta_prime / 4.0) / math.log(2.0 * INV_GOLDEN)


def layer_count_estimate(beta_prime):
    """Number of SP2-like layers whose slope at the step matches ``beta'/4``.

    Rounds the closed form ``4.7 ln(beta') - 6.5`` half away from zero and
    clamps to at least one layer. The fitted constants track
    :func:`layer_count_exact` to within 0.15 layers for n <= 40 and place
    beta' = 308.3 (exact value 20.5005) at 20 layers.
    """
    if not beta_prime > 0:
        raise ValidationError("beta_prime must be positive")
    est = 4.7 * math.log(beta_prime) - 6.5
    n = int(math.floor(abs(est) + 0.5)) * (1 if est >= 0 else -1)
    return max(n, 1)


def beta0_for_layer_count(n):
    """Training inverse temperature ``4 (2 * INV_GOLDEN)^n`` for ``n`` layers.

    Pair it with ``mu0 = 1/3`` to serve every ``0 < beta' <= 2/3 beta0``.
    """
    if n < 1:
        raise ValidationError("layer count must be >= 1")
    return 4.0 * (2.0 * INV_GOLDEN) ** n


def _f1f0(x):
    x2 = x * x
    return 2.0 * x2 - x2 * x2


def step_composition_f1f0(x, n):
    """Apply ``F(x) = 2 x^2 - x^4`` (square, then ``2y - y^2``) ``n`` times."""
    x = np.asarray(x, dtype=float)
    for _ in range(int(n)):
        x = _f1f0(x)
    return x[()] if x.ndim == 0 else x


def step_composition_derivative(x, n_maps):
    """Value and derivative of ``n_maps`` alternating maps ``f0, f1, f0, ...``.

    Forward-mode chain rule over the individual quadratics ``f0 = x^2`` and
    ``f1 = 2x - x^2`` (so an even ``n_maps`` equals ``n_maps/2`` applications
    of :func:`step_composition_f1f0`).
    """
    v = float(x)
    dv = 1.0
    for i in range(int(n_maps)):
        if i % 2 == 0:
            v, dv = v * v, 2.0 * v * dv
        else:
            v, dv = 2.0 * v - v * v, (2.0 - 2.0 * v) * dv
    return v, dv


def entropy_ansatz(x, fermi_like, alpha=ENTROPY_ALPHA, mu=0.5):
    """Untrained entropy approximation ``4 ln2 * y (1 - y)``.

    ``y(x) = fermi_like(alpha (x - mu) + mu)`` where ``fermi_like`` is any
    callable approximating the Fermi function centred at ``mu`` (the exact
    one, or a trained model's evaluator).
    """
    if not 0.0 < alpha < 1.0:
        raise ValidationError("alpha must lie in (0, 1)")
    z = alpha * (np.asarray(x, dtype=float) - mu) + mu
    y = np.asarray(fermi_like(z), dtype=float)
    out = 4.0 * LN2 * y * (1.0 - y)
    return out[()] if out.ndim == 0 else out
