"""Weighted nonlinear least-squares fitting of SP2-family models.

The optimizer is Levenberg-Marquardt with Marquardt diagonal scaling and an
optional geodesic-acceleration correction. Jacobians are exact: each
architecture has a hand-written reverse sweep through its recursion, which
costs about one extra forward pass regardless of the parameter count.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import logging
import math
import time

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .embed import embed
from .errors import DivergedEvaluationError, SingularSystemError, ValidationError
from .models import (
    Architecture,
    EntropyModelCoefficients,
    Mlsp2Coefficients,
    ModelCoefficients,
    evaluate_model,
    sp2_model,
)
from .scalar import (
    ENTROPY_ALPHA,
    FermiParams,
    INV_GOLDEN,
    LN2,
    entropy_of_energy,
    fermi,
    fermi_derivative,
    layer_count_estimate,
)

log = logging.getLogger(__name__)

__all__ = [
    "Weighting",
    "Target",
    "TrainingConfig",
    "SampleSet",
    "FitReport",
    "LeastSquaresProblem",
    "build_samples",
    "evaluation_grid",
    "max_error",
    "residual_and_jacobian",
    "levenberg_marquardt",
    "train_fermi",
    "train_entropy",
    "TRAINABLE",
]

TRAINABLE = (Architecture.MLSP2, Architecture.MLSP2_COMPACT,
             Architecture.MAXSP2, Architecture.SKIPSP2)

#: weight of the residual tying a free entropy alpha to its ansatz value
ALPHA_TIE = 1e-3


class Weighting(str, Enum):
    UNIFORM = "uniform"
    DERIVATIVE = "derivative"
    ARCLENGTH = "arclength"


class Target(str, Enum):
    FERMI = "fermi"
    ENTROPY = "entropy"


@dataclass(frozen=True)
class TrainingConfig:
    """Controls for one training run.

    ``layers = 0`` resolves to ``layer_count_estimate(beta0) + layer_margin``.
    ``minimax_passes`` extra rounds of reweighted fitting push the least
    squares solution toward the smallest maximum error; set it to 0 for a
    plain weighted least-squares fit.
    """

    beta0: float
    mu0: float
    architecture: Architecture = Architecture.MLSP2
    layers: int = 0
    layer_margin: int = 2
    sample_count: int = 20000
    weighting: Weighting = Weighting.DERIVATIVE
    sampling: str = "golden"
    seed: int = 0
    max_iterations: int = 3000
    residual_tolerance: float = 1e-12
    lm_initial_damping: float = 1e-3
    geodesic_acceleration: bool = True
    geodesic_alpha_ratio: float = 0.75
    minimax_passes: int = 4
    minimax_iterations: int = 300
    max_error_ceiling: float = 1e-4
    fix_constant_term: bool = False
    skip_depth: int = 1
    accumulators: int = 1
    allow_untrainable: bool = False

    def __post_init__(self):
        FermiParams(self.beta0, self.mu0)
        if not 0.0 < self.mu0 < 1.0:
            raise ValidationError("mu0 must lie in (0, 1)")
        object.__setattr__(self, "architecture", Architecture.parse(self.architecture))
        try:
            w = Weighting(str(getattr(self.weighting, "value", self.weighting)).lower())
        except ValueError:
            raise ValidationError(f"unknown weighting {self.weighting!r}") from None
        object.__setattr__(self, "weighting", w)
        if self.sampling not in ("golden", "grid"):
            raise ValidationError("sampling must be 'golden' or 'grid'")
        if self.layers < 0 or self.layer_margin < 0:
            raise ValidationError("layers and layer_margin must be >= 0")
        if self.sample_count < 2:
            raise ValidationError("sample_count must be >= 2")
        if self.max_iterations < 0 or self.minimax_passes < 0 or self.minimax_iterations < 0:
            raise ValidationError("iteration counts must be >= 0")
        for name in ("residual_tolerance", "geodesic_alpha_ratio", "max_error_ceiling"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if self.lm_initial_damping < 0:
            raise ValidationError("lm_initial_damping must be >= 0")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")

    @property
    def params(self):
        return FermiParams(self.beta0, self.mu0)

    def resolved_layers(self):
        if self.layers:
            return int(self.layers)
        return layer_count_estimate(self.beta0) + self.layer_margin


@dataclass(frozen=True)
class SampleSet:
    xs: np.ndarray
    targets: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = len(self.xs)
        if len(self.targets) != n or len(self.weights) != n:
            raise ValidationError("sample arrays must have equal lengths")
        if n > 1 and np.any(np.diff(self.xs) <= 0):
            raise ValidationError("sample points must be strictly increasing")
        if np.any(self.weights < 0):
            raise ValidationError("weights must be non-negative")

    def __len__(self):
        return len(self.xs)


@dataclass
class FitReport:
    final_max_error: float
    final_rms_error: float
    iterations: int
    converged: bool
    initial_max_error: float
    accepted_steps: int = 0
    stop_reason: str = ""
    cost_history: list = field(default_factory=list, repr=False)
    elapsed: float = 0.0
    layers: int = 0
    sample_count: int = 0

    def summary(self):
        flag = "converged" if self.converged else "NOT converged"
        return (f"{flag}: max error {self.final_max_error:.3e} "
                f"(initial {self.initial_max_error:.3e}), rms {self.final_rms_error:.3e}, "
                f"{self.iterations} iterations, {self.elapsed:.1f} s")


# --------------------------------------------------------------------------
# sampling

def _target_values(x, beta, mu, target):
    if target is Target.ENTROPY:
        return entropy_of_energy(x, beta, mu)
    return fermi(x, beta, mu)


def _target_slope(x, beta, mu, target):
    if target is Target.ENTROPY:
        # ds/dx = f' * beta (x - mu)
        return fermi_derivative(x, beta, mu) * beta * (x - mu)
    return fermi_derivative(x, beta, mu)


def _density(x, beta, mu, weighting, target):
    if weighting is Weighting.UNIFORM:
        return np.ones_like(x)
    slope = _target_slope(x, beta, mu, target)
    if weighting is Weighting.DERIVATIVE:
        return 1.0 + np.abs(slope)
    return np.sqrt(1.0 + slope * slope)


def _inverse_cdf_points(u, beta, mu, weighting, target):
    width = min(60.0 / beta, 1.0)
    fine = np.concatenate([np.linspace(0.0, 1.0, 20001),
                           np.clip(mu + np.linspace(-width, width, 20001), 0.0, 1.0)])
    fine = np.unique(fine)
    cdf = cumulative_trapezoid(_density(fine, beta, mu, weighting, target), fine, initial=0.0)
    cdf /= cdf[-1]
    return np.interp(u, cdf, fine)


def build_samples(cfg, target=Target.FERMI):
    """Deterministic training points for ``cfg``.

    ``golden`` sampling pushes the additive golden-ratio sequence (with a
    seed-derived offset) through the inverse CDF of the weighting density,
    so every sample carries unit weight. ``grid`` sampling takes uniformly
    spaced points and puts the density into the weights instead. Both pin
    ``x = 0`` and ``x = 1``.
    """
    target = Target(target)
    n = cfg.sample_count
    beta, mu = cfg.beta0, cfg.mu0
    if cfg.sampling == "grid":
        xs = np.linspace(0.0, 1.0, n)
        w = _density(xs, beta, mu, cfg.weighting, target)
    else:
        offset = np.random.default_rng(cfg.seed).random()
        u = np.mod(offset + INV_GOLDEN * np.arange(1, n - 1), 1.0)
        inner = _inverse_cdf_points(u, beta, mu, cfg.weighting, target)
        xs = np.unique(np.concatenate([[0.0], inner, [1.0]]))
        w = np.ones_like(xs)
    w = w * (len(xs) / w.sum())
    return SampleSet(xs, _target_values(xs, beta, mu, target), w)


def evaluation_grid(beta0, mu0, n=100000, target=Target.FERMI):
    """Dense check grid: ``n + 1`` uniform points joined with ``n``
    derivative-weighted ones."""
    cfg = TrainingConfig(beta0, mu0, sample_count=n, weighting=Weighting.DERIVATIVE)
    weighted = build_samples(cfg, target).xs
    return np.unique(np.concatenate([np.linspace(0.0, 1.0, n + 1), weighted]))


def max_error(m, grid=None, target=None):
    """Max and RMS deviation of ``m`` from its exact target on a dense grid."""
    if target is None:
        target = Target.ENTROPY if m.is_entropy else Target.FERMI
    if grid is None:
        grid = evaluation_grid(m.beta0, m.mu0, target=target)
    err = evaluate_model(m, grid) - _target_values(grid, m.beta0, m.mu0, Target(target))
    return float(np.max(np.abs(err))), float(np.sqrt(np.mean(err * err)))


# --------------------------------------------------------------------------
# exact Jacobians (reverse sweeps)

def _jac_mlsp2(p, x0):
    out, xs = p.forward(x0, keep=True)
    n = p.n_layers
    J = np.empty((x0.size, 4 * n))
    g = np.ones_like(x0)
    for i in range(n - 1, -1, -1):
        a, b, c, d = p.layers[i]
        xi = xs[i]
        J[:, 4 * i] = g * xi * xi
        J[:, 4 * i + 1] = g * xi
        J[:, 4 * i + 2] = g
        J[:, 4 * i + 3] = xi
        g = d + g * (2.0 * a * xi + b)
    return out, J, g


def _jac_compact(p, x0):
    out, xs = p.forward(x0, keep=True)
    n = p.n_layers
    J = np.empty((x0.size, 2 * n + 2))
    J[:, 2 * n] = 1.0
    J[:, 2 * n + 1] = xs[n]
    g = p.final[1] + 0.0 * x0
    for i in range(n - 1, -1, -1):
        t, u = p.pairs[i]
        e = 2.0 * g * (t + xs[i])
        J[:, 2 * i] = e
        J[:, 2 * i + 1] = xs[i]
        g = u + e
    return out, J, g


def _jac_max(p, x0):
    out, xs, zs = p.forward(x0, keep=True)
    n = p.n_layers
    rows, cols = np.tril_indices(n)
    tri = {(i, j): k for k, (i, j) in enumerate(zip(rows, cols))}
    m = len(rows)
    J = np.empty((x0.size, n + m + n + 2))
    xbar = [p.gamma[i] + 0.0 * x0 for i in range(n + 1)]
    for i in range(n - 1, -1, -1):
        e = 2.0 * zs[i] * xbar[i + 1]
        J[:, i] = e
        for j in range(i + 1):
            J[:, n + tri[i, j]] = e * xs[j]
            xbar[j] = xbar[j] + e * p.theta[i, j]
    for i in range(n + 1):
        J[:, n + m + i] = xs[i]
    J[:, -1] = 1.0
    return out, J


def _jac_skip(p, x0):
    out, xs, zs, accs = p.forward(x0, keep=True)
    n, k, K = p.n_layers, p.skip_depth, p.accumulators
    na = n * (k + 1)
    nb = na + n * K
    ng = nb + n * K
    J = np.empty((x0.size, ng + 1 + K))
    xbar = [0.0 * x0 for _ in range(n + 1)]
    xbar[n] = p.gamma_out + 0.0 * x0
    abar = [(1.0 if l == 0 else 0.0) + 0.0 * x0 for l in range(K)]
    for i in range(n - 1, -1, -1):
        # abar holds d out / d A_{i+1}; xbar[i+1] is complete
        for l in range(K):
            J[:, nb + i * K + l] = abar[l] * xs[i]
            xbar[i] = xbar[i] + abar[l] * p.gamma[i, l]
        e = 2.0 * zs[i] * xbar[i + 1]
        J[:, i * (k + 1) + k] = e
        for j in range(k):
            col = i * (k + 1) + j
            if i - j >= 0:
                J[:, col] = e * xs[i - j]
                xbar[i - j] = xbar[i - j] + e * p.alpha[i, j]
            else:
                J[:, col] = 0.0
        for l in range(K):
            J[:, na + i * K + l] = e * accs[i][l]
            abar[l] = abar[l] + e * p.beta[i, l]
    J[:, ng] = xs[n]
    for l in range(K):
        J[:, ng + 1 + l] = abar[l]
    return out, J


def _jac_arb(p, x0):
    n = p.n_layers
    xs = [x0]
    lefts, rights = [], []
    for i in range(n):
        left = p.delta[i] + sum(p.phi[i, j] * xs[j] for j in range(i + 1))
        right = p.delta2[i] + sum(p.psi[i, j] * xs[j] for j in range(i + 1))
        lefts.append(left)
        rights.append(right)
        xs.append(left * right)
        if not np.all(np.isfinite(xs[-1])):
            raise DivergedEvaluationError(i)
    out = p.offset + sum(g * x for g, x in zip(p.gamma, xs))
    rows, cols = np.tril_indices(n)
    m = len(rows)
    tri = {(i, j): k for k, (i, j) in enumerate(zip(rows, cols))}
    J = np.empty((x0.size, 2 * n + 2 * m + n + 2))
    xbar = [p.gamma[i] + 0.0 * x0 for i in range(n + 1)]
    for i in range(n - 1, -1, -1):
        eL = xbar[i + 1] * rights[i]
        eR = xbar[i + 1] * lefts[i]
        J[:, i] = eL
        J[:, n + i] = eR
        for j in range(i + 1):
            J[:, 2 * n + tri[i, j]] = eL * xs[j]
            J[:, 2 * n + m + tri[i, j]] = eR * xs[j]
            xbar[j] = xbar[j] + eL * p.phi[i, j] + eR * p.psi[i, j]
    for i in range(n + 1):
        J[:, 2 * n + 2 * m + i] = xs[i]
    J[:, -1] = 1.0
    return out, J


def _jac_entropy(p, x):
    z = p.inner_input(x)
    y, Jy, g0 = _jac_mlsp2(p.inner, z)
    ds = 4.0 * LN2 * (1.0 - 2.0 * y)
    out = 4.0 * LN2 * y * (1.0 - y)
    dalpha = -(x - p.mu0) * g0
    return out, np.column_stack([Jy * ds[:, None], dalpha * ds])


def _raw_jacobian(m, xs):
    arch, p = m.architecture, m.payload
    if arch is Architecture.MLSP2:
        out, J, _ = _jac_mlsp2(p, 1.0 - xs)
    elif arch is Architecture.MLSP2_COMPACT:
        out, J, _ = _jac_compact(p, 1.0 - xs)
    elif arch is Architecture.MAXSP2:
        out, J = _jac_max(p, 1.0 - xs)
    elif arch is Architecture.SKIPSP2:
        out, J = _jac_skip(p, 1.0 - xs)
    elif arch is Architecture.ARBSP2:
        out, J = _jac_arb(p, 1.0 - xs)
    elif arch is Architecture.ENTROPY:
        out, J = _jac_entropy(p, xs)
    else:
        raise ValidationError(f"{arch.value} has no trainable parameters")
    return out, J


def residual_and_jacobian(m, s, allow_untrainable=False):
    """Weighted residuals ``sqrt(w) (model - target)`` and their exact Jacobian.

    Columns follow ``m.payload.to_vector()``.
    """
    if m.architecture is Architecture.ARBSP2 and not allow_untrainable:
        raise ValidationError("architecture not trainable by default: arbsp2")
    sw = np.sqrt(s.weights)
    out, J = _raw_jacobian(m, s.xs)
    r = sw * (out - s.targets)
    J *= sw[:, None]
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(J))):
        raise DivergedEvaluationError(-1)
    return r, J


# --------------------------------------------------------------------------
# optimizer

class LeastSquaresProblem:
    """Residual provider for :func:`levenberg_marquardt`.

    ``fun(p)`` returns ``(r, J)``; ``residual(p)``, if given, returns ``r``
    alone and is used for trial steps.
    """

    def __init__(self, fun, residual=None):
        self.fun = fun
        self._residual = residual

    def residual(self, p):
        if self._residual is not None:
            return self._residual(p)
        return self.fun(p)[0]

    def __call__(self, p):
        return self.fun(p)


def _safe_residual(problem, p):
    try:
        r = problem.residual(p)
    except (DivergedEvaluationError, ValidationError, FloatingPointError):
        return None
    r = np.asarray(r, dtype=float)
    return r if np.all(np.isfinite(r)) else None


def levenberg_marquardt(problem, init, cfg, max_iterations=None):
    """Minimize ``|r(p)|^2`` from ``init``.

    Parameters
    ----------
    problem : LeastSquaresProblem or callable returning ``(r, J)``
    init : array_like
    cfg : TrainingConfig or any object with ``lm_initial_damping``,
        ``geodesic_acceleration``, ``geodesic_alpha_ratio``,
        ``residual_tolerance`` and ``max_iterations``.
    max_iterations : int, optional
        Overrides ``cfg.max_iterations``. Every trial step counts.

    Returns
    -------
    p : ndarray
    report : FitReport
        Here ``final_max_error`` is the max absolute residual.
    """
    if not isinstance(problem, LeastSquaresProblem):
        problem = LeastSquaresProblem(problem)
    p = np.array(init, dtype=float)
    if not np.all(np.isfinite(p)):
        raise ValidationError("initial parameters must be finite")
    budget = cfg.max_iterations if max_iterations is None else int(max_iterations)
    lam = float(cfg.lm_initial_damping)
    t0 = time.perf_counter()

    r, J = problem(p)
    cost = float(r @ r)
    if not math.isfinite(cost):
        raise DivergedEvaluationError(-1)
    initial_max = float(np.max(np.abs(r))) if r.size else 0.0
    history = [cost]
    it = accepted = 0
    reason = "max_iterations"
    tol2 = cfg.residual_tolerance ** 2

    while True:
        if cost <= tol2:
            reason = "residual_tolerance"
            break
        if it >= budget:
            break
        JtJ = J.T @ J
        grad = J.T @ r
        diag = np.diag(JtJ).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(initial=0.0), 1e-300))
        it += 1
        try:
            factor = cho_factor(JtJ + lam * np.diag(diag), check_finite=False)
            v = -cho_solve(factor, grad, check_finite=False)
        except LinAlgError:
            if lam > 1e16:
                raise SingularSystemError("normal equations singular at every damping level")
            lam = 1e-3 if lam == 0.0 else lam * 3.0
            continue
        if not np.all(np.isfinite(v)):
            lam = 1e-3 if lam == 0.0 else lam * 3.0
            continue
        if np.linalg.norm(v) <= 1e-15 * (np.linalg.norm(p) + 1e-15):
            reason = "step_underflow"
            break
        step = v
        if cfg.geodesic_acceleration:
            h = 0.1
            rh = _safe_residual(problem, p + h * v)
            if rh is not None:
                rpp = (2.0 / h) * ((rh - r) / h - J @ v)
                a = -cho_solve(factor, J.T @ rpp, check_finite=False)
                if 2.0 * np.linalg.norm(a) <= cfg.geodesic_alpha_ratio * np.linalg.norm(v):
                    step = v + 0.5 * a
        trial = p + step
        rn = _safe_residual(problem, trial)
        cn = float(rn @ rn) if rn is not None else math.inf
        if cn < cost:
            p = trial
            accepted += 1
            lam = lam / 2.0
            r, J = problem(p)
            cost = float(r @ r)
            history.append(cost)
        else:
            lam = 1e-3 if lam == 0.0 else lam * 3.0
            if lam > 1e16:
                reason = "damping_limit"
                break

    converged = reason in ("residual_tolerance", "step_underflow", "damping_limit")
    report = FitReport(
        final_max_error=float(np.max(np.abs(r))) if r.size else 0.0,
        final_rms_error=float(math.sqrt(cost / max(r.size, 1))),
        iterations=it,
        converged=converged,
        initial_max_error=initial_max,
        accepted_steps=accepted,
        stop_reason=reason,
        cost_history=history,
        elapsed=time.perf_counter() - t0,
    )
    return p, report


# --------------------------------------------------------------------------
# training drivers

def _free_mask(m, fix_constant_term, freeze_alpha=False):
    size = m.payload.to_vector().size
    mask = np.ones(size, dtype=bool)
    if freeze_alpha and m.architecture is Architecture.ENTROPY:
        mask[-1] = False
    if not fix_constant_term:
        return mask
    if m.architecture is Architecture.MLSP2:
        mask[2::4] = False
    elif m.architecture is Architecture.ENTROPY:
        mask[2:-1:4] = False
    else:
        raise ValidationError("fix_constant_term applies to MLSP2 and entropy models only")
    return mask


def _fit(m, samples, cfg, iterations, freeze_alpha=False):
    """Run LM on the free parameters of ``m`` against ``samples``.

    A free entropy ``alpha`` gets one extra residual
    ``ALPHA_TIE * (alpha - ENTROPY_ALPHA)``: the data barely constrain it,
    and without the tie it drifts toward 1 while the inner network
    compensates.
    """
    full = m.payload.to_vector()
    mask = _free_mask(m, cfg.fix_constant_term, freeze_alpha)
    allow = cfg.allow_untrainable
    tie = m.architecture is Architecture.ENTROPY and mask[-1]

    def unpack(q):
        v = full.copy()
        v[mask] = q
        return m.with_payload(m.payload.from_vector(v))

    def fun(q):
        mm = unpack(q)
        r, J = residual_and_jacobian(mm, samples, allow)
        J = J[:, mask]
        if tie:
            row = np.zeros((1, J.shape[1]))
            row[0, -1] = ALPHA_TIE
            r = np.append(r, ALPHA_TIE * (mm.payload.alpha - ENTROPY_ALPHA))
            J = np.vstack([J, row])
        return r, J

    def residual(q):
        mm = unpack(q)
        r = np.sqrt(samples.weights) * (evaluate_model(mm, samples.xs) - samples.targets)
        if tie:
            r = np.append(r, ALPHA_TIE * (mm.payload.alpha - ENTROPY_ALPHA))
        return r

    q, rep = levenberg_marquardt(LeastSquaresProblem(fun, residual), full[mask], cfg, iterations)
    return unpack(q), rep


def _train(m, samples, cfg, target):
    t0 = time.perf_counter()
    grid = evaluation_grid(cfg.beta0, cfg.mu0, target=target)
    init_err = max_error(m, grid, target)[0]
    n_par = int(_free_mask(m, cfg.fix_constant_term).sum())
    if len(samples) < 10 * n_par:
        raise ValidationError(
            f"{len(samples)} samples for {n_par} parameters; need at least {10 * n_par}")

    # alpha and the inner network are nearly redundant; fitting them jointly
    # from the ansatz drives alpha onto its bound, so alpha joins later
    m, rep = _fit(m, samples, cfg, cfg.max_iterations, freeze_alpha=True)
    iterations, accepted, history = rep.iterations, rep.accepted_steps, list(rep.cost_history)
    reason = rep.stop_reason
    log.info("least squares: %s after %d iterations", reason, iterations)

    # Lawson-style reweighting toward the minimax fit; keep the best pass
    best = (max_error(m, grid, target)[0], m)
    w = samples.weights.copy()
    for k in range(cfg.minimax_passes):
        err = np.abs(evaluate_model(m, samples.xs) - samples.targets)
        top = err.max()
        if top == 0.0:
            break
        w = w * np.sqrt(err / top)
        w *= len(w) / w.sum()
        w = np.maximum(w, 1e-3)
        reweighted = SampleSet(samples.xs, samples.targets, w)
        m, rep = _fit(m, reweighted, cfg, cfg.minimax_iterations)
        iterations += rep.iterations
        accepted += rep.accepted_steps
        e = max_error(m, grid, target)[0]
        log.info("minimax pass %d: max error %.3e", k, e)
        if e < best[0]:
            best = (e, m)
    m = _snap_small_accumulators(best[1])
    final_max, final_rms = max_error(m, grid, target)
    report = FitReport(
        final_max_error=final_max,
        final_rms_error=final_rms,
        iterations=iterations,
        converged=final_max <= cfg.max_error_ceiling,
        initial_max_error=init_err,
        accepted_steps=accepted,
        stop_reason=reason,
        cost_history=history,
        elapsed=time.perf_counter() - t0,
        layers=m.layers,
        sample_count=len(samples),
    )
    m = m.with_payload(m.payload, **_training_info(cfg, report))
    return m, report


def _snap_small_accumulators(m):
    """Zero MLSP2 accumulator weights below 1e-8 so scalar evaluation matches
    the matrix path, which skips them."""
    if m.architecture is Architecture.MLSP2:
        L = m.payload.layers.copy()
        small = np.abs(L[:, 3]) < 1e-8
        if small.any():
            L[small, 3] = 0.0
            return m.with_payload(Mlsp2Coefficients(L))
    elif m.architecture is Architecture.ENTROPY:
        L = m.payload.inner.layers.copy()
        small = np.abs(L[:, 3]) < 1e-8
        if small.any():
            L[small, 3] = 0.0
            p = m.payload
            return m.with_payload(EntropyModelCoefficients(Mlsp2Coefficients(L), p.alpha, p.mu0))
    return m


def _training_info(cfg, report):
    return {
        "seed": cfg.seed,
        "sample_count": report.sample_count,
        "weighting": cfg.weighting.value,
        "final_max_error": report.final_max_error,
        "iterations": report.iterations,
    }


def initial_model(cfg):
    """SP2 truncated to the resolved depth, embedded into ``cfg.architecture``."""
    n = cfg.resolved_layers()
    base = sp2_model(cfg.beta0, cfg.mu0, n)
    arch = cfg.architecture
    if arch is Architecture.ARBSP2:
        rng = np.random.default_rng(cfg.seed)
        gauge = rng.uniform(0.9, 1.1, size=n)
        gauge[gauge == 1.0] = 1.05
        return embed(base, arch, gauge=gauge)
    return embed(base, arch, skip_depth=cfg.skip_depth, accumulators=cfg.accumulators)


def train_fermi(cfg, init=None):
    """Fit a Fermi model at ``(cfg.beta0, cfg.mu0)``.

    Parameters
    ----------
    cfg : TrainingConfig
    init : ModelCoefficients, optional
        Warm start; defaults to the embedded SP2 sequence.

    Returns
    -------
    model : ModelCoefficients
    report : FitReport
        ``converged`` is false when the dense-grid max error exceeds
        ``cfg.max_error_ceiling``; the model is still returned.
    """
    arch = cfg.architecture
    if arch not in TRAINABLE and not (arch is Architecture.ARBSP2 and cfg.allow_untrainable):
        raise ValidationError(f"architecture not trainable by default: {arch.value}")
    m = initial_model(cfg) if init is None else init
    if m.architecture is not arch:
        m = embed(m, arch, skip_depth=cfg.skip_depth, accumulators=cfg.accumulators)
    samples = build_samples(cfg, Target.FERMI)
    return _train(m, samples, cfg, Target.FERMI)


def entropy_initial_model(base, alpha=ENTROPY_ALPHA):
    if base.architecture is Architecture.MLSP2_COMPACT or base.architecture is Architecture.SP2:
        base = embed(base, Architecture.MLSP2)
    if base.architecture is not Architecture.MLSP2:
        raise ValidationError("entropy models are built on an MLSP2 base")
    payload = EntropyModelCoefficients(base.payload, alpha, base.mu0)
    return ModelCoefficients(Architecture.ENTROPY, payload, base.beta0, base.mu0)


def train_entropy(cfg, base):
    """Fit an entropy model whose inner network starts from ``base``.

    ``alpha`` starts at ``ENTROPY_ALPHA`` and is trained jointly with the
    inner coefficients.
    """
    if base.beta0 != cfg.beta0 or base.mu0 != cfg.mu0:
        raise ValidationError("base model must share (beta0, mu0) with the config")
    m = entropy_initial_model(base)
    cfg = replace(cfg, architecture=Architecture.ENTROPY)
    samples = build_samples(cfg, Target.ENTROPY)
    return _train(m, samples, cfg, Target.ENTROPY)
