"""Coefficient containers for the SP2 family and their scalar evaluation.

Every Fermi architecture starts from the flipped input ``x0 = 1 - x`` and
approximates ``fermi(x; beta0, mu0)`` on [0, 1]. The entropy model instead
contracts its input about ``mu0`` before running an inner MLSP2 network.

Parameter vectors (used by the trainer) list coefficients layer by layer in
the order documented on each ``to_vector`` method.
"""

from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
import math

import numpy as np

from .errors import DivergedEvaluationError, ValidationError
from .scalar import LN2

__all__ = [
    "Architecture",
    "Sp2Coefficients",
    "Mlsp2Coefficients",
    "Mlsp2CompactCoefficients",
    "MaxSp2Coefficients",
    "SkipSp2Coefficients",
    "ArbSp2Coefficients",
    "EntropyModelCoefficients",
    "ModelCoefficients",
    "evaluate_model",
    "sp2_model",
]


class Architecture(str, Enum):
    SP2 = "sp2"
    MLSP2 = "mlsp2"
    MLSP2_COMPACT = "mlsp2_compact"
    MAXSP2 = "maxsp2"
    SKIPSP2 = "skipsp2"
    ARBSP2 = "arbsp2"
    ENTROPY = "entropy"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        for arch in cls:
            if arch.value == key or arch.name.lower() == key:
                return arch
        raise ValidationError(f"unknown architecture {value!r}")


def _frozen(a, shape=None, name="array"):
    a = np.array(a, dtype=float)
    if shape is not None and a.shape != shape:
        raise ValidationError(f"{name} has shape {a.shape}, expected {shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} contains non-finite values")
    a.setflags(write=False)
    return a


def _check_finite(x, layer):
    if not np.all(np.isfinite(x)):
        raise DivergedEvaluationError(layer)


@dataclass(frozen=True)
class Sp2Coefficients:
    """Classic SP2: sign +1 squares, sign -1 applies ``2x - x^2``."""

    signs: tuple

    def __post_init__(self):
        signs = tuple(int(s) for s in self.signs)
        if any(s not in (1, -1) for s in signs):
            raise ValidationError("SP2 signs must be +1 or -1")
        object.__setattr__(self, "signs", signs)

    @property
    def n_layers(self):
        return len(self.signs)

    def forward(self, x0):
        x = x0
        for i, s in enumerate(self.signs):
            x = x * x if s > 0 else (2.0 - x) * x
            _check_finite(x, i)
        return x


@dataclass(frozen=True)
class Mlsp2Coefficients:
    """Per-layer ``(a, b, c, d)``: ``A += d x``; ``x = a x^2 + b x + c``.

    Output is ``A + x_n``.
    """

    layers: np.ndarray

    def __post_init__(self):
        layers = np.array(self.layers, dtype=float)
        if layers.ndim != 2 or layers.shape[1] != 4 or layers.shape[0] < 1:
            raise ValidationError("MLSP2 layers must have shape (n, 4) with n >= 1")
        object.__setattr__(self, "layers", _frozen(layers, name="layers"))

    @property
    def n_layers(self):
        return self.layers.shape[0]

    def to_vector(self):
        """``[a0, b0, c0, d0, a1, ...]``."""
        return self.layers.ravel().copy()

    def from_vector(self, v):
        return Mlsp2Coefficients(np.asarray(v, float).reshape(self.layers.shape))

    def forward(self, x0, keep=False):
        xs = [x0] if keep else None
        x = x0
        acc = np.zeros_like(x0)
        for i, (a, b, c, d) in enumerate(self.layers):
            acc = acc + d * x
            x = (a * x + b) * x + c
            _check_finite(x, i)
            if keep:
                xs.append(x)
        out = acc + x
        return (out, xs) if keep else out


@dataclass(frozen=True)
class Mlsp2CompactCoefficients:
    """Per-layer ``(t, u)``: ``A += u x``; ``x = (t + x)^2``.

    Output is ``A + final[0] + final[1] * x_n``.
    """

    pairs: np.ndarray
    final: np.ndarray

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=float)
        if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] < 1:
            raise ValidationError("compact MLSP2 pairs must have shape (n, 2)")
        object.__setattr__(self, "pairs", _frozen(pairs, name="pairs"))
        object.__setattr__(self, "final", _frozen(self.final, (2,), "final"))

    @property
    def n_layers(self):
        return self.pairs.shape[0]

    def to_vector(self):
        """``[t0, u0, t1, u1, ..., final0, final1]``."""
        return np.concatenate([self.pairs.ravel(), self.final])

    def from_vector(self, v):
        v = np.asarray(v, float)
        n = self.n_layers
        return Mlsp2CompactCoefficients(v[: 2 * n].reshape(n, 2), v[2 * n:])

    def forward(self, x0, keep=False):
        xs = [x0] if keep else None
        x = x0
        acc = np.zeros_like(x0)
        for i, (t, u) in enumerate(self.pairs):
            acc = acc + u * x
            x = (t + x) ** 2
            _check_finite(x, i)
            if keep:
                xs.append(x)
        out = acc + self.final[0] + self.final[1] * x
        return (out, xs) if keep else out


@dataclass(frozen=True)
class MaxSp2Coefficients:
    """Fully connected squaring network.

    ``x_{i+1} = (delta_i + sum_{j<=i} theta[i, j] x_j)^2`` and output
    ``offset + sum_{i=0}^{n} gamma_i x_i``. ``theta`` is stored as a dense
    lower-triangular (n, n) array; its strict upper part must be zero.
    """

    delta: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        delta = np.atleast_1d(np.array(self.delta, dtype=float))
        n = delta.shape[0]
        if n < 1:
            raise ValidationError("MaxSP2 needs at least one layer")
        theta = np.array(self.theta, dtype=float)
        if theta.shape != (n, n):
            raise ValidationError(f"theta must have shape {(n, n)}")
        if np.any(np.triu(theta, 1) != 0.0):
            raise ValidationError("theta must be lower triangular (j <= i)")
        object.__setattr__(self, "delta", _frozen(delta, name="delta"))
        object.__setattr__(self, "theta", _frozen(theta, name="theta"))
        object.__setattr__(self, "gamma", _frozen(self.gamma, (n + 1,), "gamma"))
        object.__setattr__(self, "offset", float(self.offset))
        if not math.isfinite(self.offset):
            raise ValidationError("offset must be finite")

    @property
    def n_layers(self):
        return self.delta.shape[0]

    def to_vector(self):
        """``delta``, then row-major lower triangle of ``theta``, ``gamma``, ``offset``."""
        rows, cols = np.tril_indices(self.n_layers)
        return np.concatenate([self.delta, self.theta[rows, cols], self.gamma, [self.offset]])

    def from_vector(self, v):
        v = np.asarray(v, float)
        n = self.n_layers
        m = n * (n + 1) // 2
        theta = np.zeros((n, n))
        theta[np.tril_indices(n)] = v[n:n + m]
        return MaxSp2Coefficients(v[:n], theta, v[n + m:n + m + n + 1], v[-1])

    def forward(self, x0, keep=False):
        xs = [x0]
        zs = []
        for i in range(self.n_layers):
            z = self.delta[i] + sum(self.theta[i, j] * xs[j] for j in range(i + 1))
            x = z * z
            _check_finite(x, i)
            zs.append(z)
            xs.append(x)
        out = self.offset + sum(g * x for g, x in zip(self.gamma, xs))
        return (out, xs, zs) if keep else out


@dataclass(frozen=True)
class SkipSp2Coefficients:
    """Squaring network with ``k`` skip connections and ``K`` accumulators.

    ``x_{i+1} = (alpha[i, k] + sum_{j<k} alpha[i, j] x_{i-j}
    + sum_l beta[i, l] A_{i, l})^2`` and ``A_{i+1, l} = A_{i, l} + gamma[i, l] x_i``
    with ``A_0 = acc0``. Layers before the input (``i - j < 0``) contribute
    nothing. Output is ``A_{n, 0} + gamma_out * x_n``.
    """

    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    gamma_out: float
    acc0: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float)
        if alpha.ndim != 2 or alpha.shape[0] < 1 or alpha.shape[1] < 2:
            raise ValidationError("alpha must have shape (n, k + 1) with k >= 1")
        n = alpha.shape[0]
        beta = np.array(self.beta, dtype=float)
        if beta.ndim != 2 or beta.shape[0] != n or beta.shape[1] < 1:
            raise ValidationError("beta must have shape (n, K) with K >= 1")
        K = beta.shape[1]
        object.__setattr__(self, "alpha", _frozen(alpha, name="alpha"))
        object.__setattr__(self, "beta", _frozen(beta, name="beta"))
        object.__setattr__(self, "gamma", _frozen(self.gamma, (n, K), "gamma"))
        object.__setattr__(self, "acc0", _frozen(self.acc0, (K,), "acc0"))
        object.__setattr__(self, "gamma_out", float(self.gamma_out))
        if not math.isfinite(self.gamma_out):
            raise ValidationError("gamma_out must be finite")

    @property
    def n_layers(self):
        return self.alpha.shape[0]

    @property
    def skip_depth(self):
        return self.alpha.shape[1] - 1

    @property
    def accumulators(self):
        return self.beta.shape[1]

    @property
    def parameter_count(self):
        """``(1 + k + 2K) n + 1 + K``; equals ``(1 + k + 2K) n + 2`` for K = 1."""
        n, k, K = self.n_layers, self.skip_depth, self.accumulators
        return (1 + k + 2 * K) * n + 1 + K

    def to_vector(self):
        """``alpha``, ``beta``, ``gamma`` (row-major), ``gamma_out``, ``acc0``."""
        return np.concatenate([self.alpha.ravel(), self.beta.ravel(), self.gamma.ravel(),
                               [self.gamma_out], self.acc0])

    def from_vector(self, v):
        v = np.asarray(v, float)
        n, k, K = self.n_layers, self.skip_depth, self.accumulators
        a = n * (k + 1)
        b = a + n * K
        c = b + n * K
        return SkipSp2Coefficients(v[:a].reshape(n, k + 1), v[a:b].reshape(n, K),
                                   v[b:c].reshape(n, K), v[c], v[c + 1:c + 1 + K])

    def forward(self, x0, keep=False):
        k, K = self.skip_depth, self.accumulators
        xs = [x0]
        zs = []
        accs = [[self.acc0[l] + 0.0 * x0 for l in range(K)]]
        for i in range(self.n_layers):
            acc = accs[-1]
            z = self.alpha[i, k] + 0.0 * x0
            for j in range(min(k, i + 1)):
                z = z + self.alpha[i, j] * xs[i - j]
            for l in range(K):
                z = z + self.beta[i, l] * acc[l]
            x = z * z
            _check_finite(x, i)
            accs.append([acc[l] + self.gamma[i, l] * xs[i] for l in range(K)])
            zs.append(z)
            xs.append(x)
        out = accs[-1][0] + self.gamma_out * xs[-1]
        return (out, xs, zs, accs) if keep else out


@dataclass(frozen=True)
class ArbSp2Coefficients:
    """Bilinear network: each layer multiplies two affine combinations.

    ``x_{i+1} = (delta_i + sum phi[i, j] x_j) (delta2_i + sum psi[i, j] x_j)``,
    output ``offset + sum gamma_i x_i`` as for MaxSP2.
    """

    delta: np.ndarray
    delta2: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    gamma: np.ndarray
    offset: float = 0.0

    def __post_init__(self):
        delta = np.atleast_1d(np.array(self.delta, dtype=float))
        n = delta.shape[0]
        if n < 1:
            raise ValidationError("ArbSP2 needs at least one layer")
        for name in ("phi", "psi"):
            w = np.array(getattr(self, name), dtype=float)
            if w.shape != (n, n) or np.any(np.triu(w, 1) != 0.0):
                raise ValidationError(f"{name} must be lower triangular with shape {(n, n)}")
            object.__setattr__(self, name, _frozen(w, name=name))
        object.__setattr__(self, "delta", _frozen(delta, name="delta"))
        object.__setattr__(self, "delta2", _frozen(self.delta2, (n,), "delta2"))
        object.__setattr__(self, "gamma", _frozen(self.gamma, (n + 1,), "gamma"))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def n_layers(self):
        return self.delta.shape[0]

    def to_vector(self):
        rows, cols = np.tril_indices(self.n_layers)
        return np.concatenate([self.delta, self.delta2, self.phi[rows, cols],
                               self.psi[rows, cols], self.gamma, [self.offset]])

    def from_vector(self, v):
        v = np.asarray(v, float)
        n = self.n_layers
        m = n * (n + 1) // 2
        idx = np.tril_indices(n)
        phi = np.zeros((n, n))
        psi = np.zeros((n, n))
        phi[idx] = v[2 * n:2 * n + m]
        psi[idx] = v[2 * n + m:2 * n + 2 * m]
        rest = v[2 * n + 2 * m:]
        return ArbSp2Coefficients(v[:n], v[n:2 * n], phi, psi, rest[:n + 1], rest[n + 1])

    def forward(self, x0):
        xs = [x0]
        for i in range(self.n_layers):
            left = self.delta[i] + sum(self.phi[i, j] * xs[j] for j in range(i + 1))
            right = self.delta2[i] + sum(self.psi[i, j] * xs[j] for j in range(i + 1))
            x = left * right
            _check_finite(x, i)
            xs.append(x)
        return self.offset + sum(g * x for g, x in zip(self.gamma, xs))


@dataclass(frozen=True)
class EntropyModelCoefficients:
    """Entropy network ``4 ln2 * y (1 - y)`` with ``y`` an inner MLSP2.

    The inner network sees ``1 - (alpha (x - mu0) + mu0)``: the input is
    contracted about ``mu0`` and then flipped exactly as a Fermi model flips
    its own input, so ``y`` is the base Fermi model evaluated at the
    contracted energy.
    """

    inner: Mlsp2Coefficients
    alpha: float
    mu0: float

    def __post_init__(self):
        if not isinstance(self.inner, Mlsp2Coefficients):
            raise ValidationError("entropy inner network must be MLSP2")
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "mu0", float(self.mu0))

    @property
    def n_layers(self):
        return self.inner.n_layers

    def inner_input(self, x):
        return 1.0 - (self.alpha * (x - self.mu0) + self.mu0)

    def to_vector(self):
        """Inner MLSP2 vector followed by ``alpha``."""
        return np.concatenate([self.inner.to_vector(), [self.alpha]])

    def from_vector(self, v):
        v = np.asarray(v, float)
        return EntropyModelCoefficients(self.inner.from_vector(v[:-1]), v[-1], self.mu0)

    def forward(self, x):
        y = self.inner.forward(self.inner_input(x))
        return 4.0 * LN2 * y * (1.0 - y)


_PAYLOADS = {
    Architecture.SP2: Sp2Coefficients,
    Architecture.MLSP2: Mlsp2Coefficients,
    Architecture.MLSP2_COMPACT: Mlsp2CompactCoefficients,
    Architecture.MAXSP2: MaxSp2Coefficients,
    Architecture.SKIPSP2: SkipSp2Coefficients,
    Architecture.ARBSP2: ArbSp2Coefficients,
    Architecture.ENTROPY: EntropyModelCoefficients,
}


def _same(a, b):
    """Bitwise equality through nested payload dataclasses and arrays."""
    if is_dataclass(a) and is_dataclass(b):
        return type(a) is type(b) and all(
            _same(getattr(a, f.name), getattr(b, f.name)) for f in fields(a))
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    return a == b


@dataclass(frozen=True, eq=False)
class ModelCoefficients:
    """A trained (or embedded) model tagged with its training point."""

    architecture: Architecture
    payload: object
    beta0: float
    mu0: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arch = Architecture.parse(self.architecture)
        object.__setattr__(self, "architecture", arch)
        if not isinstance(self.payload, _PAYLOADS[arch]):
            raise ValidationError(
                f"{arch.name} model needs a {_PAYLOADS[arch].__name__} payload, "
                f"got {type(self.payload).__name__}")
        if not (math.isfinite(self.beta0) and self.beta0 > 0):
            raise ValidationError("beta0 must be positive")
        if not 0.0 < self.mu0 < 1.0:
            raise ValidationError("mu0 must lie in (0, 1)")
        if arch is Architecture.ENTROPY and self.payload.mu0 != self.mu0:
            raise ValidationError("entropy payload mu0 differs from the model mu0")
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "mu0", float(self.mu0))

    @property
    def layers(self):
        return self.payload.n_layers

    @property
    def is_entropy(self):
        return self.architecture is Architecture.ENTROPY

    def with_payload(self, payload, architecture=None, **info):
        return ModelCoefficients(architecture or self.architecture, payload,
                                 self.beta0, self.mu0, {**self.info, **info})

    def __call__(self, x):
        return evaluate_model(self, x)

    def __eq__(self, other):
        if not isinstance(other, ModelCoefficients):
            return NotImplemented
        return (self.architecture is other.architecture and self.beta0 == other.beta0
                and self.mu0 == other.mu0 and _same(self.payload, other.payload))

    __hash__ = None


def evaluate_model(m, x):
    """Evaluate a model at energies ``x`` in [0, 1] (scalar or array).

    Points outside [0, 1] are evaluated too; accuracy is only meaningful
    inside.
    """
    arr = np.asarray(x, dtype=float)
    if m.architecture is Architecture.ENTROPY:
        out = m.payload.forward(arr)
    else:
        out = m.payload.forward(1.0 - arr)
    out = np.asarray(out, dtype=float)
    if out.shape != arr.shape:
        out = np.broadcast_to(out, arr.shape).copy()
    return out[()] if out.ndim == 0 else out


def sp2_model(beta0, mu0, layers):
    """Truncated SP2 model whose step sits at ``mu0``.

    The recursion runs on the flipped input, so the sign sequence is built
    for ``1 - mu0``.
    """
    from .scalar import sp2_sign_sequence

    signs, _ = sp2_sign_sequence(1.0 - mu0, layers)
    return ModelCoefficients(Architecture.SP2, Sp2Coefficients(signs), beta0, mu0)
