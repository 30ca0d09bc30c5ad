"""Exact embeddings along SP2 -> MLSP2 -> Skip-SP2 -> MaxSP2 -> ArbSP2.

Each conversion rewrites the coefficients of one architecture so that a
richer one computes the same polynomial. MLSP2 and its compact form are
interconvertible and share a rank in the chain.
"""

import numpy as np

from .errors import DegenerateCoefficientsError, ValidationError
from .models import (
    ArbSp2Coefficients,
    Architecture,
    MaxSp2Coefficients,
    Mlsp2Coefficients,
    Mlsp2CompactCoefficients,
    ModelCoefficients,
    SkipSp2Coefficients,
)

__all__ = ["embed", "can_embed", "CHAIN_RANK"]

CHAIN_RANK = {
    Architecture.SP2: 0,
    Architecture.MLSP2: 1,
    Architecture.MLSP2_COMPACT: 1,
    Architecture.SKIPSP2: 2,
    Architecture.MAXSP2: 3,
    Architecture.ARBSP2: 4,
}


def can_embed(source, target):
    source, target = Architecture.parse(source), Architecture.parse(target)
    if source not in CHAIN_RANK or target not in CHAIN_RANK:
        return False
    if {source, target} == {Architecture.MLSP2, Architecture.MLSP2_COMPACT}:
        return True
    return CHAIN_RANK[target] > CHAIN_RANK[source]


def _sp2_to_mlsp2(p):
    s = np.array(p.signs, dtype=float)
    layers = np.zeros((len(s), 4))
    layers[:, 0] = s
    layers[:, 1] = 1.0 - s
    return Mlsp2Coefficients(layers)


def _mlsp2_to_skip(p, skip_depth=1, accumulators=1):
    L = p.layers
    a, b, c, d = L[:, 0], L[:, 1], L[:, 2], L[:, 3]
    if np.any(a == 0.0):
        bad = int(np.flatnonzero(a == 0.0)[0])
        raise DegenerateCoefficientsError(
            f"quadratic coefficient of layer {bad} is zero; no Skip-SP2 form exists")
    n = L.shape[0]
    shift = b / (2.0 * a)           # a x^2 + b x + c = a (x + shift)^2 + rest
    rest = c - b * b / (4.0 * a)
    k, K = int(skip_depth), int(accumulators)
    alpha = np.zeros((n, k + 1))
    alpha[0, 0] = 1.0
    alpha[0, k] = shift[0]
    alpha[1:, 0] = a[:-1]
    alpha[1:, k] = rest[:-1] + shift[1:]
    gamma = np.zeros((n, K))
    gamma[0, 0] = d[0]
    gamma[1:, 0] = d[1:] * a[:-1]
    acc0 = np.zeros(K)
    acc0[0] = np.dot(np.append(d[1:], 1.0), rest)
    return SkipSp2Coefficients(alpha, np.zeros((n, K)), gamma, a[-1], acc0)


def _skip_to_max(p):
    n, k, K = p.n_layers, p.skip_depth, p.accumulators
    delta = p.alpha[:, k] + p.beta @ p.acc0
    theta = np.zeros((n, n))
    for i in range(n):
        for j in range(i):
            theta[i, j] += p.beta[i] @ p.gamma[j]
        for j in range(min(k, i + 1)):
            theta[i, i - j] += p.alpha[i, j]
    gamma = np.append(p.gamma[:, 0], p.gamma_out)
    return MaxSp2Coefficients(delta, theta, gamma, p.acc0[0])


def _max_to_arb(p, gauge=None):
    n = p.n_layers
    g = np.ones(n) if gauge is None else np.asarray(gauge, dtype=float)
    if g.shape != (n,) or np.any(g == 0.0) or not np.all(np.isfinite(g)):
        raise ValidationError("gauge factors must be n finite non-zero values")
    return ArbSp2Coefficients(p.delta * g, p.delta / g, p.theta * g[:, None],
                              p.theta / g[:, None], p.gamma, p.offset)


def _skip_to_compact(p):
    if p.skip_depth != 1 or p.accumulators != 1 or np.any(p.beta != 0.0):
        raise ValidationError("only single-skip, accumulator-free Skip-SP2 has a compact form")
    n = p.n_layers
    a0 = p.alpha[:, 0]
    if np.any(a0 == 0.0):
        raise DegenerateCoefficientsError("zero skip weight; no compact form exists")
    s = np.ones(n + 1)
    for i in range(n):
        s[i + 1] = (a0[i] * s[i]) ** 2
    if not np.all(np.isfinite(s)) or np.any(s == 0.0):
        raise DegenerateCoefficientsError("compact scale factors over/underflow")
    pairs = np.column_stack([p.alpha[:, 1] / (a0 * s[:n]), p.gamma[:, 0] * s[:n]])
    final = np.array([p.acc0[0], p.gamma_out * s[n]])
    return Mlsp2CompactCoefficients(pairs, final)


def _compact_to_mlsp2(p):
    t, u = p.pairs[:, 0], p.pairs[:, 1]
    tn, un = p.final
    n = p.n_layers
    layers = np.column_stack([np.ones(n), 2.0 * t, t * t, u])
    layers[-1, :3] = [un, 2.0 * un * t[-1], un * t[-1] ** 2 + tn]
    return Mlsp2Coefficients(layers)


def embed(m, target, skip_depth=1, accumulators=1, gauge=None):
    """Rewrite ``m`` as an equivalent model of architecture ``target``.

    Parameters
    ----------
    m : ModelCoefficients
    target : Architecture or str
        Must sit above ``m.architecture`` in the chain (MLSP2 and its
        compact form convert both ways).
    skip_depth, accumulators : int
        Shape of a Skip-SP2 target; extra skips and accumulators get zero
        weights.
    gauge : sequence of float, optional
        Per-layer factors ``c`` for an ArbSP2 target (default all ones).

    Raises
    ------
    ValidationError
        For downward or unsupported conversions.
    DegenerateCoefficientsError
        When a zero quadratic coefficient blocks the Skip-SP2 rewrite.
    """
    target = Architecture.parse(target)
    src = m.architecture
    if src is target:
        return m
    if not can_embed(src, target):
        raise ValidationError(
            f"cannot convert {src.value} to {target.value}: embeddings are one-directional")
    if skip_depth < 1 or accumulators < 1:
        raise ValidationError("skip_depth and accumulators must be >= 1")

    p = m.payload
    arch = src
    if arch is Architecture.SP2:
        p, arch = _sp2_to_mlsp2(p), Architecture.MLSP2
    if arch is Architecture.MLSP2_COMPACT:
        p, arch = _compact_to_mlsp2(p), Architecture.MLSP2
    if target is Architecture.MLSP2:
        return m.with_payload(p, target)
    if target is Architecture.MLSP2_COMPACT:
        return m.with_payload(_skip_to_compact(_mlsp2_to_skip(p)), target)
    if arch is Architecture.MLSP2:
        k, K = (skip_depth, accumulators) if target is Architecture.SKIPSP2 else (1, 1)
        p, arch = _mlsp2_to_skip(p, k, K), Architecture.SKIPSP2
    if target is Architecture.SKIPSP2:
        return m.with_payload(p, target)
    if arch is Architecture.SKIPSP2:
        p, arch = _skip_to_max(p), Architecture.MAXSP2
    if target is Architecture.MAXSP2:
        return m.with_payload(p, target)
    return m.with_payload(_max_to_arb(p, gauge), target)
