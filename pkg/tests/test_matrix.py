import numpy as np
import pytest

from fermiforge.diagnostics import random_hamiltonian, random_orthogonal
from fermiforge.embed import embed
from fermiforge.errors import (
    DivergedEvaluationError,
    HalfPrecisionOverflowError,
    NonConvergenceError,
    OutOfRegionError,
    ValidationError,
)
from fermiforge.matrix import (
    MatmulCounter,
    PrecisionMode,
    SpectralBounds,
    apply_model,
    as_symmetric,
    density_statistics,
    in_region_of_validity,
    mixed_square,
    normalize_problem,
    region_violations,
    rescale_to_model,
    sp2_trace_matrix,
    spectral_bounds,
)
from fermiforge.models import Mlsp2Coefficients, ModelCoefficients, evaluate_model, sp2_model
from fermiforge.oracle import exact_density_matrix, jacobi_eigendecomposition
from fermiforge.scalar import fermi


def test_as_symmetric():
    M = np.array([[1.0, 2.0], [0.0, 1.0]])
    S = as_symmetric(M)
    assert np.array_equal(S, S.T) and S[0, 1] == 1.0
    with pytest.raises(ValidationError):
        as_symmetric(np.ones((2, 3)))
    with pytest.raises(ValidationError):
        as_symmetric([[np.inf]])


def test_bounds_diagonal():
    b = spectral_bounds(np.diag([1.0, 2.0]))
    w = 1e-12
    assert b.eps_min == pytest.approx(1 - w, abs=1e-15) and b.eps_max == pytest.approx(2 + w)
    assert b.eps_min < 1.0 and b.eps_max > 2.0


def test_bounds_offdiagonal():
    b = spectral_bounds([[0.0, 1.0], [1.0, 0.0]])
    assert b.eps_min < -1.0 < 1.0 < b.eps_max
    assert b.eps_max - 1.0 < 1e-11


def test_bounds_contain_spectrum(rng):
    A = rng.standard_normal((50, 50))
    H = (A + A.T) / 2
    b = spectral_bounds(H)
    v = jacobi_eigendecomposition(H).values
    assert b.eps_min <= v[0] and v[-1] <= b.eps_max


def test_bounds_scalar_and_degenerate():
    b = spectral_bounds([[0.7]])
    assert b.eps_min < 0.7 < b.eps_max
    with pytest.raises(ValidationError):
        SpectralBounds(1.0, 1.0)


def test_normalize_example():
    p = normalize_problem(np.diag([0.0, 1.0]), 10.0, 0.3, SpectralBounds(0.0, 1.0))
    assert np.allclose(p.h_prime, np.diag([1.0, 0.0]))
    assert p.mu_prime == pytest.approx(0.7) and p.beta_prime == 10.0
    assert normalize_problem(np.diag([0.0, 1.0]), 10.0, 1.0, SpectralBounds(0.0, 1.0)).mu_prime == 0


def test_normalized_fermi_identity(rng):
    H = random_hamiltonian(6, rng)
    beta, mu = 3.0, 0.1
    p = normalize_problem(H, beta, mu)
    lam = np.linalg.eigvalsh(H)
    lam_p = (p.bounds.eps_max - lam) / p.bounds.width
    flip = 1.0 / (1.0 + np.exp(p.beta_prime * (p.mu_prime - lam_p)))
    assert np.allclose(fermi(lam, beta, mu), flip, atol=1e-14)


def test_rescale_example():
    p = normalize_problem(np.diag([1.0, 0.0]), 20.0, 0.5, SpectralBounds(0.0, 1.0))
    # flipped H' = diag(0, 1)
    H0 = rescale_to_model(p, 40.0, 0.3)
    assert np.allclose(H0, np.diag([0.05, 0.55]))


def test_rescale_identity_and_limit():
    hp = np.diag([0.2, 0.9])
    p = normalize_problem(np.eye(2) - hp, 40.0, 0.7, SpectralBounds(0.0, 1.0))
    assert np.allclose(rescale_to_model(p, 40.0, 0.3), hp)
    p = normalize_problem(np.eye(2) - hp, 1e-9, 0.5, SpectralBounds(0.0, 1.0))
    assert np.allclose(rescale_to_model(p, 40.0, 0.3), 0.3 * np.eye(2), atol=1e-9)


def test_rescale_out_of_region():
    p = normalize_problem(np.diag([0.0, 1.0]), 40.0, 0.5, SpectralBounds(0.0, 1.0))
    with pytest.raises(OutOfRegionError) as info:
        rescale_to_model(p, 40.0, 0.3)
    assert "beta' mu'" in str(info.value) and info.value.violated


def test_region_examples():
    assert in_region_of_validity(20, 0.3, 40, 0.3)
    assert not in_region_of_validity(40, 0.5, 40, 0.3)
    assert len(region_violations(40, 0.5, 40, 0.3)) == 1
    for bp in (1, 100, 500, 999.9, 1000):
        assert in_region_of_validity(bp, 0.5, 1500, 1 / 3)
    for mp in np.linspace(0.01, 0.99, 50):
        assert in_region_of_validity(1000 * min(1 / 3 / mp, 2 / 3 / (1 - mp)), mp, 1500, 1 / 3)


def test_apply_diagonal(m40):
    lam = np.linspace(0, 1, 9)
    D = apply_model(np.diag(lam), m40)
    assert np.allclose(np.diag(D), evaluate_model(m40, lam), atol=1e-13, rtol=0)
    assert np.count_nonzero(D - np.diag(np.diag(D))) == 0


def test_apply_spectral_mapping(m40, rng):
    Q = random_orthogonal(32, rng)
    lam = rng.uniform(0, 1, 32)
    H0 = (Q * lam) @ Q.T
    D = apply_model(H0, m40)
    ref = (Q * evaluate_model(m40, lam)) @ Q.T
    assert np.linalg.norm(D - ref, 2) <= 1e-11
    ev = np.sort(np.linalg.eigvalsh(D))
    assert np.allclose(ev, np.sort(evaluate_model(m40, lam)), atol=1e-11, rtol=0)


@pytest.mark.parametrize("arch", ["sp2", "mlsp2_compact", "skipsp2", "maxsp2", "arbsp2"])
def test_apply_all_architectures(arch, m40, rng):
    if arch == "sp2":
        m = sp2_model(40, 0.3, 10)
    elif arch == "mlsp2_compact":
        m = embed(sp2_model(40, 0.3, 10), arch)
    else:
        m = embed(m40, arch)
    lam = rng.uniform(0, 1, 16)
    Q = random_orthogonal(16, rng)
    D = apply_model((Q * lam) @ Q.T, m)
    ref = (Q * evaluate_model(m, lam)) @ Q.T
    assert np.linalg.norm(D - ref, 2) <= 1e-10


def test_apply_entropy(e40, rng):
    lam = rng.uniform(0, 1, 12)
    S = apply_model(np.diag(lam), e40)
    assert np.allclose(np.diag(S), evaluate_model(e40, lam), atol=1e-13)


def test_sp2_idempotent():
    m = sp2_model(1e6, 0.4, 60)
    rng = np.random.default_rng(1)
    lam = np.concatenate([rng.uniform(0, 0.35, 8), rng.uniform(0.45, 1, 8)])
    Q = random_orthogonal(16, rng)
    D = apply_model((Q * lam) @ Q.T, m)
    assert np.linalg.norm(D @ D - D, 2) <= 1e-6


def test_accumulator_skip_threshold():
    layers = np.array([[1.0, 0.0, 0.0, 5e-9], [-1.0, 2.0, 0.0, 0.0]])
    m = ModelCoefficients("mlsp2", Mlsp2Coefficients(layers), 10, 0.5)
    D = apply_model(np.diag([0.2]), m)
    x0 = 0.8
    assert D[0, 0] == pytest.approx(2 * x0 ** 2 - x0 ** 4, abs=1e-15)
    assert evaluate_model(m, 0.2) != D[0, 0]


def test_apply_dimension_errors(m40):
    with pytest.raises(ValidationError):
        apply_model(np.ones((2, 3)), m40)


def test_apply_divergence_layer():
    m = ModelCoefficients("mlsp2", Mlsp2Coefficients([[1e200, 0, 0, 0]] * 3), 10, 0.5)
    with np.errstate(over="ignore", invalid="ignore"), pytest.raises(DivergedEvaluationError):
        apply_model(np.eye(2) * 0.0, m)


def test_multiplication_counts(m40):
    H0 = np.diag(np.linspace(0, 1, 8))
    for mode, full, half in [("double", 14, 0), ("single", 14, 0), ("mixed", 0, 28)]:
        c = MatmulCounter()
        apply_model(H0, m40, mode, c)
        assert (c.full, c.half) == (full, half)


def test_symmetry_of_intermediates(m40, rng):
    A = rng.uniform(0, 1, (20, 20))
    H0 = (A + A.T) / 40
    for mode in PrecisionMode:
        D = apply_model(H0, m40, mode)
        assert np.max(np.abs(D - D.T)) == 0.0


def test_mixed_square_identity():
    I = np.eye(5)
    assert np.array_equal(mixed_square(I), I)


def test_mixed_square_exact_half_values(rng):
    X = np.round(rng.uniform(0, 1, (16, 16)) * 256) / 256
    X = np.round((X + X.T) / 2 * 256) / 256
    Y = mixed_square(X)
    assert np.allclose(Y, X @ X, rtol=1e-6, atol=1e-6)


def test_mixed_square_accuracy(rng):
    Q = random_orthogonal(256, rng)
    X = (Q * rng.uniform(0, 1, 256)) @ Q.T
    c = MatmulCounter()
    Y = mixed_square(X, c)
    ref = X @ X
    assert c.half == 2
    assert np.linalg.norm(Y - ref, 2) / np.linalg.norm(ref, 2) <= 1e-5


def test_mixed_square_overflow():
    with pytest.raises(HalfPrecisionOverflowError):
        mixed_square(np.eye(2) * 1e5)


def test_sp2_trace_two_level():
    c = MatmulCounter()
    X = sp2_trace_matrix(np.diag([0.9, 0.1]), 1, tol=1e-8, counter=c)
    assert np.allclose(X, np.diag([1.0, 0.0]), atol=1e-8)
    assert c.full > 0


def test_sp2_trace_degenerate():
    with pytest.raises(NonConvergenceError):
        sp2_trace_matrix(0.5 * np.eye(4), 2, max_layers=60)


def test_sp2_trace_random_gapped(rng):
    Q = random_orthogonal(32, rng)
    lam = np.concatenate([rng.uniform(0.55, 1, 16), rng.uniform(0, 0.45, 16)])
    Hp = (Q * lam) @ Q.T
    X = sp2_trace_matrix(Hp, 16, tol=1e-9)
    ref = (Q * (lam > 0.5)) @ Q.T
    assert np.linalg.norm(X - ref, 2) <= 1e-6


def test_sp2_trace_bad_occupation():
    with pytest.raises(ValidationError):
        sp2_trace_matrix(np.eye(3) * 0.5, 3)


def test_density_statistics(rng):
    s = density_statistics(np.eye(4))
    assert (s.trace, s.trace_square) == (4.0, 4.0)
    s = density_statistics(np.diag([0.5, 0.5]))
    assert (s.trace, s.trace_square) == (1.0, 0.5)
    A = rng.standard_normal((20, 20))
    D = (A + A.T) / 2
    v = jacobi_eigendecomposition(D).values
    assert density_statistics(D).trace_square == pytest.approx(np.sum(v ** 2), rel=1e-12)


def test_equivariance(m40, rng):
    lam = rng.uniform(0, 1, 24)
    Q0 = random_orthogonal(24, rng)
    H0 = (Q0 * lam) @ Q0.T
    D = apply_model(H0, m40)
    Q = random_orthogonal(24, rng)
    lhs = apply_model(Q.T @ H0 @ Q, m40)
    assert np.linalg.norm(lhs - Q.T @ D @ Q, 2) <= 1e-10


def test_rescaling_exactness_oracle(rng):
    H = random_hamiltonian(16, rng)
    beta, mu = 4.0, 0.2
    p = normalize_problem(H, beta, mu)
    H0 = rescale_to_model(p, 40.0, 0.3)
    D1 = exact_density_matrix(H, beta, mu)
    D0 = np.eye(16) - exact_density_matrix(H0, 40.0, 0.3)
    assert np.linalg.norm(D1 - D0, 2) <= 1e-12
