import numpy as np
import pytest

from fermiforge.diagnostics import random_hamiltonian, random_orthogonal
from fermiforge.embed import embed
from fermiforge.errors import MissingEntropyModelError, NoValidModelError, ValidationError
from fermiforge.matrix import MatmulCounter, SpectralBounds
from fermiforge.models import Mlsp2Coefficients, ModelCoefficients, sp2_model
from fermiforge.oracle import exact_density_matrix, exact_mu, exact_thermodynamics
from fermiforge.scalar import beta0_for_layer_count
from fermiforge.workflow import (
    ModelLibrary,
    compute_density_matrix,
    expectation,
    minimal_model_for,
    newton_derivative,
    select_model,
    solve_chemical_potential,
    thermodynamics,
)


@pytest.fixture(scope="module")
def lib40(m40, e40):
    return ModelLibrary([m40, e40])


def _tagged(beta0, mu0, layers, err):
    m = embed(sp2_model(beta0, mu0, layers), "mlsp2")
    return m.with_payload(m.payload, final_max_error=err)


def test_select_fewest_layers():
    a, b = _tagged(1500, 1 / 3, 30, 1e-7), _tagged(40, 0.3, 14, 1e-6)
    lib = ModelLibrary([a, b])
    assert select_model(lib, 20, 0.3) is b
    assert select_model(lib, 1000, 0.5) is a


def test_select_tie_breaks():
    a, b, c = _tagged(40, 0.3, 14, 2e-6), _tagged(40, 0.3, 14, 1e-6), _tagged(40, 0.3, 14, 1e-6)
    assert select_model(ModelLibrary([a, b, c]), 10, 0.3) is b


def test_select_skips_entropy(lib40, m40):
    assert select_model(lib40, 10, 0.3) is m40


def test_select_none_suggests():
    lib = ModelLibrary([_tagged(40, 0.3, 14, 1e-6)])
    with pytest.raises(NoValidModelError) as info:
        select_model(lib, 2000, 0.5)
    e = info.value
    assert e.beta0_needed * (1 / 3) >= 1000 and e.beta0_needed * (2 / 3) >= 1000
    assert e.layers_needed >= 1
    with pytest.raises(ValidationError):
        select_model(ModelLibrary(), 1, 0.5)


def test_minimal_model_monotone():
    prev = 0
    for bp in (10, 100, 1000, 5000):
        _, n = minimal_model_for(bp, 0.5)
        assert n >= prev
        prev = n


def test_density_identity_limit(lib40):
    H = np.diag([-1.0, 1.0])
    D, prov = compute_density_matrix(H, 1e-9, 0.0, lib40)
    assert np.allclose(D, 0.5 * np.eye(2), atol=1e-5)
    assert prov["model"]["beta0"] == 40


def test_density_two_level(lib40):
    H = np.diag([-1.0, 1.0])
    D, prov = compute_density_matrix(H, 5.0, 0.0, lib40)
    ref = exact_density_matrix(H, 5.0, 0.0)
    assert np.linalg.norm(D - ref, 2) <= 1e-5
    assert prov["matmuls"] == {"full": 14, "half": 0}
    assert 0 < prov["beta_prime"] and 0 <= prov["mu_prime"] <= 1


@pytest.mark.parametrize("mode,tol", [("double", 1e-5), ("single", 1e-4), ("mixed", 1e-3)])
def test_density_random(lib40, mode, tol, rng):
    H = random_hamiltonian(48, rng)
    D, prov = compute_density_matrix(H, 2.5, 0.1, lib40, mode)
    ref = exact_density_matrix(H, 2.5, 0.1)
    assert np.linalg.norm(D - ref, 2) <= tol
    assert np.array_equal(D, D.T)
    assert prov["precision"] == mode


def test_density_out_of_library(lib40):
    with pytest.raises(NoValidModelError):
        compute_density_matrix(np.diag([0.0, 1.0]), 500.0, 0.5, lib40)


def test_density_explicit_bounds(lib40):
    H = np.diag([0.2, 0.8])
    b = SpectralBounds(0.0, 1.0)
    c = MatmulCounter()
    D, prov = compute_density_matrix(H, 8.0, 0.5, lib40, bounds=b, counter=c)
    assert prov["eps_min"] == 0.0 and c.full == 14
    assert np.allclose(np.diag(D), 1 / (1 + np.exp(8.0 * (np.diag(H) - 0.5))), atol=1e-5)


def test_equivariance_workflow(lib40, rng):
    H = random_hamiltonian(20, rng)
    Q = random_orthogonal(20, rng)
    D, _ = compute_density_matrix(H, 2.5, 0.0, lib40)
    D2, _ = compute_density_matrix(Q.T @ H @ Q, 2.5, 0.0, lib40,
                                   bounds=SpectralBounds(-1.2, 1.2))
    D1, _ = compute_density_matrix(H, 2.5, 0.0, lib40, bounds=SpectralBounds(-1.2, 1.2))
    assert np.linalg.norm(D2 - Q.T @ D1 @ Q, 2) <= 1e-10
    assert np.linalg.norm(D - D1, 2) <= 2e-5


def test_newton_derivative_matches_fd(rng):
    H = random_hamiltonian(16, rng)
    beta, mu, h = 4.0, 0.1, 1e-6
    D = exact_density_matrix(H, beta, mu)
    fd = (np.trace(exact_density_matrix(H, beta, mu + h))
          - np.trace(exact_density_matrix(H, beta, mu - h))) / (2 * h)
    assert newton_derivative(D, beta) == pytest.approx(fd, rel=1e-7)


def test_solve_mu_warm_and_cold(lib40, rng):
    H = random_hamiltonian(40, rng)
    beta, n = 2.5, 17.0
    ref = exact_mu(H, beta, n)
    D, rep = solve_chemical_potential(H, beta, n, ref + 0.01, lib40)
    assert rep.converged and rep.iterations <= 3
    assert abs(np.trace(D) - n) <= 1e-8
    assert abs(rep.mu_final - ref) <= 1e-4
    D, rep = solve_chemical_potential(H, beta, n, 0.9, lib40)
    assert rep.converged and rep.iterations <= 10
    assert len(rep.residual_history) == rep.iterations + 1


def test_solve_mu_flat_derivative_bisects(lib40):
    # a sharp step model makes Tr D - Tr D^2 vanish, so Newton has nothing to use
    step = ModelLibrary([sp2_model(beta0_for_layer_count(40), 0.5, 40)])
    H = np.diag(np.linspace(-1, 1, 10))
    D, rep = solve_chemical_potential(H, 5000.0, 5.0, 0.3, step, max_iter=60)
    assert rep.converged
    assert np.allclose(np.diag(D), [1] * 5 + [0] * 5, atol=1e-8)
    assert rep.bisection_steps >= 1 and rep.notes


def test_solve_mu_validation(lib40):
    H = np.eye(3)
    with pytest.raises(ValidationError):
        solve_chemical_potential(H, 1.0, 3.0, 0.0, lib40)
    with pytest.raises(ValidationError):
        solve_chemical_potential(H, 1.0, 1.0, np.nan, lib40)


def test_thermodynamics_match_oracle(lib40, rng):
    H = random_hamiltonian(32, rng)
    beta, mu = 2.5, 0.05
    t = thermodynamics(H, beta, mu, lib40)
    ref = exact_thermodynamics(H, beta, mu)
    assert t.entropy_trace == pytest.approx(ref.entropy_trace, abs=32 * 5e-6)
    assert t.band_energy == pytest.approx(ref.band_energy, abs=32 * 5e-6)
    assert t.free_energy == pytest.approx(t.band_energy - t.entropy_trace / beta, abs=1e-14)
    assert t.provenance["entropy_model"]["alpha"] > 0


def test_thermodynamics_missing_entropy(m40):
    with pytest.raises(MissingEntropyModelError):
        thermodynamics(np.diag([0.0, 1.0]), 5.0, 0.5, ModelLibrary([m40]))


def test_expectation():
    D = np.array([[1.0, 0.5], [0.5, 0.0]])
    A = np.array([[2.0, 1.0], [1.0, 3.0]])
    assert expectation(D, A) == pytest.approx(np.trace(D @ A))
    with pytest.raises(ValidationError):
        expectation(D, np.eye(3))


def test_library_from_paths(tmp_path, m40):
    from fermiforge.io import save_model
    save_model(m40, tmp_path / "a.json")
    lib = ModelLibrary.from_paths([str(tmp_path)])
    assert len(lib) == 1 and list(lib)[0] == m40


def test_library_env(monkeypatch, tmp_path, m40):
    from fermiforge.io import save_model
    m = ModelCoefficients("mlsp2", Mlsp2Coefficients(m40.payload.layers), 41.0, 0.3)
    save_model(m, tmp_path / "x.json")
    monkeypatch.setenv("FERMIFORGE_MODEL_PATH", str(tmp_path))
    lib = ModelLibrary.default()
    assert any(x.beta0 == 41.0 for x in lib)


def test_entropy_model_holds_over_fermi_region(e40):
    from fermiforge.matrix import in_region_of_validity
    from fermiforge.models import evaluate_model
    from fermiforge.scalar import entropy_of_energy

    e0 = e40.info["final_max_error"]
    x = np.linspace(0.0, 1.0, 4001)
    worst = 0.0
    for bp in np.linspace(1.0, 80.0, 25):
        for mp in np.linspace(0.02, 0.98, 25):
            if not in_region_of_validity(bp, mp, e40.beta0, e40.mu0):
                continue
            x0 = (bp / e40.beta0) * (x - mp) + e40.mu0
            err = np.max(np.abs(evaluate_model(e40, x0) - entropy_of_energy(x, bp, mp)))
            worst = max(worst, err)
    assert worst <= 10 * e0
