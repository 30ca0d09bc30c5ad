import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fermiforge.errors import DomainError, ValidationError
from fermiforge.scalar import (
    ENTROPY_ALPHA,
    INV_GOLDEN,
    LN2,
    FermiParams,
    beta0_for_layer_count,
    entropy_ansatz,
    entropy_exact,
    entropy_of_energy,
    fermi,
    fermi_derivative,
    layer_count_estimate,
    layer_count_exact,
    sp2_sign_sequence,
    step_composition_derivative,
    step_composition_f1f0,
)


def test_fermi_at_mu_is_half():
    assert fermi(0.5, FermiParams(10, 0.5)) == 0.5


def test_fermi_quarter():
    beta, mu = 7.0, 0.2
    assert fermi(mu + math.log(3) / beta, beta, mu) == pytest.approx(0.25, rel=1e-15)


def test_fermi_extreme_no_overflow():
    with np.errstate(over="raise", invalid="raise"):
        v = fermi(0.9, 1500, 1 / 3)
    assert 0.0 <= v < 1e-300
    assert fermi(-1e6, 1e6, 0.0) == 1.0


def test_fermi_params_validation():
    with pytest.raises(ValidationError):
        FermiParams(0.0, 0.5)
    with pytest.raises(ValidationError):
        FermiParams(1.0, float("nan"))


@given(st.floats(0, 1), st.floats(0.5, 2000), st.floats(0.01, 0.99))
def test_fermi_flip_symmetry(x, beta, mu):
    assert abs(fermi(x, beta, mu) - (1.0 - fermi(1.0 - x, beta, 1.0 - mu))) <= 1e-15


def test_fermi_derivative_matches_finite_difference():
    x = np.linspace(0.2, 0.4, 7)
    h = 1e-6
    fd = (fermi(x + h, 40, 0.3) - fermi(x - h, 40, 0.3)) / (2 * h)
    assert np.allclose(fermi_derivative(x, 40, 0.3), fd, rtol=1e-7, atol=1e-10)


def test_entropy_exact_examples():
    assert entropy_exact(0.5) == pytest.approx(LN2, rel=1e-15)
    assert entropy_exact(0.0) == 0.0
    assert entropy_exact(1.0) == 0.0
    assert entropy_exact(0.25) == pytest.approx(0.5623351446188083, rel=1e-14)


@pytest.mark.parametrize("y", [-0.1, 1.5, float("nan")])
def test_entropy_exact_domain(y):
    with pytest.raises(DomainError):
        entropy_exact(y)


def test_entropy_of_energy_consistent():
    x = np.linspace(0, 1, 101)
    assert np.allclose(entropy_of_energy(x, 40, 0.3), entropy_exact(fermi(x, 40, 0.3)),
                       atol=1e-14)
    # tails keep relative accuracy where the direct route underflows to 0
    assert entropy_of_energy(0.7, 1500, 1 / 3) > 0.0


def test_sp2_sequence_half_tie_squares():
    signs, traj = sp2_sign_sequence(0.5, 4)
    assert signs[:2] == (1, -1)
    assert traj[0] == 0.5 and len(traj) == len(signs) + 1


def test_sp2_sequence_golden_fixed_point():
    signs, traj = sp2_sign_sequence(INV_GOLDEN, 10)
    assert signs == (1, -1) * 5
    assert np.allclose(traj[::2], INV_GOLDEN, atol=1e-12)
    assert np.allclose(traj[1::2], INV_GOLDEN ** 2, atol=1e-12)


def test_sp2_sequence_zero_layers():
    assert sp2_sign_sequence(0.5, 0) == ((), [0.5])


def test_sp2_sequence_tol_stops_early():
    signs, traj = sp2_sign_sequence(INV_GOLDEN, 100, tol=1e-12)
    assert signs == (1, -1) and abs(traj[-1] - INV_GOLDEN) <= 1e-12


def test_layer_count_examples():
    assert layer_count_estimate(308.3) == 20
    assert layer_count_estimate(33.3) == 10
    assert layer_count_estimate(4.0) == 1
    assert layer_count_estimate(1500) == 28
    assert layer_count_estimate(40) == 11


def test_layer_count_exact_tracks_estimate():
    for n in range(1, 41):
        assert abs(layer_count_exact(beta0_for_layer_count(n)) - n) < 1e-9


@pytest.mark.parametrize("n", range(1, 41))
def test_layer_count_round_trip(n):
    assert layer_count_estimate(beta0_for_layer_count(n)) == n


def test_beta0_for_layer_count_values():
    assert beta0_for_layer_count(10) == pytest.approx(33.31, abs=0.01)
    assert beta0_for_layer_count(1) == pytest.approx(4 * 2 * INV_GOLDEN, rel=1e-15)
    with pytest.raises(ValidationError):
        beta0_for_layer_count(0)


def test_step_composition_examples():
    assert abs(step_composition_f1f0(INV_GOLDEN, 25) - INV_GOLDEN) <= 1e-15 * 25
    assert step_composition_f1f0(0.1, 1) == pytest.approx(0.0199, rel=1e-14)
    assert step_composition_f1f0(0.0, 5) == 0.0
    assert step_composition_f1f0(1.0, 5) == 1.0


@pytest.mark.parametrize("n", [2, 4, 10, 20, 30])
def test_step_composition_slope_at_golden(n):
    _, d = step_composition_derivative(INV_GOLDEN, n)
    assert d == pytest.approx((2 * INV_GOLDEN) ** n, rel=1e-10)


@given(st.floats(1e-6, 0.3))
def test_quadratic_convergence_bound(x):
    ratio = step_composition_f1f0(x, 1) / x ** 2
    assert 2 - x * x - 1e-12 <= ratio <= 2 + 1e-12


def test_entropy_ansatz_peak():
    f = lambda z: fermi(z, 40, 0.3)
    assert entropy_ansatz(0.3, f, mu=0.3) == pytest.approx(LN2, rel=1e-15)


def test_entropy_ansatz_curvature():
    beta, mu, h = 40.0, 0.3, 1e-4
    f = lambda z: fermi(z, beta, mu)
    s = lambda x: entropy_ansatz(x, f, ENTROPY_ALPHA, mu)
    second = (s(mu + h) - 2 * s(mu) + s(mu - h)) / h ** 2
    assert second == pytest.approx(-beta ** 2 / 4, rel=1e-4)


def test_entropy_ansatz_alpha_error_levels():
    x = np.linspace(0, 1, 20001)
    exact = entropy_of_energy(x, 40, 0.3)
    f = lambda z: fermi(z, 40, 0.3)
    e_curv = np.max(np.abs(entropy_ansatz(x, f, 0.849322, 0.3) - exact))
    e_lsq = np.max(np.abs(entropy_ansatz(x, f, 0.842704, 0.3) - exact))
    assert e_curv <= 5e-3
    assert e_lsq <= 2e-3
    with pytest.raises(ValidationError):
        entropy_ansatz(0.3, f, 1.2, 0.3)
