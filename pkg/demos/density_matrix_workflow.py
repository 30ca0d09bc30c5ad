"""Finite-temperature density matrix, chemical potential and free energy.

A random 200x200 Hamiltonian goes through the library workflow:
Gershgorin bounds, model selection, matrix polynomial evaluation. Every
number is checked against an explicit diagonalization.
"""

import numpy as np

from fermiforge.diagnostics import random_hamiltonian
from fermiforge.oracle import exact_mu, exact_thermodynamics, jacobi_eigendecomposition
from fermiforge.workflow import ModelLibrary, solve_chemical_potential, thermodynamics


def main():
    rng = np.random.default_rng(3)
    n, beta, n_occ = 200, 12.0, 80.0
    H = random_hamiltonian(n, rng)
    lib = ModelLibrary.default()
    print(f"library: {len(lib)} models")

    eig = jacobi_eigendecomposition(H)
    mu_ref = exact_mu(H, beta, n_occ, eig=eig)

    D, rep = solve_chemical_potential(H, beta, n_occ, mu_guess=0.0, lib=lib)
    print(f"\nsolving Tr D = {n_occ:g} from mu = 0:")
    for i, (mu, g) in enumerate(rep.residual_history):
        print(f"  {i}: mu = {mu:+.12f}   Tr D - N = {g:+.3e}")
    print(f"mu = {rep.mu_final:.10f}  (diagonalization: {mu_ref:.10f})")

    t = thermodynamics(H, beta, rep.mu_final, lib)
    ref = exact_thermodynamics(H, beta, rep.mu_final, eig)
    print(f"\nmodel at beta0={t.provenance['model']['beta0']:g} with "
          f"{t.provenance['model']['layers']} layers, beta'={t.provenance['beta_prime']:.2f}")
    print(f"|D - D_exact|_2   = {np.linalg.norm(t.density - ref.density, 2):.2e}")
    print(f"Tr S    {t.entropy_trace:14.8f}   exact {ref.entropy_trace:14.8f}")
    print(f"E_band  {t.band_energy:14.8f}   exact {ref.band_energy:14.8f}")
    print(f"G       {t.free_energy:14.8f}   exact {ref.free_energy:14.8f}")


if __name__ == "__main__":
    main()
