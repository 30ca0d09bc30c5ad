"""Where a trained model stays accurate, and what lower precision costs.

First an ASCII map of scalar error over normalized (beta', mu') for the
beta0 = 40, mu0 = 0.3 model; then one matrix evaluated in double, single
and emulated mixed precision.
"""

import numpy as np

from fermiforge.diagnostics import random_orthogonal, validity_heatmap
from fermiforge.matrix import MatmulCounter, apply_model
from fermiforge.models import evaluate_model
from fermiforge.workflow import ModelLibrary


def main():
    lib = ModelLibrary.default()
    m = next(x for x in lib.fermi_models() if x.beta0 == 40)
    e0 = m.info["final_max_error"]
    W, Hn = 24, 12
    cells = validity_heatmap(m, beta_max=80.0, grid=(W, Hn), probe=801)
    print(f"error relative to training error {e0:.1e}")
    print("  '.' <= 10x   'o' <= 1e3x   'X' larger   '#' <= 10x but outside the region")
    for j in reversed(range(Hn)):
        row = ""
        for i in range(W):
            c = cells[i * Hn + j]
            r = c.max_error / e0
            ch = "." if r <= 10 else ("o" if r <= 1e3 else "X")
            row += ch if c.in_region else ("#" if ch == "." else ch)
        print(f"mu'={cells[j].mu_prime:4.2f} {row}")
    print(f"         beta' from {cells[0].beta_prime:.1f} to {cells[-1].beta_prime:.1f}")

    rng = np.random.default_rng(0)
    N = 256
    Q = random_orthogonal(N, rng)
    lam = rng.uniform(0, 1, N)
    H0 = (Q * lam) @ Q.T
    ref = (Q * evaluate_model(m, lam)) @ Q.T
    print(f"\nN={N}, {m.layers} layers:")
    for mode in ("double", "single", "mixed"):
        c = MatmulCounter()
        D = apply_model(H0, m, mode, c)
        print(f"  {mode:7s} |D - D_ref|_2 = {np.linalg.norm(D - ref, 2):.2e}  "
              f"multiplies: {c.full} full, {c.half} half-input")


if __name__ == "__main__":
    main()
