"""How much does training buy over plain SP2 at the same depth?

Loads the packaged 20-layer model trained at beta0 = 308.3, mu0 = 0.5 and
compares it with the truncated SP2 sequence of the same depth.
"""

import numpy as np

from fermiforge.io import load_model
from fermiforge.models import evaluate_model, sp2_model
from fermiforge.scalar import fermi, layer_count_estimate
from fermiforge.workflow import ModelLibrary


def main():
    lib = ModelLibrary.default()
    m = next(x for x in lib.fermi_models() if x.beta0 == 308.3)
    n = m.layers
    print(f"model: {m.architecture.value}, beta0={m.beta0}, mu0={m.mu0}, {n} layers")
    print(f"layer_count_estimate(308.3) = {layer_count_estimate(308.3)}")

    x = np.linspace(0.0, 1.0, 200001)
    exact = fermi(x, m.beta0, m.mu0)
    sp2 = sp2_model(m.beta0, m.mu0, n)
    e_model = np.abs(evaluate_model(m, x) - exact)
    e_sp2 = np.abs(evaluate_model(sp2, x) - exact)
    print(f"max |error|  trained: {e_model.max():.2e}   truncated SP2: {e_sp2.max():.2e}")

    print("\n   x        fermi        trained      SP2")
    for xi in (0.40, 0.48, 0.495, 0.5, 0.505, 0.52, 0.60):
        print(f"{xi:6.3f}  {fermi(xi, m.beta0, m.mu0):.9f}  "
              f"{evaluate_model(m, xi):.9f}  {evaluate_model(sp2, xi):.9f}")


if __name__ == "__main__":
    main()
