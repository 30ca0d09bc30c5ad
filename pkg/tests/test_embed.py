import numpy as np
import pytest

from fermiforge.embed import can_embed, embed
from fermiforge.errors import DegenerateCoefficientsError, ValidationError
from fermiforge.models import Mlsp2Coefficients, ModelCoefficients, evaluate_model, sp2_model

GRID = np.linspace(0, 1, 10001)
CHAIN = ["mlsp2", "skipsp2", "maxsp2", "arbsp2"]


def _dev(a, b):
    return float(np.max(np.abs(evaluate_model(a, GRID) - evaluate_model(b, GRID))))


def test_sp2_to_mlsp2_layers():
    m = sp2_model(100, 0.5, 2)
    assert m.payload.signs == (1, -1)
    e = embed(m, "mlsp2")
    assert np.array_equal(e.payload.layers, [[1, 0, 0, 0], [-1, 2, 0, 0]])
    assert _dev(e, m) <= 1e-14


def test_trained_chain(m40):
    prev = m40
    for t in CHAIN[1:]:
        cur = embed(prev, t)
        assert cur.architecture.value == t
        assert _dev(cur, m40) <= 1e-12
        prev = cur


def _near_sp2(seed, layers=8):
    rng = np.random.default_rng(seed)
    base = embed(sp2_model(50, 0.4, layers), "mlsp2").payload.layers
    return ModelCoefficients("mlsp2", Mlsp2Coefficients(base + 0.05 * rng.standard_normal(base.shape)),
                             50, 0.4)


def test_compact_round_trip():
    m = _near_sp2(11)
    c = embed(m, "mlsp2_compact")
    assert _dev(c, m) <= 1e-12
    back = embed(c, "mlsp2")
    assert _dev(back, m) <= 1e-12


def test_compact_scale_underflow(m40):
    # squared scale factors compound per layer, so deep trained models
    # with quadratic weights away from +-1 have no float64 compact form
    with pytest.raises(DegenerateCoefficientsError):
        embed(m40, "mlsp2_compact")


def test_skip_padding(m40):
    s = embed(m40, "skipsp2", skip_depth=3, accumulators=2)
    assert s.payload.skip_depth == 3 and s.payload.accumulators == 2
    assert _dev(s, m40) <= 1e-12
    assert _dev(embed(s, "maxsp2"), m40) <= 1e-12


def test_max_to_arb_gauge(m40):
    mx = embed(m40, "maxsp2")
    g = np.linspace(0.9, 1.1, mx.layers)
    arb = embed(mx, "arbsp2", gauge=g)
    assert _dev(arb, mx) <= 1e-12
    plain = embed(mx, "arbsp2")
    assert np.array_equal(plain.payload.phi, plain.payload.psi)
    assert _dev(plain, mx) <= 1e-15


@pytest.mark.parametrize("seed", range(5))
def test_random_models_chain(seed):
    m = _near_sp2(seed)
    for t in CHAIN[1:] + ["mlsp2_compact"]:
        assert _dev(embed(m, t), m) <= 1e-12


def test_zero_quadratic_is_degenerate():
    m = ModelCoefficients("mlsp2", Mlsp2Coefficients([[1, 0, 0, 0], [0, 1, 0, 0]]), 10, 0.5)
    with pytest.raises(DegenerateCoefficientsError):
        embed(m, "skipsp2")


@pytest.mark.parametrize("src,dst", [("maxsp2", "mlsp2"), ("mlsp2", "sp2"), ("arbsp2", "maxsp2"),
                                     ("skipsp2", "mlsp2_compact")])
def test_downward_rejected(src, dst):
    m = embed(_near_sp2(0), src)
    assert not can_embed(src, dst)
    with pytest.raises(ValidationError, match="one-directional"):
        embed(m, dst)


def test_entropy_not_embeddable(e40):
    with pytest.raises(ValidationError):
        embed(e40, "maxsp2")
