import json

import numpy as np
import pytest

from fermiforge.embed import embed
from fermiforge.errors import ModelFileError
from fermiforge.io import (
    SCHEMA_VERSION,
    load_model,
    model_from_dict,
    model_to_dict,
    read_matrix,
    save_model,
    write_matrix,
)
from fermiforge.models import evaluate_model, sp2_model

ARCHS = ["mlsp2", "mlsp2_compact", "skipsp2", "maxsp2", "arbsp2"]


@pytest.mark.parametrize("arch", ARCHS + ["sp2", "entropy"])
def test_round_trip_bitwise(arch, tmp_path, m40, e40):
    if arch == "sp2":
        m = sp2_model(40, 0.3, 10)
    elif arch == "entropy":
        m = e40
    elif arch == "mlsp2_compact":
        m = embed(sp2_model(40, 0.3, 10), arch)
    else:
        m = embed(m40, arch)
    path = tmp_path / "m.json"
    save_model(m, path)
    back = load_model(path)
    assert back == m
    x = np.linspace(0, 1, 101)
    assert np.array_equal(evaluate_model(back, x), evaluate_model(m, x))
    assert back.info["source"] == str(path)


def test_schema_fields(m40):
    d = model_to_dict(m40, created="2026-01-01T00:00:00+00:00")
    assert d["schema_version"] == SCHEMA_VERSION
    assert d["architecture"] == "mlsp2" and d["layers"] == m40.layers
    assert isinstance(d["beta0"], str)
    assert set(d["training"]) >= {"seed", "sample_count", "weighting", "final_max_error"}
    json.dumps(d)


def test_bad_version(m40):
    d = model_to_dict(m40)
    d["schema_version"] = 99
    with pytest.raises(ModelFileError, match="schema_version"):
        model_from_dict(d)


def test_malformed(m40, tmp_path):
    d = model_to_dict(m40)
    del d["coefficients"]
    with pytest.raises(ModelFileError):
        model_from_dict(d)
    d = model_to_dict(m40)
    d["layers"] = 3
    with pytest.raises(ModelFileError):
        model_from_dict(d)
    p = tmp_path / "bad.json"
    p.write_text("{nope")
    with pytest.raises(ModelFileError):
        load_model(p)
    with pytest.raises(OSError):
        load_model(tmp_path / "missing.json")


def test_matrix_market_round_trip(tmp_path, rng):
    A = rng.standard_normal((7, 7))
    A = (A + A.T) / 2
    p = tmp_path / "H.mtx"
    write_matrix(p, A)
    assert np.array_equal(read_matrix(p), A)


def test_matrix_market_garbage(tmp_path):
    p = tmp_path / "x.mtx"
    p.write_text("hello\n")
    with pytest.raises(ModelFileError):
        read_matrix(p)
