"""Model files (versioned JSON) and Matrix Market matrices."""

from datetime import datetime, timezone
import json
import os

import numpy as np
import scipy.io

from .errors import ModelFileError
from .models import (
    ArbSp2Coefficients,
    Architecture,
    EntropyModelCoefficients,
    MaxSp2Coefficients,
    Mlsp2Coefficients,
    Mlsp2CompactCoefficients,
    ModelCoefficients,
    SkipSp2Coefficients,
    Sp2Coefficients,
)

__all__ = [
    "SCHEMA_VERSION",
    "model_to_dict",
    "model_from_dict",
    "save_model",
    "load_model",
    "read_matrix",
    "write_matrix",
]

SCHEMA_VERSION = 1


def _enc(a):
    """Nested lists of 17-significant-digit decimal strings."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return format(float(a), ".17g")
    return [_enc(row) for row in a]


def _dec(v):
    if isinstance(v, list):
        return np.array([_dec(x) for x in v], dtype=float)
    return float(v)


def _payload_fields(arch, p):
    if arch is Architecture.SP2:
        return {"signs": list(p.signs)}
    if arch is Architecture.MLSP2:
        return {"layers": _enc(p.layers)}
    if arch is Architecture.MLSP2_COMPACT:
        return {"pairs": _enc(p.pairs), "final": _enc(p.final)}
    if arch is Architecture.MAXSP2:
        return {"delta": _enc(p.delta), "theta": _enc(p.theta), "gamma": _enc(p.gamma),
                "offset": _enc(p.offset)}
    if arch is Architecture.SKIPSP2:
        return {"alpha": _enc(p.alpha), "beta": _enc(p.beta), "gamma": _enc(p.gamma),
                "gamma_out": _enc(p.gamma_out), "acc0": _enc(p.acc0)}
    if arch is Architecture.ARBSP2:
        return {"delta": _enc(p.delta), "delta2": _enc(p.delta2), "phi": _enc(p.phi),
                "psi": _enc(p.psi), "gamma": _enc(p.gamma), "offset": _enc(p.offset)}
    return {"layers": _enc(p.inner.layers), "alpha": _enc(p.alpha)}


def _payload_from(arch, c, mu0):
    if arch is Architecture.SP2:
        return Sp2Coefficients(tuple(int(s) for s in c["signs"]))
    if arch is Architecture.MLSP2:
        return Mlsp2Coefficients(_dec(c["layers"]))
    if arch is Architecture.MLSP2_COMPACT:
        return Mlsp2CompactCoefficients(_dec(c["pairs"]), _dec(c["final"]))
    if arch is Architecture.MAXSP2:
        return MaxSp2Coefficients(_dec(c["delta"]), _dec(c["theta"]), _dec(c["gamma"]),
                                  _dec(c["offset"]))
    if arch is Architecture.SKIPSP2:
        return SkipSp2Coefficients(_dec(c["alpha"]), _dec(c["beta"]), _dec(c["gamma"]),
                                   _dec(c["gamma_out"]), _dec(c["acc0"]))
    if arch is Architecture.ARBSP2:
        return ArbSp2Coefficients(_dec(c["delta"]), _dec(c["delta2"]), _dec(c["phi"]),
                                  _dec(c["psi"]), _dec(c["gamma"]), _dec(c["offset"]))
    return EntropyModelCoefficients(Mlsp2Coefficients(_dec(c["layers"])), _dec(c["alpha"]), mu0)


def model_to_dict(m, created=None):
    info = dict(m.info)
    training = {k: info.get(k) for k in
                ("seed", "sample_count", "weighting", "final_max_error", "iterations")}
    if training["final_max_error"] is not None:
        training["final_max_error"] = _enc(training["final_max_error"])
    extra = {k: v for k, v in info.items() if k not in training}
    out = {
        "schema_version": SCHEMA_VERSION,
        "architecture": m.architecture.value,
        "beta0": _enc(m.beta0),
        "mu0": _enc(m.mu0),
        "layers": m.layers,
        "coefficients": _payload_fields(m.architecture, m.payload),
        "training": training,
        "created": created or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        out["notes"] = extra
    return out


def model_from_dict(d):
    try:
        version = d["schema_version"]
        if version != SCHEMA_VERSION:
            raise ModelFileError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
        arch = Architecture.parse(d["architecture"])
        beta0, mu0 = float(d["beta0"]), float(d["mu0"])
        payload = _payload_from(arch, d["coefficients"], mu0)
        info = {k: v for k, v in (d.get("training") or {}).items() if v is not None}
        if "final_max_error" in info:
            info["final_max_error"] = float(info["final_max_error"])
        info.update(d.get("notes") or {})
        m = ModelCoefficients(arch, payload, beta0, mu0, info)
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFileError(f"malformed model file: {exc}") from exc
    if m.layers != d.get("layers", m.layers):
        raise ModelFileError("layer count does not match the coefficients")
    return m


def save_model(m, path, created=None):
    with open(path, "w") as fh:
        json.dump(model_to_dict(m, created), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Read a model file. Raises ``OSError`` if unreadable and
    ``ModelFileError`` if the content is invalid."""
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFileError(f"{path}: not valid JSON ({exc})") from exc
    m = model_from_dict(d)
    return m.with_payload(m.payload, source=os.fspath(path))


def read_matrix(path):
    """Dense matrix from a Matrix Market file."""
    try:
        M = scipy.io.mmread(path)
    except ValueError as exc:
        raise ModelFileError(f"{path}: not a Matrix Market file ({exc})") from exc
    if hasattr(M, "toarray"):
        M = M.toarray()
    return np.asarray(M, dtype=float)


def write_matrix(path, M, comment=""):
    """Write a symmetric dense matrix in array format with 17 digits."""
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    scipy.io.mmwrite(path, M, comment=comment, field="real", precision=17, symmetry="symmetric")
