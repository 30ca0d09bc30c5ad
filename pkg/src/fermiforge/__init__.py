"""Recursive quadratic (SP2-family) models of the Fermi and entropy functions."""

from .errors import *  # noqa: F401,F403
from .scalar import (
    ENTROPY_ALPHA,
    INV_GOLDEN,
    FermiParams,
    beta0_for_layer_count,
    entropy_ansatz,
    entropy_exact,
    fermi,
    layer_count_estimate,
    sp2_sign_sequence,
)
from .models import Architecture, ModelCoefficients, evaluate_model, sp2_model
from .embed import embed

__version__ = "0.1.0"
