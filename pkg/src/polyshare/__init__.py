"""Secret-sharing based secure evaluation of polynomial control laws."""

from polyshare.modring import FixedPointFormat, ScaledResidue, decode, encode, quantize
from polyshare.polyctrl import (
    N_PARTY,
    THREE_PARTY,
    PolynomialLaw,
    encode_state,
    evaluate_plaintext,
    evaluate_secure,
    load_law,
    plan_evaluation,
    quantize_law,
)

__version__ = "0.1.0"

__all__ = [
    "FixedPointFormat", "N_PARTY", "PolynomialLaw", "ScaledResidue", "THREE_PARTY", "decode", "encode",
    "encode_state", "evaluate_plaintext", "evaluate_secure", "load_law", "plan_evaluation", "quantize", "quantize_law",
]
