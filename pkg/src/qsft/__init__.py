"""Sparse Fourier transforms of functions on Z_q^n from few queries."""
from .coded import CodedOffsetPlan, build_parity_check, syndrome_decode
from .detect import BinKind, Detection, Detector, DetectorConfig
from .errors import BudgetError, ConstructionError, DomainError, OracleError, QSFTError, UsageError
from .oracle import (FunctionOracle, SubprocessOracle, SyntheticOracle, SyntheticSpec, TableOracle,
                     synthesize, write_table)
from .peeling import DecodeResult, decode
from .plans import REGIMES, SamplingPlan, default_b, make_plan
from .qary import QIndex, all_indices, arg_q, format_digits, parse_digits, rank, roots_of_unity, unrank
from .spectral import (DenseSignal, SparseSpectrum, aliasing_sum, dense_forward, dense_inverse, nmse,
                       subsample_transform, synthesis)

__version__ = "0.1.0"

__all__ = [
    "BinKind", "BudgetError", "CodedOffsetPlan", "ConstructionError", "DecodeResult", "DenseSignal",
    "Detection", "Detector", "DetectorConfig", "DomainError", "FunctionOracle", "OracleError",
    "QIndex", "QSFTError", "REGIMES", "SamplingPlan", "SparseSpectrum", "SubprocessOracle",
    "SyntheticOracle", "SyntheticSpec", "TableOracle", "UsageError", "aliasing_sum", "all_indices",
    "arg_q", "build_parity_check", "decode", "default_b", "dense_forward", "dense_inverse",
    "format_digits", "make_plan", "nmse", "parse_digits", "rank", "roots_of_unity",
    "subsample_transform", "synthesis", "synthesize", "syndrome_decode", "unrank", "write_table",
]
