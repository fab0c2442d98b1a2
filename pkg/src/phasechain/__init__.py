"""Discrete and continuous phase-space methods for open spin chains."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DegenerateKernel,
    DimensionMismatch,
    ExpansionFailure,
    InvalidDimension,
    InvalidRotation,
    OracleScaleError,
    PhaseChainError,
    PoleError,
    SamplingError,
    StepSizeError,
)
from .model import ModelParams, paper_params  # noqa: F401
