"""Next-shift payload forecasting for open-pit haul fleets.

Submodules: ``simdata`` (synthetic shifts), ``ingest`` (CSV loading and
rain aggregation), ``features``, ``fleetmc`` (fleet regression and
scenarios), ``gbrt`` (boosted trees and Shapley values), ``lstm``,
``evaluation``, ``pipeline`` and ``cli``.
"""

from .config import PipelineConfig, load_config
from .errors import (
    AlignmentError,
    ConfigError,
    CoverageError,
    DataError,
    HaulcastError,
    ModelFileError,
    NumericError,
    ValidationError,
)
from .ingest import ShiftRecord
from .pipeline import run_pipeline
from .simdata import SimConfig, simulate_shifts

__version__ = "0.1.0"

__all__ = [
    "AlignmentError",
    "ConfigError",
    "CoverageError",
    "DataError",
    "HaulcastError",
    "ModelFileError",
    "NumericError",
    "PipelineConfig",
    "ShiftRecord",
    "SimConfig",
    "ValidationError",
    "load_config",
    "run_pipeline",
    "simulate_shifts",
    "__version__",
]
