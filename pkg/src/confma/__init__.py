"""Conformal prediction intervals for model-averaged forecasts."""

__version__ = "0.1.0"

from .core import (ALL_SCHEMES, CandidateModel, ConfmaError, ConformalConfig, Dataset,
                   IntervalReport, ModelSet, Ordering, SchemeKind, Variant, WeightScheme,
                   all_subsets_model_set, bivariate_model_set, nested_model_set,
                   validate_dataset)
from .ensemble import BaggingFitter, EnsembleFitter
from .conformal import (adaptive_full_conformal, adaptive_split_conformal, conformal_interval,
                        full_conformal, split_conformal)

__all__ = [
    "ALL_SCHEMES", "CandidateModel", "ConfmaError", "ConformalConfig", "Dataset",
    "IntervalReport", "ModelSet", "Ordering", "SchemeKind", "Variant", "WeightScheme",
    "all_subsets_model_set", "bivariate_model_set", "nested_model_set", "validate_dataset",
    "BaggingFitter", "EnsembleFitter", "adaptive_full_conformal", "adaptive_split_conformal",
    "conformal_interval", "full_conformal", "split_conformal",
]
