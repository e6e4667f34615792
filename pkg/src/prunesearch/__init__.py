"""Pruning-metric discovery toolkit for desk-scale decoder-only transformers."""

from .metric import MAGNITUDE, Coeff, MetricConfig, MetricKind, Transform, preset
from .model import ModelConfig, ModelWeights, forward, init_model
from .objective import CalibrationSet, evaluate_config, make_context, synthetic_calibration
from .prune import Mask, SemiStructured, Unstructured, build_mask, prune_model
from .search import SearchParams, SearchResult, exhaustive_search, nsga2_search, random_search

__version__ = "0.1.0"

__all__ = [
    "MAGNITUDE",
    "CalibrationSet",
    "Coeff",
    "Mask",
    "MetricConfig",
    "MetricKind",
    "ModelConfig",
    "ModelWeights",
    "SearchParams",
    "SearchResult",
    "SemiStructured",
    "Transform",
    "Unstructured",
    "build_mask",
    "evaluate_config",
    "exhaustive_search",
    "forward",
    "init_model",
    "make_context",
    "nsga2_search",
    "preset",
    "prune_model",
    "random_search",
    "synthetic_calibration",
    "__version__",
]
