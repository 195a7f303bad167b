"""Transfer-learning benchmark harness for two-class chest X-ray classification."""

from ._core import (
    DataError,
    DomainError,
    Error,
    LookupError,
    ParseError,
    TrainingError,
    ValidationError,
    class_weights,
    combine_logits,
    decide,
    early_stop,
    format_gain,
    format_value,
    generate_synthetic,
    head_param_count,
    metric_set,
    registry,
    relative_gain,
    run_experiment,
    stratified_count,
)

__all__ = [
    "DataError",
    "DomainError",
    "Error",
    "LookupError",
    "ParseError",
    "TrainingError",
    "ValidationError",
    "class_weights",
    "combine_logits",
    "decide",
    "early_stop",
    "format_gain",
    "format_value",
    "generate_synthetic",
    "head_param_count",
    "metric_set",
    "registry",
    "relative_gain",
    "run_experiment",
    "stratified_count",
]
