"""Python bindings for the ugap core."""

from ._ugap import (
    AlignmentError,
    ConfigError,
    DegenerateError,
    InputError,
    MockBackend,
    RankDeficiencyError,
    UgapError,
    UndefinedCorrelationError,
    __version__,
    fit_quadratic,
    median,
    metrics,
    relative_pmi_increase,
    run,
    spearman,
)

__all__ = [
    "AlignmentError",
    "ConfigError",
    "DegenerateError",
    "InputError",
    "MockBackend",
    "RankDeficiencyError",
    "UgapError",
    "UndefinedCorrelationError",
    "__version__",
    "fit_quadratic",
    "median",
    "metrics",
    "relative_pmi_increase",
    "run",
    "spearman",
]
