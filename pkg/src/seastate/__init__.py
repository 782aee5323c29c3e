"""Seasonal time-series decomposition with state-space models.

A series is modeled as a sum of structural components (trend, seasonal,
stationary AR, trigonometric seasonal, one-factor curve), each a small
linear-Gaussian state-space block.  The exact Kalman likelihood drives
maximum-likelihood fitting, AIC compares candidate orders, and the
fixed-interval smoother extracts the components.
"""

from .components import (
    ComponentBlock,
    Composite,
    ModelSpec,
    TrigBlockSpec,
    build_ar,
    build_blocks,
    build_dummy_seasonal,
    build_one_factor,
    build_trend,
    build_trig_seasonal,
    compose,
    excluded_harmonics,
    harmonic_split,
    trig_block_dim,
)
from .estimation import (
    DecompositionResult,
    FitReport,
    ParamTransform,
    SweepResult,
    SweepRow,
    ar_to_parcor,
    count_params,
    decompose,
    fit_mle,
    forecast,
    parcor_to_ar,
    sweep,
)
from .kalman import (
    FilterResult,
    SmootherResult,
    StateSpaceModel,
    kalman_filter,
    kalman_smooth,
    predict,
)
from .timeseries import (
    TimeSeries,
    from_values,
    load_csv,
    log_transform,
    resample_decimate,
    subtract_series,
)
from .trigreg import (
    SubsetSelectionResult,
    TrigRegressionFit,
    design_matrix,
    fit_ols,
    subset_select,
    two_step_fit,
)

__version__ = "0.1.0"

__all__ = [
    "TimeSeries",
    "from_values",
    "load_csv",
    "log_transform",
    "resample_decimate",
    "subtract_series",
    "StateSpaceModel",
    "FilterResult",
    "SmootherResult",
    "kalman_filter",
    "kalman_smooth",
    "predict",
    "ModelSpec",
    "TrigBlockSpec",
    "ComponentBlock",
    "Composite",
    "build_trend",
    "build_dummy_seasonal",
    "build_ar",
    "build_trig_seasonal",
    "build_one_factor",
    "build_blocks",
    "compose",
    "harmonic_split",
    "excluded_harmonics",
    "trig_block_dim",
    "FitReport",
    "ParamTransform",
    "DecompositionResult",
    "SweepRow",
    "SweepResult",
    "count_params",
    "parcor_to_ar",
    "ar_to_parcor",
    "fit_mle",
    "decompose",
    "forecast",
    "sweep",
    "TrigRegressionFit",
    "SubsetSelectionResult",
    "design_matrix",
    "fit_ols",
    "subset_select",
    "two_step_fit",
    "__version__",
]
