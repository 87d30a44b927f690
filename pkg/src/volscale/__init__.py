"""Composition-aware scaling-law toolkit.

Budget-constrained dataset subsampling, dataset-volume accounting, robust
fitting of accuracy = A * V**beta * M**gamma + E, prediction, normalized
token-efficiency analysis, and pooled-vs-per-strategy baseline comparison.
"""

from .corpus import (
    DatasetSummary,
    Example,
    RunRecord,
    Strategy,
    approximate_token_count,
    dump_examples,
    load_examples,
    load_runs,
    summarize,
)
from .errors import (
    DataFormatError,
    DegenerateDesignError,
    ExcludedPointError,
    InfeasibleGridError,
    OutputExistsError,
    PositivityError,
    VolscaleError,
    VolumeMismatchError,
)
from .experiment import (
    AblationGroupReport,
    ComparisonReport,
    ConsistencyFlag,
    StrategyTableRow,
    SyntheticResult,
    SyntheticSpec,
    ablation_fixed_volume,
    build_strategy_table,
    compare_pooled_vs_per_strategy,
    emit_report,
    generate_synthetic,
    group_records_by_volume,
    validate_table_consistency,
)
from .scaling_law import (
    EfficiencyPoint,
    FitConfig,
    HuberFit,
    ScalingLawFit,
    fit_grid,
    fit_huber,
    linearize,
    predict,
    token_efficiency,
)
from .subsampler import (
    SELECTION_STRATEGIES,
    NestingResult,
    Selection,
    canonical_order,
    nesting_check,
    subsample,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # corpus
    "Example",
    "DatasetSummary",
    "RunRecord",
    "Strategy",
    "approximate_token_count",
    "load_examples",
    "dump_examples",
    "load_runs",
    "summarize",
    # subsampler
    "SELECTION_STRATEGIES",
    "Selection",
    "NestingResult",
    "canonical_order",
    "subsample",
    "nesting_check",
    # scaling law
    "FitConfig",
    "HuberFit",
    "ScalingLawFit",
    "EfficiencyPoint",
    "linearize",
    "fit_huber",
    "fit_grid",
    "predict",
    "token_efficiency",
    # experiment
    "StrategyTableRow",
    "ConsistencyFlag",
    "ComparisonReport",
    "AblationGroupReport",
    "SyntheticSpec",
    "SyntheticResult",
    "build_strategy_table",
    "validate_table_consistency",
    "compare_pooled_vs_per_strategy",
    "group_records_by_volume",
    "ablation_fixed_volume",
    "generate_synthetic",
    "emit_report",
    # errors
    "VolscaleError",
    "DataFormatError",
    "DegenerateDesignError",
    "InfeasibleGridError",
    "PositivityError",
    "ExcludedPointError",
    "VolumeMismatchError",
    "OutputExistsError",
]
