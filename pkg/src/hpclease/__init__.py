"""Simulator and policy library for leased high-priority spectrum channels
serving smart-grid concentrator fleets."""

from .config import ScenarioConfig
from .engine import (
    OracleComparison,
    PolicySpec,
    RunMetrics,
    compare_with_oracle,
    derive_quality_params,
    is_unit_granular,
    make_policy,
    oracle_reference,
    run,
    run_matched,
)
from .env import (
    ArrivalBatch,
    PriceSample,
    SpectrumLevel,
    Trace,
    generate_trace,
    load_trace,
    save_trace,
    unit_prices,
)
from .errors import (
    ConfigurationError,
    InfeasibleError,
    InvariantViolationError,
    TraceFormatError,
)
from .oracle import (
    OfflineInstance,
    Schedule,
    instance_from_trace,
    lower_bound_gap,
    solve_bruteforce,
    solve_dp,
    validate_schedule,
)
from .policy import (
    Action,
    HpcDecision,
    LyapunovParams,
    QualityParams,
    StaticParams,
)
from .report import (
    SweepPoint,
    SweepResult,
    emit,
    quality_sweep_summary,
    v_sweep_summary,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ArrivalBatch",
    "ConfigurationError",
    "HpcDecision",
    "InfeasibleError",
    "InvariantViolationError",
    "LyapunovParams",
    "OfflineInstance",
    "OracleComparison",
    "PolicySpec",
    "PriceSample",
    "QualityParams",
    "RunMetrics",
    "Schedule",
    "ScenarioConfig",
    "SpectrumLevel",
    "StaticParams",
    "SweepPoint",
    "SweepResult",
    "Trace",
    "TraceFormatError",
    "compare_with_oracle",
    "derive_quality_params",
    "emit",
    "generate_trace",
    "instance_from_trace",
    "is_unit_granular",
    "load_trace",
    "lower_bound_gap",
    "make_policy",
    "oracle_reference",
    "quality_sweep_summary",
    "run",
    "run_matched",
    "save_trace",
    "solve_bruteforce",
    "solve_dp",
    "unit_prices",
    "v_sweep_summary",
    "validate_schedule",
    "__version__",
]
