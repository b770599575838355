"""Deterministic queueing simulator: workload, hidden ground truth, engine."""

from .engine import (
    DeviceSnapshot,
    Engine,
    EngineError,
    EventAnnotation,
    ExecutionRecord,
    ObservableState,
    OracleAccess,
    SimulationResult,
    Telemetry,
    assert_no_ground_truth,
    run_scenario,
)
from .truth import (
    DEFAULT_DEGRADATION_FACTOR,
    DEGRADED,
    SEMANTIC_LABELS,
    STABLE,
    DeviceLeave,
    DeviceReturn,
    DriftRestore,
    DriftStep,
    GroundTruthState,
    PlanError,
    ScenarioPlan,
    SemanticOffset,
    SemanticOnset,
    builtin_plans,
    plan_from_dicts,
)
from .workload import INPUT_BINS, OUTPUT_BINS, TOKEN_BIN_CYCLE, TaskSpec, generate_workload

__all__ = [
    "DEFAULT_DEGRADATION_FACTOR",
    "DEGRADED",
    "STABLE",
    "SEMANTIC_LABELS",
    "INPUT_BINS",
    "OUTPUT_BINS",
    "TOKEN_BIN_CYCLE",
    "DeviceLeave",
    "DeviceReturn",
    "DeviceSnapshot",
    "DriftRestore",
    "DriftStep",
    "Engine",
    "EngineError",
    "EventAnnotation",
    "ExecutionRecord",
    "GroundTruthState",
    "ObservableState",
    "OracleAccess",
    "PlanError",
    "ScenarioPlan",
    "SemanticOffset",
    "SemanticOnset",
    "SimulationResult",
    "TaskSpec",
    "Telemetry",
    "assert_no_ground_truth",
    "builtin_plans",
    "generate_workload",
    "plan_from_dicts",
    "run_scenario",
]
