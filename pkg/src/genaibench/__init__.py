"""genaibench: benchmark harness for concurrent generative-AI workloads on
a single shared machine, with a deterministic contention simulator."""

from .config import (
    AppKind,
    BenchmarkSpec,
    Device,
    Mode,
    Policy,
    SloKind,
    SloSpec,
    TaskDefinition,
    WorkflowNodeSpec,
    load_config,
    parse_config,
    serialize_spec,
    validate_spec,
)
from .dag import Dag, DagNode, NodeKind, build_dag, ready_set, validate_dag
from .engine import RunTrace, run
from .metrics import Report, build_report, evaluate_slo
from .simgpu import SimDevice, SimKernel, SimResult, exclusive_baseline, simulate

__version__ = "0.1.0"

__all__ = [
    "AppKind",
    "BenchmarkSpec",
    "Dag",
    "DagNode",
    "Device",
    "Mode",
    "NodeKind",
    "Policy",
    "Report",
    "RunTrace",
    "SimDevice",
    "SimKernel",
    "SimResult",
    "SloKind",
    "SloSpec",
    "TaskDefinition",
    "WorkflowNodeSpec",
    "build_dag",
    "build_report",
    "evaluate_slo",
    "exclusive_baseline",
    "load_config",
    "parse_config",
    "ready_set",
    "run",
    "serialize_spec",
    "simulate",
    "validate_dag",
    "validate_spec",
    "__version__",
]
