"""Execution boundary: reference targets, wire protocol, process harness."""

from .protocol import (
    DEFAULT_CALL_TIMEOUT_S,
    ExecRequest,
    ExecResult,
    ExecutorUnavailable,
    InProcessExecutor,
    PROTOCOL_VERSION,
    ProtocolError,
    Status,
    SubprocessExecutor,
    execute_reference,
    parse_request_frame,
    parse_result_frame,
    reference_worker_cmd,
    request_frame,
    result_frame,
    serve,
)
from .reference import (
    Defect,
    ReferenceTarget,
    SimulatedCrash,
    TargetError,
    UnknownApi,
    get_target,
    ground_truth,
    list_reference_targets,
    load_target_ruleset,
    probe_inputs,
    seed_inputs,
    short_name,
    validity_predicate,
)

__all__ = [
    "DEFAULT_CALL_TIMEOUT_S", "Defect", "ExecRequest", "ExecResult",
    "ExecutorUnavailable", "InProcessExecutor", "PROTOCOL_VERSION",
    "ProtocolError", "ReferenceTarget", "SimulatedCrash", "Status",
    "SubprocessExecutor", "TargetError", "UnknownApi", "execute_reference",
    "get_target", "ground_truth", "list_reference_targets",
    "load_target_ruleset", "parse_request_frame", "parse_result_frame",
    "probe_inputs", "reference_worker_cmd", "request_frame", "result_frame",
    "seed_inputs", "serve", "short_name", "validity_predicate",
]
