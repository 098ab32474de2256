"""Python access to the selfgrid voltage-regulation simulator."""

from ._core import (
    Decomposition,
    DgMode,
    Error,
    GridModel,
    InvalidArgument,
    LadderExhausted,
    NumericalError,
    ParseError,
    PowerFlowSolution,
    SensitivityMatrix,
    SimReport,
    ValidationError,
    compare,
    compute_sensitivity,
    decode_message,
    decompose,
    encode_message,
    load_grid,
    parse_grid,
    run_scenario,
    serialize_grid,
    solve_lp,
    solve_power_flow,
    sweep,
    validate,
)

__all__ = [
    "Decomposition",
    "DgMode",
    "Error",
    "GridModel",
    "InvalidArgument",
    "LadderExhausted",
    "NumericalError",
    "ParseError",
    "PowerFlowSolution",
    "SensitivityMatrix",
    "SimReport",
    "ValidationError",
    "compare",
    "compute_sensitivity",
    "decode_message",
    "decompose",
    "encode_message",
    "load_grid",
    "parse_grid",
    "run_scenario",
    "serialize_grid",
    "solve_lp",
    "solve_power_flow",
    "sweep",
    "validate",
]
