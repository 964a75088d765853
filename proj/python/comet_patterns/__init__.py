"""Behavioral-pattern message passing runtime with an ATM case study.

Trace events are ``(seq, source, kind, digest)`` tuples.
"""

from ._comet import (
    CometError,
    ParseError,
    demo_patterns,
    format_trace,
    normalize_spec,
    parse_spec,
    parse_trace,
    run_demo,
    run_scenario,
    validate,
)

__all__ = [
    "CometError",
    "ParseError",
    "demo_patterns",
    "format_trace",
    "normalize_spec",
    "parse_spec",
    "parse_trace",
    "run_demo",
    "run_scenario",
    "validate",
]
