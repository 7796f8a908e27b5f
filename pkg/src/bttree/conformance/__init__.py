"""Oracles, invariant checks, differential and concurrent stress testing."""

from .check import Violation, check_arena, check_tree, corrupt_leaf_key
from .differential import Verdict, differential_run, make_ops
from .oracle import DenseOracle, OracleMap
from .stress import StressVerdict, concurrent_stress
from .trace import OpTrace, replay, shrink

__all__ = [
    "DenseOracle",
    "OpTrace",
    "OracleMap",
    "StressVerdict",
    "Verdict",
    "Violation",
    "check_arena",
    "check_tree",
    "concurrent_stress",
    "corrupt_leaf_key",
    "differential_run",
    "make_ops",
    "replay",
    "shrink",
]
