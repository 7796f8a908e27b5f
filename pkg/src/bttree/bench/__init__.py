"""Throughput harness with in-repo baselines."""

from .baselines import HashMap, TreapMap
from .report import emit_csv, parse_csv, plot_throughput
from .workload import BenchResult, Mix, WorkloadSpec, make_map, prefill, run_workload

__all__ = [
    "BenchResult",
    "HashMap",
    "Mix",
    "TreapMap",
    "WorkloadSpec",
    "emit_csv",
    "make_map",
    "parse_csv",
    "plot_throughput",
    "prefill",
    "run_workload",
]
