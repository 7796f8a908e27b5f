"""Op traces: text serialisation, replay against a fresh tree, and shrinking."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..core.tree import BTTree, Config
from .check import check_tree, corrupt_leaf_key
from .driver import drive, new_results
from .oracle import OP_CODES, OP_NAMES, OracleMap

HEADER = "# bttree op trace v1"
CONFIG_FIELDS = ("leaf_capacity", "internal_capacity", "sync", "key_bits", "retry_limit")


@dataclass
class OpTrace:
    ops: np.ndarray  # uint64 [n, 3]: code, key, value
    expected: Optional[np.ndarray] = None  # uint64 [n, 3] oracle results
    config: dict = field(default_factory=dict)
    note: str = ""

    def __len__(self) -> int:
        return len(self.ops)

    def subset(self, keep: np.ndarray) -> "OpTrace":
        exp = None if self.expected is None else self.expected[keep]
        return OpTrace(self.ops[keep].copy(), exp, dict(self.config), self.note)

    def to_text(self) -> str:
        lines = [HEADER]
        if self.note:
            lines += [f"# {line}" for line in self.note.splitlines()]
        lines.append("# config " + " ".join(f"{k}={v}" for k, v in self.config.items()))
        for i, (code, k, v) in enumerate(self.ops.tolist()):
            line = f"{OP_NAMES[code]} {k} {v}"
            if self.expected is not None:
                s, a, b = self.expected[i].tolist()
                line += f" => {s} {a} {b}"
            lines.append(line)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "OpTrace":
        ops, exp, config, notes = [], [], {}, []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line == HEADER:
                continue
            if line.startswith("# config"):
                for item in line[len("# config") :].split():
                    key, _, val = item.partition("=")
                    config[key] = val if key == "sync" else int(val)
                continue
            if line.startswith("#"):
                notes.append(line[1:].strip())
                continue
            body, _, res = line.partition("=>")
            name, k, v = body.split()
            ops.append((OP_CODES[name], int(k), int(v)))
            if res:
                exp.append(tuple(int(x) for x in res.split()))
        arr = np.array(ops, dtype=np.uint64).reshape(-1, 3)
        expected = np.array(exp, dtype=np.uint64).reshape(-1, 3) if exp else None
        return cls(arr, expected, config, "\n".join(notes))

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_text())
        return path

    @classmethod
    def load(cls, path) -> "OpTrace":
        return cls.from_text(Path(path).read_text())


def config_dict(config: Config) -> dict:
    return {
        "leaf_capacity": config.leaf_capacity,
        "internal_capacity": config.internal_capacity,
        "sync": config.sync.name.lower(),
        "key_bits": config.key_bits,
        "retry_limit": config.retry_limit,
    }


def tree_for(trace: OpTrace) -> BTTree:
    cfg = {k: v for k, v in trace.config.items() if k in CONFIG_FIELDS}
    return BTTree(Config(**cfg))


@dataclass
class ReplayOutcome:
    failed: bool
    first_mismatch: Optional[int]
    violations: list
    expected: np.ndarray
    actual: np.ndarray


def replay(trace: OpTrace) -> ReplayOutcome:
    """Run the trace on a fresh tree and an :class:`OracleMap`; compare every result."""
    tree = tree_for(trace)
    actual = new_results(len(trace))
    drive(tree, trace.ops, actual, on_corrupt=lambda i: corrupt_leaf_key(tree, int(trace.ops[i, 1])))
    oracle = OracleMap()
    expected = np.array([oracle.apply(*row) for row in trace.ops.tolist()], dtype=np.uint64).reshape(-1, 3)
    bad = np.flatnonzero((expected != actual).any(axis=1))
    first = int(bad[0]) if len(bad) else None
    violations = check_tree(tree)
    if not violations and tree.items() != oracle.items():
        first = len(trace) if first is None else first
    failed = first is not None or bool(violations)
    return ReplayOutcome(failed, first, violations, expected, actual)


def shrink(trace: OpTrace, budget_s: float = 10.0) -> OpTrace:
    """Greedily drop ops while the replay still fails.

    Starts by cutting everything after the first mismatch, then removes
    chunks of halving size until single ops, or until the time budget runs out.
    """
    deadline = time.monotonic() + budget_s
    out = replay(trace)
    if not out.failed:
        return trace
    if out.first_mismatch is not None and out.first_mismatch < len(trace):
        cut = trace.subset(np.arange(out.first_mismatch + 1))
        if replay(cut).failed:
            trace = cut
    chunk = max(1, len(trace) // 2)
    while chunk >= 1 and time.monotonic() < deadline:
        i = 0
        while i < len(trace) and time.monotonic() < deadline:
            keep = np.ones(len(trace), dtype=bool)
            keep[i : i + chunk] = False
            if keep.any():
                cand = trace.subset(np.flatnonzero(keep))
                if replay(cand).failed:
                    trace = cand
                    continue
            i += chunk
        if chunk == 1:
            break
        chunk //= 2
    final = replay(trace)
    trace.expected = final.expected
    return trace
