"""Single-threaded differential testing against the oracle."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..core.tree import BTTree, Config
from .check import Violation, check_tree, corrupt_leaf_key
from .driver import drive, new_results
from .oracle import OP_CORRUPT, OP_NAMES, OP_PREDECESSOR, OP_SUCCESSOR, DenseOracle
from .trace import OpTrace, config_dict, shrink

# search, insert, remove, successor, predecessor
DEFAULT_MIX = (0.25, 0.35, 0.25, 0.075, 0.075)
CHECK_EVERY = 1000


@dataclass
class Verdict:
    passed: bool
    ops_run: int
    checkpoints: int
    elapsed_s: float
    mismatch_at: Optional[int] = None
    violations: list[Violation] = field(default_factory=list)
    trace_path: Optional[Path] = None
    message: str = ""

    def __bool__(self):
        return self.passed


def make_ops(
    seed: int,
    op_count: int,
    key_range: int,
    mix: Sequence[float] = DEFAULT_MIX,
    value_bits: int = 32,
    corrupt_at: Optional[int] = None,
) -> np.ndarray:
    """Random op array (code, key, value), keys uniform in [1, key_range].

    Successor/predecessor probes also use 0 and ``key_range + 1`` so the
    edges of the key space are exercised.
    """
    rng = np.random.default_rng(seed)
    ops = np.empty((op_count, 3), dtype=np.uint64)
    ops[:, 0] = rng.choice(5, size=op_count, p=np.asarray(mix) / np.sum(mix))
    keys = rng.integers(1, key_range, size=op_count, endpoint=True, dtype=np.uint64)
    probes = (ops[:, 0] == OP_SUCCESSOR) | (ops[:, 0] == OP_PREDECESSOR)
    keys[probes] = rng.integers(0, key_range + 1, size=int(probes.sum()), endpoint=True, dtype=np.uint64)
    ops[:, 1] = keys
    ops[:, 2] = rng.integers(0, 1 << value_bits, size=op_count, dtype=np.uint64)
    if corrupt_at is not None and 0 <= corrupt_at < op_count:
        ops[corrupt_at] = (OP_CORRUPT, 0, 0)
    return ops


def _first_bad(expected: np.ndarray, actual: np.ndarray) -> Optional[int]:
    bad = np.flatnonzero((expected != actual).any(axis=1))
    return int(bad[0]) if len(bad) else None


def differential_run(
    seed: int,
    op_count: int,
    key_range: int,
    config: Optional[Config] = None,
    *,
    check_every: int = CHECK_EVERY,
    corrupt_at: Optional[int] = None,
    trace_dir: Optional[Path | str] = ".",
    shrink_budget_s: float = 10.0,
) -> Verdict:
    """Apply one random op sequence to a tree and to the oracle in lockstep.

    Every result must match, and ``check_tree`` runs every ``check_every``
    ops.  On failure the sequence up to the fault is shrunk and written to
    ``trace_dir`` (skipped when ``trace_dir`` is None).
    """
    config = config or Config()
    t0 = time.perf_counter()
    value_bits = min(32, config.key_bits)
    ops = make_ops(seed, op_count, key_range, value_bits=value_bits, corrupt_at=corrupt_at)
    tree = BTTree(config)
    oracle = DenseOracle(key_range + 1)
    actual = new_results(op_count)
    expected = new_results(op_count)

    def corrupt(i):
        corrupt_leaf_key(tree, int(ops[i, 1]))

    checkpoints = 0
    mismatch = None
    violations: list[Violation] = []
    done = 0
    while done < op_count:
        stop = min(done + check_every, op_count)
        drive(tree, ops, actual, done, stop, on_corrupt=corrupt)
        oracle.run(ops, expected, done, stop)
        bad = _first_bad(expected[done:stop], actual[done:stop])
        checkpoints += 1
        violations = check_tree(tree)
        if bad is not None:
            mismatch = done + bad
            done = stop
            break
        done = stop
        if violations:
            break
    if mismatch is None and not violations and tree.items() != oracle.items():
        mismatch = op_count
    passed = mismatch is None and not violations
    verdict = Verdict(passed, done, checkpoints, time.perf_counter() - t0, mismatch, violations)
    if passed:
        return verdict

    parts = []
    if mismatch is not None and mismatch < op_count:
        code, k, v = ops[mismatch].tolist()
        parts.append(
            f"op {mismatch} {OP_NAMES[code]}({k}, {v}): tree {actual[mismatch].tolist()} "
            f"oracle {expected[mismatch].tolist()}"
        )
    elif mismatch is not None:
        parts.append("final contents differ from the oracle")
    parts += [str(v) for v in violations[:5]]
    verdict.message = "; ".join(parts)
    if trace_dir is not None:
        note = f"seed={seed} range={key_range} failed after {done} ops\n{verdict.message}"
        trace = OpTrace(ops[:done].copy(), None, config_dict(config), note)
        trace = shrink(trace, shrink_budget_s)
        path = Path(trace_dir) / f"conform-failure-seed{seed}.trace"
        verdict.trace_path = trace.save(path)
    verdict.elapsed_s = time.perf_counter() - t0
    return verdict

