"""Multithreaded stress with exact per-thread oracles.

Phase 1 gives every thread its own slice of the key range, so each thread's
results must match an oracle that replays only its ops.  Phase 2 lets all
threads read every key while each mutates only the keys it owns
(``key % threads == tid``); owned-key results are checked exactly, reads of
foreign keys only for plausibility, using values that encode their key.
Afterwards the tree must hold exactly the union of the owners' oracles and
pass the structural and arena checks, with no canary detections.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core.tree import BTTree, Config
from ..sync import S_DETECT, ST_FALLBACKS, ST_VALIDATION_FAILS, SyncPolicy
from .check import Violation, check_arena, check_tree
from .driver import drive, new_results
from .oracle import OP_INSERT, OP_PREDECESSOR, OP_REMOVE, OP_SEARCH, OP_SUCCESSOR, DenseOracle

VALUE_SHIFT = 24


@dataclass
class StressVerdict:
    passed: bool
    threads: int
    ops: int
    lost_updates: int = 0
    implausible_reads: int = 0
    canary_detections: int = 0
    validation_failures: int = 0
    lock_fallbacks: int = 0
    violations: list[Violation] = field(default_factory=list)
    elapsed_s: float = 0.0
    message: str = ""

    def __bool__(self):
        return self.passed


def _encode(keys: np.ndarray, serial: np.ndarray) -> np.ndarray:
    return (keys << np.uint64(VALUE_SHIFT)) | (serial & np.uint64((1 << VALUE_SHIFT) - 1))


def _run_threads(tree: BTTree, per_thread_ops, results) -> None:
    errors = []
    barrier = threading.Barrier(len(per_thread_ops))

    def work(i):
        try:
            barrier.wait()
            drive(tree, per_thread_ops[i], results[i])
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    workers = [threading.Thread(target=work, args=(i,), name=f"stress-{i}") for i in range(len(per_thread_ops))]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    if errors:
        raise errors[0]


def _phase1_ops(rng, n, lo, hi):
    ops = np.empty((n, 3), dtype=np.uint64)
    ops[:, 0] = rng.choice([OP_SEARCH, OP_INSERT, OP_REMOVE], size=n, p=[0.3, 0.4, 0.3])
    ops[:, 1] = rng.integers(lo, hi, size=n, endpoint=True, dtype=np.uint64)
    ops[:, 2] = _encode(ops[:, 1], np.arange(n, dtype=np.uint64))
    return ops


def _phase2_ops(rng, n, key_range, tid, threads):
    ops = np.empty((n, 3), dtype=np.uint64)
    ops[:, 0] = rng.choice(
        [OP_SEARCH, OP_INSERT, OP_REMOVE, OP_SUCCESSOR, OP_PREDECESSOR],
        size=n,
        p=[0.4, 0.25, 0.2, 0.075, 0.075],
    )
    keys = rng.integers(1, key_range, size=n, endpoint=True, dtype=np.int64)
    mutating = (ops[:, 0] == OP_INSERT) | (ops[:, 0] == OP_REMOVE)
    owned = keys - (keys % threads) + tid
    owned[owned > key_range] -= threads
    owned[owned < 1] += threads
    keys[mutating] = owned[mutating]
    ops[:, 1] = keys.astype(np.uint64)
    ops[:, 2] = _encode(ops[:, 1], np.arange(n, dtype=np.uint64))
    return ops


def _implausible(ops: np.ndarray, res: np.ndarray, key_range: int) -> int:
    """Reads whose answer could not have come from any state of the map."""
    hit = res[:, 0] == 1
    code = ops[:, 0]
    bad = 0
    s = hit & (code == OP_SEARCH)
    bad += int(((res[s, 1] >> np.uint64(VALUE_SHIFT)) != ops[s, 1]).sum())
    for c, cmp in ((OP_SUCCESSOR, np.greater), (OP_PREDECESSOR, np.less)):
        a = hit & (code == c)
        keys = res[a, 1]
        ok = cmp(keys, ops[a, 1]) & (keys >= 1) & (keys <= key_range)
        ok &= (res[a, 2] >> np.uint64(VALUE_SHIFT)) == keys
        bad += int((~ok).sum())
    return bad


def concurrent_stress(
    threads: int,
    op_count: int,
    key_range: int = 4096,
    policy: SyncPolicy | str = SyncPolicy.SEQLOCK,
    *,
    seed: int = 0,
    config: Optional[Config] = None,
    canary: Optional[bool] = True,
) -> StressVerdict:
    """Run both phases with ``op_count`` ops in total (half per phase)."""
    if threads < 1:
        raise ValueError("threads must be positive")
    if key_range < 2 * threads:
        raise ValueError("key_range must allow at least two keys per thread")
    t0 = time.perf_counter()
    policy = SyncPolicy.parse(policy)
    if config is None:
        config = Config(sync=policy, canary=canary, max_threads=max(threads, 8))
    tree = BTTree(config)
    tree.reserve(key_range)
    streams = np.random.SeedSequence(seed).spawn(2 * threads)
    per_phase = op_count // 2
    per_thread = [per_phase // threads + (1 if t < per_phase % threads else 0) for t in range(threads)]
    verdict = StressVerdict(False, threads, sum(per_thread) * 2)
    notes = []

    # phase 1: disjoint slices
    width = key_range // threads
    bounds = [(t * width + 1, (t + 1) * width) for t in range(threads)]
    ops1 = [_phase1_ops(np.random.default_rng(streams[t]), per_thread[t], *bounds[t]) for t in range(threads)]
    res1 = [new_results(len(o)) for o in ops1]
    _run_threads(tree, ops1, res1)
    oracle = DenseOracle(key_range)
    for t in range(threads):
        exp = new_results(len(ops1[t]))
        oracle.run(ops1[t], exp)
        wrong = int((exp != res1[t]).any(axis=1).sum())
        if wrong:
            notes.append(f"phase 1 thread {t}: {wrong} results differ from its oracle")
        verdict.lost_updates += wrong
    if tree.items() != oracle.items():
        verdict.lost_updates += 1
        notes.append("phase 1: final contents differ from the union of per-thread oracles")
    verdict.violations += check_tree(tree)

    # phase 2: shared reads, owned writes
    ops2 = [
        _phase2_ops(np.random.default_rng(streams[threads + t]), per_thread[t], key_range, t, threads)
        for t in range(threads)
    ]
    res2 = [new_results(len(o)) for o in ops2]
    start_present = oracle.present.copy()
    start_vals = oracle.vals.copy()
    _run_threads(tree, ops2, res2)
    final = DenseOracle(key_range)
    all_keys = np.arange(final.present.shape[0])
    for t in range(threads):
        mine = DenseOracle(key_range)
        mine.present[:] = start_present
        mine.vals[:] = start_vals
        exp = new_results(len(ops2[t]))
        mine.run(ops2[t], exp)
        keys = ops2[t][:, 1].astype(np.int64)
        code = ops2[t][:, 0]
        exact = (code != OP_SUCCESSOR) & (code != OP_PREDECESSOR) & (keys % threads == t)
        wrong = int((exp[exact] != res2[t][exact]).any(axis=1).sum())
        if wrong:
            notes.append(f"phase 2 thread {t}: {wrong} owned-key results differ from its oracle")
        verdict.lost_updates += wrong
        bad = _implausible(ops2[t], res2[t], key_range)
        if bad:
            notes.append(f"phase 2 thread {t}: {bad} implausible reads")
        verdict.implausible_reads += bad
        owned = (all_keys % threads == t) & (all_keys >= 1)
        final.present[owned] = mine.present[owned]
        final.vals[owned] = mine.vals[owned]
    if tree.items() != final.items():
        verdict.lost_updates += 1
        notes.append("phase 2: final contents differ from the union of per-thread oracles")
    verdict.violations += check_tree(tree)
    verdict.violations += check_arena(tree)
    verdict.canary_detections = int(tree.sync_array[S_DETECT])
    stats = tree.thread_stats()
    verdict.validation_failures = int(stats[:, ST_VALIDATION_FAILS].sum())
    verdict.lock_fallbacks = int(stats[:, ST_FALLBACKS].sum())
    if verdict.canary_detections:
        notes.append(f"{verdict.canary_detections} reads landed on reclaimed nodes")
    notes += [str(v) for v in verdict.violations[:5]]
    verdict.passed = not (
        verdict.lost_updates or verdict.implausible_reads or verdict.violations or verdict.canary_detections
    )
    verdict.message = "; ".join(notes)
    verdict.elapsed_s = time.perf_counter() - t0
    return verdict
