"""Batch op driver: runs an op array against a tree inside one compiled loop."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from numba import njit

from ..core.ops import tree_adjacent, tree_insert, tree_remove, tree_search
from ..sync import NEED_GROW, STALE
from .oracle import OP_CORRUPT, OP_INSERT, OP_PREDECESSOR, OP_REMOVE, OP_SEARCH, OP_SUCCESSOR


@njit(nogil=True, cache=True)
def apply_ops(st, sy, gen, tid, ops, results, start, stop):
    """Apply ``ops[start:stop]``; returns (next index, status).

    Stops early on STALE / NEED_GROW (status < 0) or on a corrupt op
    (status OP_CORRUPT), leaving that op unapplied.
    """
    kt = st.leaves.dtype.type
    out = np.zeros(2, dtype=st.leaves.dtype)
    for i in range(start, stop):
        code = ops[i, 0]
        k = kt(ops[i, 1])
        s = 0
        if code == OP_SEARCH:
            s = tree_search(st, sy, gen, tid, k, out)
        elif code == OP_INSERT:
            s = tree_insert(st, sy, gen, tid, k, kt(ops[i, 2]), out)
        elif code == OP_REMOVE:
            s = tree_remove(st, sy, gen, tid, k, out)
        elif code == OP_SUCCESSOR:
            s = tree_adjacent(st, sy, gen, tid, k, True, out)
        elif code == OP_PREDECESSOR:
            s = tree_adjacent(st, sy, gen, tid, k, False, out)
        else:
            return i, OP_CORRUPT
        if s < 0:
            return i, s
        results[i, 0] = s
        if s == 1:
            results[i, 1] = out[0]
            results[i, 2] = 0
            if code >= OP_SUCCESSOR:
                results[i, 2] = out[1]
        else:
            results[i, 1] = 0
            results[i, 2] = 0
    return stop, 0


def drive(
    tree,
    ops: np.ndarray,
    results: np.ndarray,
    start: int = 0,
    stop: Optional[int] = None,
    on_corrupt: Optional[Callable[[int], None]] = None,
) -> None:
    """Run ``ops[start:stop]`` on ``tree``, growing the arena as needed.

    ``on_corrupt(i)`` handles corrupt ops; without it they are skipped.
    """
    stop = len(ops) if stop is None else stop
    tid = tree.thread_id()
    sy = tree.sync_array
    i = start
    while i < stop:
        gen, st = tree.snapshot()
        i, status = apply_ops(st, sy, gen, tid, ops, results, i, stop)
        if status == NEED_GROW:
            tree.grow(gen)
        elif status == OP_CORRUPT:
            if on_corrupt is not None:
                on_corrupt(i)
            results[i] = 0
            i += 1
        elif status == STALE:
            continue


def new_results(n: int) -> np.ndarray:
    return np.zeros((n, 3), dtype=np.uint64)

