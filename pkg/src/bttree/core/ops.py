"""Jitted tree operations.

Every operation follows the same loop: preallocate nodes, enter the
critical section, descend to the leaf that may hold the key (splitting full
and merging two-child internal nodes on the way, restarting after each),
operate on the leaf, and if the leaf asks for a split or merge, rebalance
and go round again.

Read operations under an optimistic policy first descend without the lock
and validate the sequence counter; after ``retry_limit`` failed validations
they take the locked path.  Optimistic descents bounds-check every id and
size they read, because they may observe nodes mid-update.

Status codes returned to the Python layer: 1 present / found, 0 absent,
``STALE`` when the node arrays were replaced (re-fetch and retry) and
``NEED_GROW`` when the arena is exhausted.
"""

import numpy as np
from numba import njit

from .._atomics import atomic_load_acquire
from .._jit import kernel
from ..arena import ensure_capacity, reclaim, visit_check
from ..layout import HEIGHT_BITS, HEIGHT_MASK, M_CANARY, M_COUNT, M_IC, M_LC, M_MAXT, M_POLICY, M_PREALLOC, M_RETRY, M_ROOTH
from ..sync import (
    OK,
    STALE,
    ST_FALLBACKS,
    ST_LAST_ATTEMPTS,
    ST_LAST_LOCKED_AT,
    ST_OPT_ATTEMPTS,
    ST_RESTARTS,
    ST_VALIDATION_FAILS,
    announce,
    read_begin,
    read_validate,
    retract,
    stat_add,
    stat_set,
    use_lock_path,
    write_enter,
    write_publish,
    write_unlock,
)
from .balance import balance_internals, balance_leaves, route_child
from .leaf import MERGE, SPLIT, SUCCESS, leaf_insert, leaf_remove, leaf_search

INCONSISTENT = -3
MAX_HOPS = 64


@kernel
def writer_exit(st, sy, tid):
    write_publish(sy)
    reclaim(st, sy, tid)
    write_unlock(sy)


@kernel
def find_leaf(st, sy, tid, k):
    """Locked descent with proactive balancing.

    Returns ``(done, gp, pi, p, ci, c)``: leaf ``c`` is child ``ci`` of
    ``p``, and ``p`` sits in slot ``pi`` of ``gp`` (-1 for the root slot /
    no parent).  ``done`` is False when a node was rebalanced; the caller
    must leave the critical section and start over.
    """
    ic = st.meta[M_IC]
    rooth = st.meta[M_ROOTH]
    root = rooth >> HEIGHT_BITS
    h = rooth & HEIGHT_MASK
    if h == 0:
        return True, -1, -1, -1, -1, root
    row = st.inodes[root]
    size = np.int64(row[ic])
    if size == ic:
        balance_internals(st, sy, tid, -1, -1, -1, -1, root, False)
        return False, -1, -1, -1, -1, -1
    gp = -1
    pi = -1
    p = root
    ci = route_child(row, ic, size, k)
    c = np.int64(row[ci])
    h -= 1
    while h > 0:
        row = st.inodes[c]
        size = np.int64(row[ic])
        if size == 2:
            balance_internals(st, sy, tid, gp, pi, p, ci, c, True)
            return False, -1, -1, -1, -1, -1
        if size == ic:
            balance_internals(st, sy, tid, gp, pi, p, ci, c, False)
            return False, -1, -1, -1, -1, -1
        gp = p
        pi = ci
        p = c
        ci = route_child(row, ic, size, k)
        c = np.int64(row[ci])
        h -= 1
    return True, gp, pi, p, ci, c


@kernel
def optimistic_leaf(st, sy, k, canary):
    """Lock-free descent; the leaf id, or -1 if the snapshot looked torn."""
    ic = st.meta[M_IC]
    n_inodes = st.inodes.shape[0]
    rooth = atomic_load_acquire(st.meta, M_ROOTH)
    c = rooth >> HEIGHT_BITS
    h = rooth & HEIGHT_MASK
    while h > 0:
        if c < 0 or c >= n_inodes:
            return -1
        if canary:
            visit_check(st.istate, c, sy)
        row = st.inodes[c]
        size = np.int64(atomic_load_acquire(row, ic))
        if size < 2 or size > ic:
            return -1
        ci = route_child(row, ic, size, k)
        c = np.int64(atomic_load_acquire(row, ci))
        h -= 1
    if c < 0 or c >= st.leaves.shape[0]:
        return -1
    if canary:
        visit_check(st.lstate, c, sy)
    return c


@kernel
def bounded_leaf(st, sy, target, canary):
    """Descent that also records the key range of the leaf reached.

    Returns ``(leaf, has_lo, lo, has_hi, hi)``: every key under the leaf is
    ``>= lo`` and ``< hi``.  ``leaf`` is -1 on a torn snapshot.
    """
    ic = st.meta[M_IC]
    n_inodes = st.inodes.shape[0]
    rooth = atomic_load_acquire(st.meta, M_ROOTH)
    c = rooth >> HEIGHT_BITS
    h = rooth & HEIGHT_MASK
    zero = st.inodes.dtype.type(0)
    has_lo = False
    has_hi = False
    lo = zero
    hi = zero
    while h > 0:
        if c < 0 or c >= n_inodes:
            return -1, has_lo, lo, has_hi, hi
        if canary:
            visit_check(st.istate, c, sy)
        row = st.inodes[c]
        size = np.int64(atomic_load_acquire(row, ic))
        if size < 2 or size > ic:
            return -1, has_lo, lo, has_hi, hi
        ci = route_child(row, ic, size, target)
        if ci > 0:
            has_lo = True
            lo = row[ic + ci]
        if ci < size - 1:
            has_hi = True
            hi = row[ic + 1 + ci]
        c = np.int64(atomic_load_acquire(row, ci))
        h -= 1
    if c < 0 or c >= st.leaves.shape[0]:
        return -1, has_lo, lo, has_hi, hi
    if canary:
        visit_check(st.lstate, c, sy)
    return c, has_lo, lo, has_hi, hi


@kernel
def leaf_neighbor(row, lc, k, successor):
    """Closest key strictly above (or below) ``k`` in one leaf."""
    zero = row.dtype.type(0)
    found = False
    best = zero
    at = 0
    for i in range(lc):
        key = row[i]
        if key == zero:
            continue
        if successor:
            if key > k and (not found or key < best):
                found = True
                best = key
                at = i
        else:
            if key < k and (not found or key > best):
                found = True
                best = key
                at = i
    return found, best, row[lc + at]


@kernel
def adjacent_walk(st, sy, k, successor, canary, out):
    """Strict successor/predecessor of ``k`` without sibling links.

    If the leaf that may hold ``k`` has no candidate, the neighbour lives in
    the next subtree over, whose boundary is the tightest routing key seen
    on the way down; descend again towards that boundary.  Each hop moves
    the target strictly, so a consistent tree needs at most two.
    """
    lc = st.meta[M_LC]
    zero = st.leaves.dtype.type(0)
    target = np.uint64(k)
    for _ in range(MAX_HOPS):
        leaf, has_lo, lo, has_hi, hi = bounded_leaf(st, sy, target, canary)
        if leaf < 0:
            return INCONSISTENT
        found, key, val = leaf_neighbor(st.leaves[leaf], lc, k, successor)
        if found:
            out[0] = key
            out[1] = val
            return 1
        if successor:
            if not has_hi:
                return 0
            if np.uint64(hi) <= target:
                return INCONSISTENT
            target = np.uint64(hi)
        else:
            if not has_lo:
                return 0
            if lo == zero or np.uint64(lo) > target:
                return INCONSISTENT
            target = np.uint64(lo) - np.uint64(1)
    return INCONSISTENT


@kernel
def _read_prologue(st, sy, gen, tid, k, kind, successor, out):
    """Optimistic attempts for a read.  Returns (status, failures).

    ``status`` is 0/1 for a validated answer, STALE, or INCONSISTENT when
    the caller must take the locked path.
    """
    policy = st.meta[M_POLICY]
    retry = st.meta[M_RETRY]
    maxt = st.meta[M_MAXT]
    canary = st.meta[M_CANARY] != 0
    failures = 0
    if policy == 0:
        return INCONSISTENT, failures
    announce(sy, tid)
    while not use_lock_path(policy, 0, failures, retry):
        seq = read_begin(sy, gen)
        if seq < 0:
            retract(sy, tid)
            return STALE, failures
        stat_add(sy, maxt, tid, ST_OPT_ATTEMPTS, 1)
        if kind == 0:
            leaf = optimistic_leaf(st, sy, k, canary)
            res = INCONSISTENT
            val = st.leaves.dtype.type(0)
            if leaf >= 0:
                code, val = leaf_search(st.leaves[leaf], st.meta[M_LC], k)
                res = 1 if code == SUCCESS else 0
            if read_validate(sy, seq) and res != INCONSISTENT:
                if res == 1:
                    out[0] = val
                retract(sy, tid)
                return res, failures
        else:
            res = adjacent_walk(st, sy, k, successor, canary, out)
            if read_validate(sy, seq) and res != INCONSISTENT:
                retract(sy, tid)
                return res, failures
        failures += 1
        stat_add(sy, maxt, tid, ST_VALIDATION_FAILS, 1)
    retract(sy, tid)
    stat_add(sy, maxt, tid, ST_FALLBACKS, 1)
    return INCONSISTENT, failures


@kernel
def _record_attempts(st, sy, tid, attempts, locked_at):
    maxt = st.meta[M_MAXT]
    stat_set(sy, maxt, tid, ST_LAST_ATTEMPTS, attempts)
    stat_set(sy, maxt, tid, ST_LAST_LOCKED_AT, locked_at)


@kernel
def tree_search(st, sy, gen, tid, k, out):
    res, failures = _read_prologue(st, sy, gen, tid, k, 0, True, out)
    if res != INCONSISTENT:
        if res != STALE:
            _record_attempts(st, sy, tid, failures + 1, 0)
        return res
    _record_attempts(st, sy, tid, failures + 1, failures + 1)
    lc = st.meta[M_LC]
    prealloc = st.meta[M_PREALLOC]
    while True:
        status = ensure_capacity(st, sy, gen, tid, prealloc)
        if status != OK:
            return status
        if not write_enter(sy, gen):
            return STALE
        done, gp, pi, p, ci, c = find_leaf(st, sy, tid, k)
        if not done:
            writer_exit(st, sy, tid)
            stat_add(sy, st.meta[M_MAXT], tid, ST_RESTARTS, 1)
            continue
        code, val = leaf_search(st.leaves[c], lc, k)
        writer_exit(st, sy, tid)
        if code == SUCCESS:
            out[0] = val
            return 1
        return 0


@kernel
def tree_insert(st, sy, gen, tid, k, v, out):
    lc = st.meta[M_LC]
    prealloc = st.meta[M_PREALLOC]
    while True:
        status = ensure_capacity(st, sy, gen, tid, prealloc)
        if status != OK:
            return status
        if not write_enter(sy, gen):
            return STALE
        done, gp, pi, p, ci, c = find_leaf(st, sy, tid, k)
        if not done:
            writer_exit(st, sy, tid)
            stat_add(sy, st.meta[M_MAXT], tid, ST_RESTARTS, 1)
            continue
        code, had, old = leaf_insert(st.leaves[c], lc, k, v)
        if code == SPLIT:
            balance_leaves(st, sy, tid, gp, pi, p, ci, c, False)
            writer_exit(st, sy, tid)
            stat_add(sy, st.meta[M_MAXT], tid, ST_RESTARTS, 1)
            continue
        if had:
            out[0] = old
        else:
            st.meta[M_COUNT] += 1
        writer_exit(st, sy, tid)
        return 1 if had else 0


@kernel
def tree_remove(st, sy, gen, tid, k, out):
    lc = st.meta[M_LC]
    prealloc = st.meta[M_PREALLOC]
    while True:
        status = ensure_capacity(st, sy, gen, tid, prealloc)
        if status != OK:
            return status
        if not write_enter(sy, gen):
            return STALE
        done, gp, pi, p, ci, c = find_leaf(st, sy, tid, k)
        if not done:
            writer_exit(st, sy, tid)
            stat_add(sy, st.meta[M_MAXT], tid, ST_RESTARTS, 1)
            continue
        code, val = leaf_remove(st.leaves[c], lc, k, p < 0)
        if code == MERGE:
            balance_leaves(st, sy, tid, gp, pi, p, ci, c, True)
            writer_exit(st, sy, tid)
            stat_add(sy, st.meta[M_MAXT], tid, ST_RESTARTS, 1)
            continue
        if code == SUCCESS:
            out[0] = val
            st.meta[M_COUNT] -= 1
        writer_exit(st, sy, tid)
        return 1 if code == SUCCESS else 0


@kernel
def tree_adjacent(st, sy, gen, tid, k, successor, out):
    """Strict successor (or predecessor) of ``k``; key in out[0], value in out[1]."""
    res, failures = _read_prologue(st, sy, gen, tid, k, 1, successor, out)
    if res != INCONSISTENT:
        if res != STALE:
            _record_attempts(st, sy, tid, failures + 1, 0)
        return res
    _record_attempts(st, sy, tid, failures + 1, failures + 1)
    if not write_enter(sy, gen):
        return STALE
    res = adjacent_walk(st, sy, k, successor, False, out)
    writer_exit(st, sy, tid)
    if res == INCONSISTENT:
        raise AssertionError("adjacent walk failed on a locked tree")
    return res


@njit(nogil=True, cache=True)
def collect_items(st, keys, vals):
    """Write every (key, value) into ``keys``/``vals`` in key order; returns the count.

    Caller guarantees quiescence.  Leaves are visited left to right; each
    leaf's entries are sorted locally.
    """
    lc = st.meta[M_LC]
    ic = st.meta[M_IC]
    rooth = st.meta[M_ROOTH]
    root = rooth >> HEIGHT_BITS
    height = rooth & HEIGHT_MASK
    n = 0
    # explicit DFS stack of (node, depth)
    stack = np.empty((height + 1) * ic + 1, dtype=np.int64)
    depth = np.empty((height + 1) * ic + 1, dtype=np.int64)
    top = 0
    stack[0] = root
    depth[0] = 0
    top = 1
    zero = st.leaves.dtype.type(0)
    while top > 0:
        top -= 1
        node = stack[top]
        d = depth[top]
        if d == height:
            row = st.leaves[node]
            start = n
            for i in range(lc):
                if row[i] != zero:
                    keys[n] = row[i]
                    vals[n] = row[lc + i]
                    n += 1
            order = np.argsort(keys[start:n])
            ks = keys[start:n][order]
            vs = vals[start:n][order]
            keys[start:n] = ks
            vals[start:n] = vs
        else:
            row = st.inodes[node]
            size = np.int64(row[ic])
            for j in range(size - 1, -1, -1):
                stack[top] = np.int64(row[j])
                depth[top] = d + 1
                top += 1
    return n
