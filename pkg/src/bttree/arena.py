"""Node arena: preallocation outside critical sections, deferred reclamation.

Nodes are rows of preallocated arrays (see :mod:`bttree.layout`).  Each
thread keeps a small free list per node kind; ``ensure_capacity`` tops it up
from a shared overflow stack or from never-used rows before a critical
section starts, so ``take_*`` inside the section never allocates.

Retired nodes wait in a list tagged with the epoch at retirement.  They are
freed once every announced optimistic reader started in a later epoch.  With
no optimistic readers (mutex policy) that is the next writer exit.

When the never-used rows run out, ``ensure_capacity`` reports ``NEED_GROW``;
the owner then swaps in larger arrays via :func:`grow_state`.
"""

from __future__ import annotations

import os

import numpy as np

from .layout import (
    KIND_INTERNAL,
    KIND_LEAF,
    M_CANARY,
    M_IC,
    M_INODE_NEXT,
    M_ISHARED_N,
    M_LC,
    M_LEAF_NEXT,
    M_LOCAL_CAP,
    M_LSHARED_N,
    M_MAXT,
    M_POLICY,
    M_PREALLOC,
    M_RETIRED_N,
    M_RETRY,
    META_LEN,
    NODE_FREE,
    NODE_LIVE,
    NODE_RETIRED,
    TreeState,
    aligned_zeros,
    row_width,
)
from .sync import (
    NEED_GROW,
    OK,
    S_DETECT,
    S_EPOCH,
    S_GEN,
    S_POOL,
    STALE,
    min_announced,
    spin_lock,
    spin_unlock,
)
from ._atomics import atomic_add, atomic_load
from ._jit import kernel

CANARY_ENV = "BTTREE_CANARY"
# fits a 32-bit key word; as a child id or size it is out of range
CANARY = 0xDEADBEEF


def canary_default() -> bool:
    return os.environ.get(CANARY_ENV, "") not in ("", "0", "false", "no")


def new_state(
    *,
    leaf_capacity: int,
    internal_capacity: int,
    key_dtype,
    n_leaves: int,
    n_inodes: int,
    max_threads: int,
    retry_limit: int,
    prealloc: int,
    policy: int,
    canary: bool,
) -> TreeState:
    dtype = np.dtype(key_dtype)
    local_cap = max(4 * prealloc, 32)
    meta = np.zeros(META_LEN, dtype=np.int64)
    meta[M_LC] = leaf_capacity
    meta[M_IC] = internal_capacity
    meta[M_RETRY] = retry_limit
    meta[M_PREALLOC] = prealloc
    meta[M_POLICY] = policy
    meta[M_CANARY] = int(canary)
    meta[M_MAXT] = max_threads
    meta[M_LOCAL_CAP] = local_cap
    free_w = -(-(local_cap + 1) // 8) * 8
    return TreeState(
        meta=meta,
        leaves=aligned_zeros((n_leaves, row_width(leaf_capacity, dtype.itemsize)), dtype),
        inodes=aligned_zeros((n_inodes, row_width(internal_capacity, dtype.itemsize)), dtype),
        lstate=np.zeros(n_leaves, dtype=np.int8),
        istate=np.zeros(n_inodes, dtype=np.int8),
        lfree=aligned_zeros((max_threads, free_w), np.int64),
        ifree=aligned_zeros((max_threads, free_w), np.int64),
        lshared=np.zeros(n_leaves, dtype=np.int64),
        ishared=np.zeros(n_inodes, dtype=np.int64),
        retired=np.zeros((n_leaves + n_inodes, 2), dtype=np.int64),
        scratch=np.zeros((2, 2 * max(leaf_capacity, internal_capacity)), dtype=dtype),
        scratch_ids=np.zeros(2 * internal_capacity, dtype=np.int64),
    )


def grow_state(st: TreeState, n_leaves: int, n_inodes: int) -> TreeState:
    """Copy ``st`` into arrays with room for at least the given node counts.

    The caller holds the tree lock and the pool lock, so nothing mutates ``st``
    while it is copied.
    """
    n_leaves = max(n_leaves, st.leaves.shape[0])
    n_inodes = max(n_inodes, st.inodes.shape[0])
    leaves = aligned_zeros((n_leaves, st.leaves.shape[1]), st.leaves.dtype)
    leaves[: st.leaves.shape[0]] = st.leaves
    inodes = aligned_zeros((n_inodes, st.inodes.shape[1]), st.inodes.dtype)
    inodes[: st.inodes.shape[0]] = st.inodes
    lstate = np.zeros(n_leaves, dtype=np.int8)
    lstate[: st.lstate.shape[0]] = st.lstate
    istate = np.zeros(n_inodes, dtype=np.int8)
    istate[: st.istate.shape[0]] = st.istate
    lshared = np.zeros(n_leaves, dtype=np.int64)
    lshared[: st.lshared.shape[0]] = st.lshared
    ishared = np.zeros(n_inodes, dtype=np.int64)
    ishared[: st.ishared.shape[0]] = st.ishared
    retired = np.zeros((n_leaves + n_inodes, 2), dtype=np.int64)
    retired[: st.retired.shape[0]] = st.retired
    return TreeState(
        meta=st.meta.copy(),
        leaves=leaves,
        inodes=inodes,
        lstate=lstate,
        istate=istate,
        lfree=st.lfree.copy(),
        ifree=st.ifree.copy(),
        lshared=lshared,
        ishared=ishared,
        retired=retired,
        scratch=st.scratch.copy(),
        scratch_ids=st.scratch_ids.copy(),
    )


@kernel
def _top_up(row, shared, meta, shared_idx, next_idx, cap, state, n):
    while row[0] < n:
        m = meta[shared_idx]
        if m > 0:
            node = shared[m - 1]
            meta[shared_idx] = m - 1
        else:
            nxt = meta[next_idx]
            if nxt >= cap:
                return False
            node = nxt
            meta[next_idx] = nxt + 1
        cnt = row[0] + 1
        row[cnt] = node
        row[0] = cnt
        state[node] = NODE_FREE
    return True


@kernel
def ensure_capacity(st, sy, gen, tid, n):
    """Make sure thread ``tid`` holds at least ``n`` free nodes of each kind.

    Called outside critical sections.  Returns OK, STALE (arrays were
    replaced) or NEED_GROW (arrays exhausted).
    """
    if st.lfree[tid, 0] >= n and st.ifree[tid, 0] >= n:
        return OK
    spin_lock(sy, S_POOL)
    if atomic_load(sy, S_GEN) != gen:
        spin_unlock(sy, S_POOL)
        return STALE
    ok = _top_up(st.lfree[tid], st.lshared, st.meta, M_LSHARED_N, M_LEAF_NEXT, st.leaves.shape[0], st.lstate, n)
    if ok:
        ok = _top_up(
            st.ifree[tid], st.ishared, st.meta, M_ISHARED_N, M_INODE_NEXT, st.inodes.shape[0], st.istate, n
        )
    spin_unlock(sy, S_POOL)
    if ok:
        return OK
    return NEED_GROW


@kernel
def take_leaf(st, tid):
    row = st.lfree[tid]
    n = row[0]
    if n <= 0:
        raise AssertionError("leaf free list empty inside a critical section")
    node = row[n]
    row[0] = n - 1
    st.leaves[node, :] = 0
    st.lstate[node] = NODE_LIVE
    return node


@kernel
def take_inode(st, tid):
    row = st.ifree[tid]
    n = row[0]
    if n <= 0:
        raise AssertionError("internal free list empty inside a critical section")
    node = row[n]
    row[0] = n - 1
    st.inodes[node, :] = 0
    st.istate[node] = NODE_LIVE
    return node


@kernel
def retire(st, sy, kind, node):
    """Queue an unlinked node for reclamation.  Caller holds the tree lock."""
    if kind == KIND_LEAF:
        state = st.lstate
    else:
        state = st.istate
    if state[node] != NODE_LIVE:
        raise AssertionError("retiring a node that is not live")
    state[node] = NODE_RETIRED
    r = st.meta[M_RETIRED_N]
    st.retired[r, 0] = node * 2 + kind
    st.retired[r, 1] = atomic_load(sy, S_EPOCH)
    st.meta[M_RETIRED_N] = r + 1


@kernel
def _poison(st, kind, node):
    if kind == KIND_LEAF:
        st.leaves[node, :] = CANARY
    else:
        st.inodes[node, :] = CANARY


@kernel
def _free(st, sy, tid, kind, node):
    if st.meta[M_CANARY] != 0:
        _poison(st, kind, node)
    if kind == KIND_LEAF:
        st.lstate[node] = NODE_FREE
        row = st.lfree[tid]
        shared = st.lshared
        shared_idx = M_LSHARED_N
    else:
        st.istate[node] = NODE_FREE
        row = st.ifree[tid]
        shared = st.ishared
        shared_idx = M_ISHARED_N
    cnt = row[0]
    if cnt < st.meta[M_LOCAL_CAP]:
        row[cnt + 1] = node
        row[0] = cnt + 1
    else:
        spin_lock(sy, S_POOL)
        m = st.meta[shared_idx]
        shared[m] = node
        st.meta[shared_idx] = m + 1
        spin_unlock(sy, S_POOL)


@kernel
def reclaim(st, sy, tid):
    """Free retired nodes no announced reader can still reach.

    Caller holds the tree lock, after the epoch advanced.  Returns the number
    of nodes freed.
    """
    r = st.meta[M_RETIRED_N]
    if r == 0:
        return 0
    lo = min_announced(sy)
    keep = 0
    freed = 0
    for j in range(r):
        ref = st.retired[j, 0]
        epoch = st.retired[j, 1]
        if epoch < lo:
            _free(st, sy, tid, ref & 1, ref >> 1)
            freed += 1
        else:
            st.retired[keep, 0] = ref
            st.retired[keep, 1] = epoch
            keep += 1
    st.meta[M_RETIRED_N] = keep
    return freed


@kernel
def visit_check(state, node, sy):
    """Debug canary: count an optimistic reader landing on a freed node."""
    if state[node] == NODE_FREE:
        atomic_add(sy, S_DETECT, 1)


def free_counts(st: TreeState) -> tuple[int, int]:
    """(free leaves, free internal nodes) across local and shared lists."""
    leaves = int(st.lfree[:, 0].sum()) + int(st.meta[M_LSHARED_N])
    inodes = int(st.ifree[:, 0].sum()) + int(st.meta[M_ISHARED_N])
    return leaves, inodes


def allocated_counts(st: TreeState) -> tuple[int, int]:
    return int(st.meta[M_LEAF_NEXT]), int(st.meta[M_INODE_NEXT])


def retired_counts(st: TreeState) -> tuple[int, int]:
    r = int(st.meta[M_RETIRED_N])
    kinds = st.retired[:r, 0] & 1
    return int((kinds == KIND_LEAF).sum()), int((kinds == KIND_INTERNAL).sum())


class NodePool:
    """Python view of a tree's arena, for inspection and tests."""

    def __init__(self, state_fn):
        self._state_fn = state_fn

    @property
    def state(self) -> TreeState:
        return self._state_fn()

    def allocated(self) -> tuple[int, int]:
        return allocated_counts(self.state)

    def free(self) -> tuple[int, int]:
        return free_counts(self.state)

    def retired(self) -> tuple[int, int]:
        return retired_counts(self.state)

    def capacity(self) -> tuple[int, int]:
        st = self.state
        return st.leaves.shape[0], st.inodes.shape[0]
