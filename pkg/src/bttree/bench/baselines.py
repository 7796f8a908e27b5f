"""Comparison maps for the benchmark, behind the same lock as the tree.

``TreapMap`` is a balanced binary search tree (a treap with random
priorities, iterative insert/remove by rotation).  ``HashMap`` is an
open-addressing table with linear probing and backward-shift deletion.  Both
are compiled, keep nodes in flat preallocated arrays, and use the tree's
sync primitives: writers take the lock, readers under an optimistic policy
validate the sequence counter and fall back to the lock after
``retry_limit`` failures.  Optimistic readers bound their walks because
they may see half-done rotations or shifts.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .._jit import kernel
from ..sync import SyncPolicy, new_sync_array, read_begin, read_validate, use_lock_path, write_enter, write_exit

# treap node columns
T_KEY = 0
T_LEFT = 1
T_RIGHT = 2
T_PRIO = 3
# treap meta
TM_ROOT = 0
TM_COUNT = 1
TM_FREE = 2
TM_NEXT = 3
TM_RNG = 4
TM_POLICY = 5
TM_RETRY = 6

MAX_DEPTH = 1024


@kernel
def _xorshift(meta):
    x = np.uint64(meta[TM_RNG])
    x ^= x << np.uint64(13)
    x ^= x >> np.uint64(7)
    x ^= x << np.uint64(17)
    meta[TM_RNG] = np.int64(x >> np.uint64(1))
    return meta[TM_RNG]


@kernel
def _set_link(nodes, meta, parent, side, child):
    if parent == 0:
        meta[TM_ROOT] = child
    else:
        nodes[parent, side] = child


@kernel
def treap_find(nodes, vals, meta, k, bounded):
    """(found, value); with ``bounded`` gives up (-1) after MAX_DEPTH hops."""
    cur = meta[TM_ROOT]
    hops = 0
    cap = nodes.shape[0]
    while cur != 0:
        if bounded:
            hops += 1
            if hops > MAX_DEPTH or cur < 0 or cur >= cap:
                return -1, np.uint64(0)
        key = nodes[cur, T_KEY]
        if key == k:
            return 1, vals[cur]
        cur = nodes[cur, T_LEFT] if k < key else nodes[cur, T_RIGHT]
    return 0, np.uint64(0)


@kernel
def treap_insert(nodes, vals, meta, path, k, v):
    cur = meta[TM_ROOT]
    depth = 0
    while cur != 0:
        key = nodes[cur, T_KEY]
        if key == k:
            old = vals[cur]
            vals[cur] = v
            return 1, old
        path[depth] = cur
        depth += 1
        cur = nodes[cur, T_LEFT] if k < key else nodes[cur, T_RIGHT]
    n = meta[TM_FREE]
    if n != 0:
        meta[TM_FREE] = nodes[n, T_LEFT]
    else:
        n = meta[TM_NEXT]
        if n >= nodes.shape[0]:
            raise MemoryError("treap capacity exhausted")
        meta[TM_NEXT] = n + 1
    nodes[n, T_KEY] = k
    nodes[n, T_LEFT] = 0
    nodes[n, T_RIGHT] = 0
    nodes[n, T_PRIO] = _xorshift(meta)
    vals[n] = v
    if depth == 0:
        meta[TM_ROOT] = n
    else:
        p = path[depth - 1]
        _set_link(nodes, meta, p, T_LEFT if k < nodes[p, T_KEY] else T_RIGHT, n)
    # rotate the new node up while it outranks its parent
    while depth > 0:
        p = path[depth - 1]
        if nodes[p, T_PRIO] >= nodes[n, T_PRIO]:
            break
        if nodes[p, T_LEFT] == n:
            nodes[p, T_LEFT] = nodes[n, T_RIGHT]
            nodes[n, T_RIGHT] = p
        else:
            nodes[p, T_RIGHT] = nodes[n, T_LEFT]
            nodes[n, T_LEFT] = p
        depth -= 1
        if depth == 0:
            meta[TM_ROOT] = n
        else:
            g = path[depth - 1]
            _set_link(nodes, meta, g, T_LEFT if nodes[g, T_LEFT] == p else T_RIGHT, n)
    meta[TM_COUNT] += 1
    return 0, np.uint64(0)


@kernel
def treap_remove(nodes, vals, meta, k):
    parent = 0
    side = T_LEFT
    x = meta[TM_ROOT]
    while x != 0:
        key = nodes[x, T_KEY]
        if key == k:
            break
        parent = x
        side = T_LEFT if k < key else T_RIGHT
        x = nodes[x, side]
    if x == 0:
        return 0, np.uint64(0)
    old = vals[x]
    # rotate x down until it has at most one child
    while nodes[x, T_LEFT] != 0 and nodes[x, T_RIGHT] != 0:
        left = nodes[x, T_LEFT]
        right = nodes[x, T_RIGHT]
        if nodes[left, T_PRIO] > nodes[right, T_PRIO]:
            nodes[x, T_LEFT] = nodes[left, T_RIGHT]
            nodes[left, T_RIGHT] = x
            _set_link(nodes, meta, parent, side, left)
            parent = left
            side = T_RIGHT
        else:
            nodes[x, T_RIGHT] = nodes[right, T_LEFT]
            nodes[right, T_LEFT] = x
            _set_link(nodes, meta, parent, side, right)
            parent = right
            side = T_LEFT
    child = nodes[x, T_LEFT] if nodes[x, T_LEFT] != 0 else nodes[x, T_RIGHT]
    _set_link(nodes, meta, parent, side, child)
    nodes[x, T_LEFT] = meta[TM_FREE]
    nodes[x, T_RIGHT] = 0
    meta[TM_FREE] = x
    meta[TM_COUNT] -= 1
    return 1, old


@njit(nogil=True, cache=True)
def treap_inorder(nodes, vals, meta, keys_out, vals_out):
    stack = np.empty(MAX_DEPTH * 4, dtype=np.int64)
    top = 0
    cur = meta[TM_ROOT]
    n = 0
    while cur != 0 or top > 0:
        while cur != 0:
            stack[top] = cur
            top += 1
            cur = nodes[cur, T_LEFT]
        top -= 1
        cur = stack[top]
        keys_out[n] = nodes[cur, T_KEY]
        vals_out[n] = vals[cur]
        n += 1
        cur = nodes[cur, T_RIGHT]
    return n


@kernel
def treap_op(nodes, vals, meta, sy, path, code, k, v):
    """One map op under the lock protocol; (status, value)."""
    if code == 0:
        policy = meta[TM_POLICY]
        retry = meta[TM_RETRY]
        failures = 0
        while not use_lock_path(policy, 0, failures, retry):
            seq = read_begin(sy, 0)
            s, val = treap_find(nodes, vals, meta, k, True)
            if read_validate(sy, seq) and s >= 0:
                return s, val
            failures += 1
        write_enter(sy, 0)
        s, val = treap_find(nodes, vals, meta, k, False)
        write_exit(sy)
        return s, val
    write_enter(sy, 0)
    if code == 1:
        s, val = treap_insert(nodes, vals, meta, path, k, v)
    else:
        s, val = treap_remove(nodes, vals, meta, k)
    write_exit(sy)
    return s, val


class TreapMap:
    """Balanced BST baseline with capacity for ``capacity`` keys."""

    name = "baseline_bst"

    def __init__(self, capacity: int, policy=SyncPolicy.MUTEX, retry_limit: int = 2, seed: int = 0x5EED):
        self.nodes = np.zeros((capacity + 1, 4), dtype=np.int64)
        self.vals = np.zeros(capacity + 1, dtype=np.uint64)
        self.meta = np.zeros(8, dtype=np.int64)
        self.meta[TM_NEXT] = 1
        self.meta[TM_RNG] = seed | 1
        self.meta[TM_POLICY] = int(SyncPolicy.parse(policy))
        self.meta[TM_RETRY] = retry_limit
        self.sy = new_sync_array(1)
        self._path = np.zeros(MAX_DEPTH, dtype=np.int64)

    def op(self, code: int, k: int, v: int = 0):
        s, val = treap_op(self.nodes, self.vals, self.meta, self.sy, self._path, code, k, np.uint64(v))
        return int(val) if s == 1 else None

    def search(self, k):
        return self.op(0, k)

    def insert(self, k, v):
        return self.op(1, k, v)

    def remove(self, k):
        return self.op(2, k)

    def __len__(self):
        return int(self.meta[TM_COUNT])

    def arrays(self):
        n = len(self)
        keys = np.empty(n, dtype=np.int64)
        vals = np.empty(n, dtype=np.uint64)
        treap_inorder(self.nodes, self.vals, self.meta, keys, vals)
        return keys.astype(np.uint64), vals


# --- hash map ----------------------------------------------------------------

HM_COUNT = 0
HM_SHIFT = 1
HM_POLICY = 2
HM_RETRY = 3

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@kernel
def _home(k, shift):
    return np.int64((np.uint64(k) * _GOLDEN) >> np.uint64(shift))


@kernel
def hash_find(table, meta, k, bounded):
    mask = table.shape[0] - 1
    i = _home(k, meta[HM_SHIFT])
    for _ in range(table.shape[0]):
        key = table[i, 0]
        if key == k:
            return 1, np.uint64(table[i, 1])
        if key == 0:
            return 0, np.uint64(0)
        i = (i + 1) & mask
    if bounded:
        return -1, np.uint64(0)
    return 0, np.uint64(0)


@kernel
def hash_insert(table, meta, k, v):
    mask = table.shape[0] - 1
    i = _home(k, meta[HM_SHIFT])
    for _ in range(table.shape[0]):
        key = table[i, 0]
        if key == k:
            old = np.uint64(table[i, 1])
            table[i, 1] = np.int64(v)
            return 1, old
        if key == 0:
            table[i, 1] = np.int64(v)
            table[i, 0] = k
            meta[HM_COUNT] += 1
            return 0, np.uint64(0)
        i = (i + 1) & mask
    raise MemoryError("hash table full")


@kernel
def hash_remove(table, meta, k):
    mask = table.shape[0] - 1
    shift = meta[HM_SHIFT]
    i = _home(k, shift)
    found = False
    for _ in range(table.shape[0]):
        key = table[i, 0]
        if key == k:
            found = True
            break
        if key == 0:
            break
        i = (i + 1) & mask
    if not found:
        return 0, np.uint64(0)
    old = np.uint64(table[i, 1])
    # backward shift: pull later entries of the cluster into the hole
    j = i
    while True:
        j = (j + 1) & mask
        key = table[j, 0]
        if key == 0:
            break
        h = _home(key, shift)
        if i <= j:
            stays = i < h and h <= j
        else:
            stays = h > i or h <= j
        if stays:
            continue
        table[i, 0] = key
        table[i, 1] = table[j, 1]
        i = j
    table[i, 0] = 0
    table[i, 1] = 0
    meta[HM_COUNT] -= 1
    return 1, old


@kernel
def hash_op(table, meta, sy, code, k, v):
    if code == 0:
        policy = meta[HM_POLICY]
        retry = meta[HM_RETRY]
        failures = 0
        while not use_lock_path(policy, 0, failures, retry):
            seq = read_begin(sy, 0)
            s, val = hash_find(table, meta, k, True)
            if read_validate(sy, seq) and s >= 0:
                return s, val
            failures += 1
        write_enter(sy, 0)
        s, val = hash_find(table, meta, k, False)
        write_exit(sy)
        return s, val
    write_enter(sy, 0)
    if code == 1:
        s, val = hash_insert(table, meta, k, v)
    else:
        s, val = hash_remove(table, meta, k)
    write_exit(sy)
    return s, val


class HashMap:
    """Linear-probing baseline sized to at least twice ``capacity`` slots."""

    name = "baseline_hash"

    def __init__(self, capacity: int, policy=SyncPolicy.MUTEX, retry_limit: int = 2):
        slots = 1
        while slots < 2 * max(capacity, 1):
            slots *= 2
        slots = max(slots, 16)
        self.table = np.zeros((slots, 2), dtype=np.int64)
        self.meta = np.zeros(4, dtype=np.int64)
        self.meta[HM_SHIFT] = 64 - (slots.bit_length() - 1)
        self.meta[HM_POLICY] = int(SyncPolicy.parse(policy))
        self.meta[HM_RETRY] = retry_limit
        self.sy = new_sync_array(1)

    def op(self, code: int, k: int, v: int = 0):
        s, val = hash_op(self.table, self.meta, self.sy, code, k, np.uint64(v))
        return int(val) if s == 1 else None

    def search(self, k):
        return self.op(0, k)

    def insert(self, k, v):
        return self.op(1, k, v)

    def remove(self, k):
        return self.op(2, k)

    def __len__(self):
        return int(self.meta[HM_COUNT])

    def arrays(self):
        used = self.table[:, 0] != 0
        keys = self.table[used, 0]
        order = np.argsort(keys)
        return keys[order].astype(np.uint64), self.table[used, 1][order].astype(np.uint64)
