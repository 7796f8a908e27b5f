"""Structural invariant checker.

``check_tree`` walks the tree from the root at quiescence and reports every
broken invariant it finds: node liveness and kind at each depth (which is
how non-uniform depth shows up in a flat layout), occupancy and size bounds,
routing-key order and ranges, key uniqueness, sentinel discipline and the
entry count.  The walk is compiled; the wrapper turns its violation records
into readable messages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..arena import allocated_counts, free_counts, retired_counts
from ..layout import HEIGHT_BITS, HEIGHT_MASK, M_COUNT, M_IC, M_LC, M_ROOTH, NODE_LIVE, TreeState

V_KIND = 1
V_LEAF_OCCUPANCY = 2
V_INTERNAL_SIZE = 3
V_KEY_ORDER = 4
V_RANGE = 5
V_DUPLICATE = 6
V_SENTINEL = 7
V_SHARED = 8
V_COUNT = 9

KIND_NAMES = {
    V_KIND: "kind",
    V_LEAF_OCCUPANCY: "leaf-occupancy",
    V_INTERNAL_SIZE: "internal-size",
    V_KEY_ORDER: "key-order",
    V_RANGE: "range",
    V_DUPLICATE: "duplicate",
    V_SENTINEL: "sentinel",
    V_SHARED: "shared-node",
    V_COUNT: "count",
}

MAX_VIOLATIONS = 1024


@dataclass(frozen=True)
class Violation:
    kind: str
    node: int
    message: str

    def __str__(self):
        return f"[{self.kind}] node {self.node}: {self.message}"


@njit(cache=True)
def _record(viol, nv, code, node, a, b):
    if nv < viol.shape[0]:
        viol[nv, 0] = code
        viol[nv, 1] = node
        viol[nv, 2] = a
        viol[nv, 3] = b
    return nv + 1


@njit(cache=True)
def scan_tree(st, viol):
    """Walk the live tree; returns the number of violations (may exceed ``len(viol)``)."""
    lc = st.meta[M_LC]
    ic = st.meta[M_IC]
    rooth = st.meta[M_ROOTH]
    root = rooth >> HEIGHT_BITS
    height = rooth & HEIGHT_MASK
    n_leaves = st.leaves.shape[0]
    n_inodes = st.inodes.shape[0]
    zero = st.leaves.dtype.type(0)
    seen_leaf = np.zeros(n_leaves, dtype=np.bool_)
    seen_inode = np.zeros(n_inodes, dtype=np.bool_)
    keys = np.empty(n_leaves * lc, dtype=st.leaves.dtype)
    nk = 0
    nv = 0

    cap = (height + 1) * ic + 1
    s_node = np.empty(cap, dtype=np.int64)
    s_depth = np.empty(cap, dtype=np.int64)
    s_haslo = np.empty(cap, dtype=np.bool_)
    s_hashi = np.empty(cap, dtype=np.bool_)
    s_lo = np.empty(cap, dtype=st.leaves.dtype)
    s_hi = np.empty(cap, dtype=st.leaves.dtype)
    top = 1
    s_node[0] = root
    s_depth[0] = 0
    s_haslo[0] = False
    s_hashi[0] = False
    s_lo[0] = zero
    s_hi[0] = zero

    while top > 0:
        top -= 1
        node = s_node[top]
        d = s_depth[top]
        has_lo = s_haslo[top]
        has_hi = s_hashi[top]
        lo = s_lo[top]
        hi = s_hi[top]
        if d == height:
            if node < 0 or node >= n_leaves or st.lstate[node] != NODE_LIVE:
                nv = _record(viol, nv, V_KIND, node, d, 1)
                continue
            if seen_leaf[node]:
                nv = _record(viol, nv, V_SHARED, node, d, 1)
                continue
            seen_leaf[node] = True
            row = st.leaves[node]
            occ = 0
            for i in range(lc):
                key = row[i]
                if key == zero:
                    continue
                occ += 1
                keys[nk] = key
                nk += 1
                if (has_lo and key < lo) or (has_hi and key >= hi):
                    nv = _record(viol, nv, V_RANGE, node, np.int64(key), i)
            if d > 0 and occ < 2:
                nv = _record(viol, nv, V_LEAF_OCCUPANCY, node, occ, 0)
            continue
        if node < 0 or node >= n_inodes or st.istate[node] != NODE_LIVE:
            nv = _record(viol, nv, V_KIND, node, d, 0)
            continue
        if seen_inode[node]:
            nv = _record(viol, nv, V_SHARED, node, d, 0)
            continue
        seen_inode[node] = True
        row = st.inodes[node]
        size = np.int64(row[ic])
        if size < 2 or size > ic:
            nv = _record(viol, nv, V_INTERNAL_SIZE, node, size, 0)
            continue
        kb = ic + 1
        for j in range(size - 1):
            key = row[kb + j]
            if key == zero:
                nv = _record(viol, nv, V_SENTINEL, node, j, 0)
            if j > 0 and key <= row[kb + j - 1]:
                nv = _record(viol, nv, V_KEY_ORDER, node, j, 0)
            if (has_lo and key < lo) or (has_hi and key >= hi):
                nv = _record(viol, nv, V_RANGE, node, np.int64(key), -1 - j)
        if top + size > cap:
            # a stack this deep means a cycle or a corrupt height
            nv = _record(viol, nv, V_SHARED, node, d, 0)
            continue
        for j in range(size - 1, -1, -1):
            s_node[top] = np.int64(row[j])
            s_depth[top] = d + 1
            if j > 0:
                s_haslo[top] = True
                s_lo[top] = row[kb + j - 1]
            else:
                s_haslo[top] = has_lo
                s_lo[top] = lo
            if j < size - 1:
                s_hashi[top] = True
                s_hi[top] = row[kb + j]
            else:
                s_hashi[top] = has_hi
                s_hi[top] = hi
            top += 1

    ks = np.sort(keys[:nk])
    for i in range(1, nk):
        if ks[i] == ks[i - 1] and (i == 1 or ks[i - 1] != ks[i - 2]):
            nv = _record(viol, nv, V_DUPLICATE, -1, np.int64(ks[i]), 0)
    if nk != st.meta[M_COUNT]:
        nv = _record(viol, nv, V_COUNT, -1, nk, st.meta[M_COUNT])
    return nv


def _describe(code: int, node: int, a: int, b: int) -> Violation:
    kind = KIND_NAMES.get(code, str(code))
    if code == V_KIND:
        want = "leaf" if b else "internal node"
        msg = f"reached at depth {a} but is not a live {want}"
    elif code == V_LEAF_OCCUPANCY:
        msg = f"non-root leaf holds {a} entries (minimum 2)"
    elif code == V_INTERNAL_SIZE:
        msg = f"internal node has {a} children"
    elif code == V_KEY_ORDER:
        msg = f"routing key {a} is not greater than its predecessor"
    elif code == V_RANGE:
        where = f"slot {b}" if b >= 0 else f"routing key {-1 - b}"
        msg = f"key {a} at {where} lies outside the range its parents route to it"
    elif code == V_DUPLICATE:
        msg = f"key {a} stored in more than one slot"
    elif code == V_SENTINEL:
        msg = f"routing key {a} is the empty-slot marker 0"
    elif code == V_SHARED:
        msg = f"reached more than once (depth {a})"
    elif code == V_COUNT:
        msg = f"leaves hold {a} entries but the count says {b}"
    else:
        msg = f"unknown violation ({a}, {b})"
    return Violation(kind, int(node), msg)


def _state_of(obj) -> TreeState:
    return obj.state if hasattr(obj, "state") and not isinstance(obj, TreeState) else obj


def check_tree(tree) -> list[Violation]:
    """Every structural violation in ``tree`` (a BTTree or its state); empty when sound."""
    st = _state_of(tree)
    viol = np.zeros((MAX_VIOLATIONS, 4), dtype=np.int64)
    nv = scan_tree(st, viol)
    found = [_describe(*map(int, viol[i])) for i in range(min(nv, MAX_VIOLATIONS))]
    if nv > MAX_VIOLATIONS:
        found.append(Violation("truncated", -1, f"{nv - MAX_VIOLATIONS} more violations not listed"))
    return found


def check_arena(tree) -> list[Violation]:
    """Pool conservation: every allocated node is free, live in the tree, or retired."""
    st = _state_of(tree)
    out = []
    live_leaves = int((st.lstate == NODE_LIVE).sum())
    live_inodes = int((st.istate == NODE_LIVE).sum())
    reach = _reachable(st)
    for name, alloc, free, live, retired, reached in (
        ("leaf", allocated_counts(st)[0], free_counts(st)[0], live_leaves, retired_counts(st)[0], reach[0]),
        ("internal", allocated_counts(st)[1], free_counts(st)[1], live_inodes, retired_counts(st)[1], reach[1]),
    ):
        if alloc != free + reached + retired:
            out.append(
                Violation(
                    "conservation",
                    -1,
                    f"{name}: {alloc} allocated != {free} free + {reached} in tree + {retired} retired",
                )
            )
        if live != reached:
            out.append(Violation("conservation", -1, f"{name}: {live} marked live but {reached} reachable"))
    return out


def _reachable(st: TreeState) -> tuple[int, int]:
    ic = int(st.meta[M_IC])
    rooth = int(st.meta[M_ROOTH])
    root, height = rooth >> HEIGHT_BITS, rooth & HEIGHT_MASK
    level = [root]
    inodes = 0
    for _ in range(height):
        inodes += len(level)
        nxt = []
        for node in level:
            size = int(st.inodes[node, ic])
            nxt.extend(int(c) for c in st.inodes[node, :size])
        level = nxt
    return len(level), inodes


def corrupt_leaf_key(tree, salt: int = 0) -> int:
    """Test hook: flip the low bit of one stored key.  Returns the original key.

    The victim is the ``salt``-th occupied slot (mod occupancy) of the first
    leaf that has any entries; the caller must hold the tree quiescent.
    """
    st = _state_of(tree)
    lc = int(st.meta[M_LC])
    live = np.flatnonzero(st.lstate == NODE_LIVE)
    for leaf in live:
        row = st.leaves[leaf]
        slots = np.flatnonzero(row[:lc])
        if len(slots):
            i = int(slots[salt % len(slots)])
            original = int(row[i])
            row[i] = row.dtype.type(original ^ 1) if original ^ 1 else row.dtype.type(original ^ 3)
            return original
    return 0
