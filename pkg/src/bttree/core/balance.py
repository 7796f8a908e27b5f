"""Split, merge and redistribution of leaves and internal nodes.

One routine per node kind handles all three cases: a split turns one full
node into two, a merge combines an underfull node with an adjacent sibling
into one node or, when the pair is too big, redistributes it into two.  The
parent is never edited in place; a rebuilt copy replaces it through the slot
that pointed to it, and every replaced node is retired to the arena.

All routines run inside the writer critical section with enough nodes
preallocated (three per rebalance at most).
"""

import numpy as np

from .._atomics import atomic_load, atomic_store, fence_release
from .._jit import kernel
from ..arena import retire, take_inode, take_leaf
from ..layout import HEIGHT_BITS, HEIGHT_MASK, KIND_INTERNAL, KIND_LEAF, M_IC, M_LC, M_ROOTH
from .leaf import gather_entries, select_smallest


@kernel
def merge_threshold(capacity):
    """Largest combined size that merges into a single node: floor(2(C+2)/3)."""
    return (2 * (capacity + 2)) // 3


@kernel
def merge_policy(combined_size, capacity):
    """Number of output nodes (1 or 2) when merging two nodes of a kind."""
    if combined_size <= merge_threshold(capacity):
        return 1
    return 2


@kernel
def split_point(total, out):
    """Elements that go to the first output node: ceil(total / out)."""
    return (total + out - 1) // out


@kernel
def route_child(row, ic, size, k):
    """Index of the child of an internal row that may hold ``k``.

    Separator keys route right: the result is the number of keys <= ``k``
    among the ``size - 1`` routing keys, i.e. the first index with
    ``k < keys[i]``, capped at ``size - 1``.
    """
    ci = 0
    base = ic + 1
    for j in range(size - 1):
        if row[base + j] <= k:
            ci += 1
    return ci


@kernel
def set_root(st, root, height):
    fence_release()
    atomic_store(st.meta, M_ROOTH, (np.int64(root) << HEIGHT_BITS) | np.int64(height))


@kernel
def root_height(st):
    return atomic_load(st.meta, M_ROOTH) & HEIGHT_MASK


@kernel
def publish(st, gp, pi, node):
    """Point the slot that held the old parent at ``node``."""
    if gp < 0:
        set_root(st, node, root_height(st))
    else:
        fence_release()
        st.inodes[gp, pi] = node


@kernel
def rebuild_parent(st, tid, p, i, n_in, n1, n2, out, sep):
    """Copy of parent ``p`` with children ``i .. i+n_in-1`` replaced by the outputs."""
    ic = st.meta[M_IC]
    kb = ic + 1
    prow = st.inodes[p]
    psize = np.int64(prow[ic])
    p1 = take_inode(st, tid)
    q = st.inodes[p1]
    w = 0
    for j in range(i):
        q[w] = prow[j]
        w += 1
    q[w] = n1
    w += 1
    if out == 2:
        q[w] = n2
        w += 1
    for j in range(i + n_in, psize):
        q[w] = prow[j]
        w += 1
    kw = 0
    for j in range(i):
        q[kb + kw] = prow[kb + j]
        kw += 1
    if out == 2:
        q[kb + kw] = sep
        kw += 1
    for j in range(i + n_in - 1, psize - 1):
        q[kb + kw] = prow[kb + j]
        kw += 1
    q[ic] = w
    return p1


@kernel
def _pick_pair(st, p, ci, c):
    """(left, right, index of left) for merging child ``ci`` with a sibling."""
    if ci > 0:
        return np.int64(st.inodes[p, ci - 1]), c, ci - 1
    return c, np.int64(st.inodes[p, 1]), 0


@kernel
def balance_leaves(st, sy, tid, gp, pi, p, ci, c, merge):
    """Split leaf ``c`` or merge it with a sibling.

    ``(gp, pi)`` is the slot holding parent ``p`` (``gp < 0``: the root
    slot); ``p < 0`` means ``c`` is the root leaf.
    """
    lc = st.meta[M_LC]
    if merge:
        a, b, i = _pick_pair(st, p, ci, c)
        n_in = 2
    else:
        a = c
        b = -1
        i = ci
        n_in = 1
    keys = st.scratch[0]
    vals = st.scratch[1]
    total = gather_entries(st.leaves[a], lc, keys, vals, 0)
    if b >= 0:
        total = gather_entries(st.leaves[b], lc, keys, vals, total)
    out = merge_policy(total, lc) if merge else 2
    s = split_point(total, out)
    sep = st.leaves.dtype.type(0)
    if out == 2:
        select_smallest(keys, vals, total, s)
        sep = keys[s]
    n1 = take_leaf(st, tid)
    row = st.leaves[n1]
    for j in range(s):
        row[j] = keys[j]
        row[lc + j] = vals[j]
    n2 = -1
    if out == 2:
        n2 = take_leaf(st, tid)
        row = st.leaves[n2]
        for j in range(s, total):
            row[j - s] = keys[j]
            row[lc + j - s] = vals[j]
    retire(st, sy, KIND_LEAF, a)
    if b >= 0:
        retire(st, sy, KIND_LEAF, b)
    if p < 0:
        ic = st.meta[M_IC]
        r = take_inode(st, tid)
        q = st.inodes[r]
        q[0] = n1
        q[1] = n2
        q[ic] = 2
        q[ic + 1] = sep
        set_root(st, r, 1)
        return
    ic = st.meta[M_IC]
    psize = np.int64(st.inodes[p, ic])
    if out == 1 and gp < 0 and psize == 2:
        # the root's only two children became one: it is the new root
        set_root(st, n1, root_height(st) - 1)
    else:
        p1 = rebuild_parent(st, tid, p, i, n_in, n1, n2, out, sep)
        publish(st, gp, pi, p1)
    retire(st, sy, KIND_INTERNAL, p)


@kernel
def balance_internals(st, sy, tid, gp, pi, p, ci, c, merge):
    """Split internal node ``c`` or merge it with a sibling.

    Children are concatenated and cut at ceil(total/out).  For a merge the
    parent's separator sits between the two key runs; when two nodes come
    out, the key at index ``s - 1`` of that run moves up to the parent.
    """
    ic = st.meta[M_IC]
    kb = ic + 1
    if merge:
        a, b, i = _pick_pair(st, p, ci, c)
        n_in = 2
    else:
        a = c
        b = -1
        i = ci
        n_in = 1
    ch = st.scratch_ids
    ks = st.scratch[0]
    arow = st.inodes[a]
    asz = np.int64(arow[ic])
    total = 0
    nk = 0
    for j in range(asz):
        ch[total] = arow[j]
        total += 1
    for j in range(asz - 1):
        ks[nk] = arow[kb + j]
        nk += 1
    if b >= 0:
        ks[nk] = st.inodes[p, kb + i]
        nk += 1
        brow = st.inodes[b]
        bsz = np.int64(brow[ic])
        for j in range(bsz):
            ch[total] = brow[j]
            total += 1
        for j in range(bsz - 1):
            ks[nk] = brow[kb + j]
            nk += 1
    out = merge_policy(total, ic) if merge else 2
    s = split_point(total, out)
    n1 = take_inode(st, tid)
    q = st.inodes[n1]
    for j in range(s):
        q[j] = ch[j]
    for j in range(s - 1):
        q[kb + j] = ks[j]
    q[ic] = s
    n2 = -1
    promoted = st.inodes.dtype.type(0)
    if out == 2:
        n2 = take_inode(st, tid)
        q = st.inodes[n2]
        for j in range(s, total):
            q[j - s] = ch[j]
        for j in range(s, total - 1):
            q[kb + j - s] = ks[j]
        q[ic] = total - s
        promoted = ks[s - 1]
    retire(st, sy, KIND_INTERNAL, a)
    if b >= 0:
        retire(st, sy, KIND_INTERNAL, b)
    if p < 0:
        r = take_inode(st, tid)
        q = st.inodes[r]
        q[0] = n1
        q[1] = n2
        q[ic] = 2
        q[kb] = promoted
        set_root(st, r, root_height(st) + 1)
        return
    psize = np.int64(st.inodes[p, ic])
    if out == 1 and gp < 0 and psize == 2:
        set_root(st, n1, root_height(st) - 1)
    else:
        p1 = rebuild_parent(st, tid, p, i, n_in, n1, n2, out, promoted)
        publish(st, gp, pi, p1)
    retire(st, sy, KIND_INTERNAL, p)
