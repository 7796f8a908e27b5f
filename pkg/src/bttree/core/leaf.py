"""Leaf-node operations.

A leaf is ``L_C`` unordered key/value slots; key 0 marks an empty slot.
Every scan visits all slots without an early exit so the loop stays
branch-predictable and the compiler can unroll/vectorise it.

Each operation works on one leaf row (keys in ``row[:lc]``, values in
``row[lc:2*lc]``) and returns an :class:`OpResult` code.
"""

import enum

import numpy as np

from .._jit import kernel


class OpResult(enum.IntEnum):
    SUCCESS = 0
    FAILURE = 1
    MERGE = 2
    SPLIT = 3


SUCCESS = 0
FAILURE = 1
MERGE = 2
SPLIT = 3

# merge when a non-root leaf holds this many entries or fewer
MERGE_OCCUPANCY = 2


@kernel
def leaf_search(row, lc, k):
    """Return (SUCCESS, value) if ``k`` is in the leaf, else (FAILURE, 0)."""
    hit = -1
    for i in range(lc):
        if row[i] == k:
            hit = i
    if hit >= 0:
        return SUCCESS, row[lc + hit]
    return FAILURE, row.dtype.type(0)


@kernel
def leaf_insert(row, lc, k, v):
    """Upsert into the leaf.

    Returns (SUCCESS, True, old) on overwrite, (SUCCESS, False, 0) when an
    empty slot took the pair, and (SPLIT, False, 0) with the leaf untouched
    when it is full.
    """
    zero = row.dtype.type(0)
    empty = -1
    match = -1
    for i in range(lc):
        key = row[i]
        if key == zero:
            empty = i
        if key == k:
            match = i
    if match >= 0:
        old = row[lc + match]
        row[lc + match] = v
        return SUCCESS, True, old
    if empty >= 0:
        row[lc + empty] = v
        row[empty] = k
        return SUCCESS, False, zero
    return SPLIT, False, zero


@kernel
def leaf_remove(row, lc, k, is_root):
    """Remove ``k``.

    The occupancy test comes first: a non-root leaf with two or fewer
    entries answers MERGE and is left unchanged, whether or not ``k`` is
    present.  Otherwise (SUCCESS, value) or (FAILURE, 0).
    """
    zero = row.dtype.type(0)
    n = 0
    match = -1
    for i in range(lc):
        key = row[i]
        if key != zero:
            n += 1
        if key == k:
            match = i
    if n <= MERGE_OCCUPANCY and not is_root:
        return MERGE, zero
    if match >= 0:
        row[match] = zero
        return SUCCESS, row[lc + match]
    return FAILURE, zero


@kernel
def leaf_occupancy(row, lc):
    zero = row.dtype.type(0)
    n = 0
    for i in range(lc):
        if row[i] != zero:
            n += 1
    return n


@kernel
def gather_entries(row, lc, keys, vals, at):
    """Append the leaf's live entries to ``keys``/``vals`` from index ``at``."""
    zero = row.dtype.type(0)
    for i in range(lc):
        if row[i] != zero:
            keys[at] = row[i]
            vals[at] = row[lc + i]
            at += 1
    return at


@kernel
def select_smallest(keys, vals, n, s):
    """Partition ``keys[:n]`` (values alongside) around rank ``s``.

    Afterwards ``keys[:s]`` hold the ``s`` smallest keys in arbitrary order
    and, if ``s < n``, ``keys[s]`` is the smallest of the rest.  Keys are
    distinct.  Quickselect with a median-of-three pivot.
    """
    lo = 0
    hi = n - 1
    if s >= n:
        return
    while lo < hi:
        mid = (lo + hi) >> 1
        # median of three into keys[hi]
        if keys[mid] < keys[lo]:
            _swap(keys, vals, mid, lo)
        if keys[hi] < keys[lo]:
            _swap(keys, vals, hi, lo)
        if keys[mid] < keys[hi]:
            _swap(keys, vals, mid, hi)
        pivot = keys[hi]
        store = lo
        for i in range(lo, hi):
            if keys[i] < pivot:
                _swap(keys, vals, i, store)
                store += 1
        _swap(keys, vals, store, hi)
        if store == s:
            return
        if store < s:
            lo = store + 1
        else:
            hi = store - 1


@kernel
def _swap(keys, vals, i, j):
    tk = keys[i]
    keys[i] = keys[j]
    keys[j] = tk
    tv = vals[i]
    vals[i] = vals[j]
    vals[j] = tv


def new_leaf_row(lc: int, dtype=np.uint64) -> np.ndarray:
    """A standalone empty leaf row, handy for direct leaf-op calls."""
    return np.zeros(2 * lc, dtype=dtype)
