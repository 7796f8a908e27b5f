"""Reference maps the tree is checked against.

:class:`OracleMap` is the readable ground truth: a sorted key list searched
with :mod:`bisect` plus a dict of values.  :func:`dense_apply` is the same
semantics over a small dense key range, compiled, for long differential runs.
Neither shares code with the tree.
"""

from __future__ import annotations

import bisect
from typing import Iterable, Optional

import numpy as np
from numba import njit

# op codes shared by traces, drivers and oracles
OP_SEARCH = 0
OP_INSERT = 1
OP_REMOVE = 2
OP_SUCCESSOR = 3
OP_PREDECESSOR = 4
OP_CORRUPT = 5

OP_NAMES = {
    OP_SEARCH: "search",
    OP_INSERT: "insert",
    OP_REMOVE: "remove",
    OP_SUCCESSOR: "successor",
    OP_PREDECESSOR: "predecessor",
    OP_CORRUPT: "corrupt",
}
OP_CODES = {name: code for code, name in OP_NAMES.items()}


class OracleMap:
    """Sorted association list with the tree's API."""

    def __init__(self, items: Iterable[tuple[int, int]] = ()):
        self._keys: list[int] = []
        self._vals: dict[int, int] = {}
        for k, v in items:
            self.insert(k, v)

    def search(self, k: int) -> Optional[int]:
        return self._vals.get(k)

    def insert(self, k: int, v: int) -> Optional[int]:
        old = self._vals.get(k)
        if old is None:
            bisect.insort(self._keys, k)
        self._vals[k] = v
        return old

    def remove(self, k: int) -> Optional[int]:
        old = self._vals.pop(k, None)
        if old is not None:
            del self._keys[bisect.bisect_left(self._keys, k)]
        return old

    def successor(self, k: int) -> Optional[tuple[int, int]]:
        i = bisect.bisect_right(self._keys, k)
        if i == len(self._keys):
            return None
        key = self._keys[i]
        return key, self._vals[key]

    def predecessor(self, k: int) -> Optional[tuple[int, int]]:
        i = bisect.bisect_left(self._keys, k)
        if i == 0:
            return None
        key = self._keys[i - 1]
        return key, self._vals[key]

    def items(self) -> list[tuple[int, int]]:
        return [(k, self._vals[k]) for k in self._keys]

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, k) -> bool:
        return k in self._vals

    def apply(self, code: int, k: int, v: int) -> tuple[int, int, int]:
        """Run one op; result row (status, value-or-key, value) as the drivers record it."""
        if code == OP_SEARCH:
            r = self.search(k)
            return (0, 0, 0) if r is None else (1, r, 0)
        if code == OP_INSERT:
            r = self.insert(k, v)
            return (0, 0, 0) if r is None else (1, r, 0)
        if code == OP_REMOVE:
            r = self.remove(k)
            return (0, 0, 0) if r is None else (1, r, 0)
        if code in (OP_SUCCESSOR, OP_PREDECESSOR):
            p = self.successor(k) if code == OP_SUCCESSOR else self.predecessor(k)
            return (0, 0, 0) if p is None else (1, p[0], p[1])
        if code == OP_CORRUPT:
            return (0, 0, 0)
        raise ValueError(f"unknown op code {code}")


@njit(cache=True)
def dense_apply(ops, present, vals, results, start, stop):
    """Oracle over keys ``0 .. len(present)-1``; same result rows as the tree driver."""
    top = present.shape[0]
    for i in range(start, stop):
        code = ops[i, 0]
        k = np.int64(ops[i, 1])
        v = ops[i, 2]
        s = 0
        a = np.uint64(0)
        b = np.uint64(0)
        if code == OP_SEARCH:
            if k < top and present[k]:
                s = 1
                a = vals[k]
        elif code == OP_INSERT:
            if present[k]:
                s = 1
                a = vals[k]
            present[k] = True
            vals[k] = v
        elif code == OP_REMOVE:
            if k < top and present[k]:
                s = 1
                a = vals[k]
                present[k] = False
        elif code == OP_SUCCESSOR:
            j = k + 1
            while j < top and not present[j]:
                j += 1
            if j < top:
                s = 1
                a = np.uint64(j)
                b = vals[j]
        elif code == OP_PREDECESSOR:
            j = min(k, top) - 1
            while j > 0 and not present[j]:
                j -= 1
            if j > 0:
                s = 1
                a = np.uint64(j)
                b = vals[j]
        results[i, 0] = s
        results[i, 1] = a
        results[i, 2] = b


class DenseOracle:
    """Compiled oracle for keys in ``[1, key_range]``."""

    def __init__(self, key_range: int):
        self.key_range = key_range
        self.present = np.zeros(key_range + 2, dtype=np.bool_)
        self.vals = np.zeros(key_range + 2, dtype=np.uint64)

    def run(self, ops: np.ndarray, results: np.ndarray, start: int = 0, stop: Optional[int] = None) -> None:
        stop = len(ops) if stop is None else stop
        dense_apply(ops, self.present, self.vals, results, start, stop)

    def items(self) -> list[tuple[int, int]]:
        keys = np.flatnonzero(self.present)
        return list(zip(keys.tolist(), self.vals[keys].tolist()))

    def __len__(self) -> int:
        return int(self.present.sum())
