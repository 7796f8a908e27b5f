"""The public ordered map.

:class:`BTTree` owns the node arrays and the shared sync array, hands each
calling thread a slot id, and drives the jitted operations.  The only work
done in Python is argument checking and growing the arena when it runs dry.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..arena import NodePool, canary_default, grow_state, new_state
from ..layout import HEIGHT_MASK, M_COUNT, M_LEAF_NEXT, M_ROOTH, NODE_LIVE, TreeState, pack_root
from ..sync import (
    NEED_GROW,
    S_GEN,
    S_INJECT,
    S_POOL,
    STALE,
    ST_LAST_ATTEMPTS,
    ST_LAST_LOCKED_AT,
    ElidableLock,
    SyncPolicy,
    ThreadSlots,
    spin_lock,
    spin_unlock,
    stats_base,
    write_enter,
    write_exit,
)
from . import ops

MIN_CAPACITY = 6

_DTYPES = {32: np.uint32, 64: np.uint64}


class InvalidKeyError(ValueError):
    """Key 0 (the empty-slot marker) or a key outside the configured width."""


@dataclass(frozen=True)
class Config:
    leaf_capacity: int = 32
    internal_capacity: int = 32
    retry_limit: int = 2
    prealloc_count: int = 6
    sync: SyncPolicy = SyncPolicy.MUTEX
    key_bits: int = 64
    max_threads: int = 64
    canary: Optional[bool] = None  # None: follow the BTTREE_CANARY env var
    initial_leaves: int = 256
    initial_inodes: int = 64

    def __post_init__(self):
        object.__setattr__(self, "sync", SyncPolicy.parse(self.sync))
        if self.leaf_capacity < MIN_CAPACITY or self.internal_capacity < MIN_CAPACITY:
            raise ValueError(f"node capacities must be at least {MIN_CAPACITY}")
        if self.key_bits not in _DTYPES:
            raise ValueError("key_bits must be 32 or 64")
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be non-negative")
        # one rebalance uses up to three nodes of a kind, a root split two more
        if self.prealloc_count < 3:
            raise ValueError("prealloc_count must be at least 3")
        if self.max_threads < 1:
            raise ValueError("max_threads must be positive")
        if self.initial_leaves < self.prealloc_count + 1 or self.initial_inodes < self.prealloc_count:
            raise ValueError("initial pool too small for one preallocation")

    @property
    def dtype(self):
        return np.dtype(_DTYPES[self.key_bits])

    @property
    def canary_enabled(self) -> bool:
        return canary_default() if self.canary is None else bool(self.canary)


class BTTree:
    """Concurrent ordered map from nonzero unsigned integer keys to values.

    >>> t = BTTree()
    >>> t.insert(7, 70) is None
    True
    >>> t.insert(7, 71)
    70
    >>> t.search(7), t.successor(0)
    (71, (7, 71))
    """

    def __init__(self, config: Optional[Config] = None, **overrides):
        if config is None:
            config = Config(**overrides)
        elif overrides:
            raise TypeError("pass either a Config or keyword overrides, not both")
        self.config = config
        self.dtype = config.dtype
        self._kmax = (1 << config.key_bits) - 1
        self.lock = ElidableLock(config.sync, config.retry_limit, max_threads=config.max_threads)
        self._sy = self.lock.sy
        self._slots = ThreadSlots(self._sy, config.max_threads)
        self._grow_mutex = threading.Lock()
        self._tls = threading.local()
        st = new_state(
            leaf_capacity=config.leaf_capacity,
            internal_capacity=config.internal_capacity,
            key_dtype=self.dtype,
            n_leaves=config.initial_leaves,
            n_inodes=config.initial_inodes,
            max_threads=config.max_threads,
            retry_limit=config.retry_limit,
            prealloc=config.prealloc_count,
            policy=int(config.sync),
            canary=config.canary_enabled,
        )
        # the root starts as an empty leaf
        st.lstate[0] = NODE_LIVE
        st.meta[M_LEAF_NEXT] = 1
        st.meta[M_ROOTH] = pack_root(0, 0)
        self._state: Optional[TreeState] = st
        self.pool = NodePool(lambda: self.state)

    # --- plumbing ---------------------------------------------------------

    @property
    def state(self) -> TreeState:
        if self._state is None:
            raise RuntimeError("tree has been destroyed")
        return self._state

    @property
    def sync_array(self) -> np.ndarray:
        return self._sy

    def thread_id(self) -> int:
        return self._slots.current()

    def snapshot(self) -> tuple[int, TreeState]:
        """(generation, state) pair valid for one jitted call.

        The generation is read first; a grower swaps the state before bumping
        it, so a mismatched pair can only look stale, never current.
        """
        gen = int(self._sy[S_GEN])
        return gen, self.state

    def _out(self) -> np.ndarray:
        out = getattr(self._tls, "out", None)
        if out is None or out.dtype != self.dtype:
            out = self._tls.out = np.zeros(2, dtype=self.dtype)
        return out

    def grow(self, gen: int) -> None:
        """Double the exhausted node arrays unless someone already did."""
        with self._grow_mutex:
            if int(self._sy[S_GEN]) != gen:
                return
            cur = self.state
            if not write_enter(self._sy, gen):
                return
            spin_lock(self._sy, S_POOL)
            try:
                self._state = grow_state(cur, 2 * cur.leaves.shape[0], 2 * cur.inodes.shape[0])
                self._sy[S_GEN] = gen + 1
            finally:
                spin_unlock(self._sy, S_POOL)
                write_exit(self._sy)

    def reserve(self, n_keys: int) -> None:
        """Size the arena up front for about ``n_keys`` entries."""
        st = self.state
        need_leaves = 4 * n_keys // self.config.leaf_capacity + 64
        need_inodes = 4 * need_leaves // self.config.internal_capacity + 64
        if need_leaves <= st.leaves.shape[0] and need_inodes <= st.inodes.shape[0]:
            return
        with self._grow_mutex:
            gen = int(self._sy[S_GEN])
            while not write_enter(self._sy, gen):
                gen = int(self._sy[S_GEN])
            spin_lock(self._sy, S_POOL)
            try:
                self._state = grow_state(self.state, need_leaves, need_inodes)
                self._sy[S_GEN] = gen + 1
            finally:
                spin_unlock(self._sy, S_POOL)
                write_exit(self._sy)

    def _run(self, fn, *args):
        tid = self._slots.current()
        while True:
            gen, st = self.snapshot()
            status = fn(st, self._sy, gen, tid, *args)
            if status == STALE:
                continue
            if status == NEED_GROW:
                self.grow(gen)
                continue
            return status

    def _key(self, k) -> int:
        k = int(k)
        if k <= 0 or k > self._kmax:
            raise InvalidKeyError(f"key must be in [1, {self._kmax}], got {k}")
        return k

    def _probe(self, k) -> int:
        k = int(k)
        if k < 0 or k > self._kmax:
            raise InvalidKeyError(f"key must be in [0, {self._kmax}], got {k}")
        return k

    def _value(self, v) -> int:
        v = int(v)
        if v < 0 or v > self._kmax:
            raise ValueError(f"value must fit in {self.config.key_bits} unsigned bits")
        return v

    # --- map API ----------------------------------------------------------

    def search(self, k) -> Optional[int]:
        k = self.dtype.type(self._key(k))
        out = self._out()
        if self._run(ops.tree_search, k, out) == 1:
            return int(out[0])
        return None

    def insert(self, k, v) -> Optional[int]:
        """Upsert; returns the previous value or None."""
        k = self.dtype.type(self._key(k))
        v = self.dtype.type(self._value(v))
        out = self._out()
        if self._run(ops.tree_insert, k, v, out) == 1:
            return int(out[0])
        return None

    def remove(self, k) -> Optional[int]:
        k = self.dtype.type(self._key(k))
        out = self._out()
        if self._run(ops.tree_remove, k, out) == 1:
            return int(out[0])
        return None

    def adjacent(self, k, direction: str = "successor") -> Optional[tuple[int, int]]:
        if direction not in ("successor", "predecessor"):
            raise ValueError("direction must be 'successor' or 'predecessor'")
        k = self.dtype.type(self._probe(k))
        out = self._out()
        if self._run(ops.tree_adjacent, k, direction == "successor", out) == 1:
            return int(out[0]), int(out[1])
        return None

    def successor(self, k) -> Optional[tuple[int, int]]:
        return self.adjacent(k, "successor")

    def predecessor(self, k) -> Optional[tuple[int, int]]:
        return self.adjacent(k, "predecessor")

    def __len__(self) -> int:
        return int(self.state.meta[M_COUNT])

    size = __len__

    def __contains__(self, k) -> bool:
        return self.search(k) is not None

    def __getitem__(self, k) -> int:
        v = self.search(k)
        if v is None:
            raise KeyError(k)
        return v

    def __setitem__(self, k, v) -> None:
        self.insert(k, v)

    def __delitem__(self, k) -> None:
        if self.remove(k) is None:
            raise KeyError(k)

    @property
    def height(self) -> int:
        return int(self.state.meta[M_ROOTH]) & HEIGHT_MASK

    def items(self) -> list[tuple[int, int]]:
        """All pairs in key order.  Only meaningful while no thread mutates."""
        keys, vals = self.arrays()
        return list(zip(keys.tolist(), vals.tolist()))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted key and value arrays of the current content (quiescent only)."""
        with self.lock:
            st = self.state
            n = int(st.meta[M_COUNT])
            keys = np.empty(n, dtype=self.dtype)
            vals = np.empty(n, dtype=self.dtype)
            got = ops.collect_items(st, keys, vals)
        if got != n:
            raise AssertionError(f"count says {n} entries, leaves hold {got}")
        return keys, vals

    # --- instrumentation --------------------------------------------------

    def fail_validations(self, count: int = -1) -> None:
        """Make the next ``count`` optimistic validations fail (-1: all, 0: stop)."""
        self._sy[S_INJECT] = count

    def last_read(self) -> tuple[int, int]:
        """(attempts, attempt that took the lock or 0) of this thread's last read."""
        base = stats_base(self.config.max_threads, self._slots.current())
        return int(self._sy[base + ST_LAST_ATTEMPTS]), int(self._sy[base + ST_LAST_LOCKED_AT])

    def thread_stats(self) -> np.ndarray:
        """Per-thread counters, one row of eight per slot."""
        maxt = self.config.max_threads
        start = stats_base(maxt, 0)
        return self._sy[start : start + 8 * maxt].reshape(maxt, 8).copy()

    def destroy(self) -> None:
        self._state = None

    close = destroy

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.destroy()
        return False

    def __repr__(self):
        if self._state is None:
            return "BTTree(destroyed)"
        return f"BTTree(n={len(self)}, height={self.height}, sync={self.config.sync.name.lower()})"


def create(config: Optional[Config] = None, **overrides) -> BTTree:
    return BTTree(config, **overrides)
