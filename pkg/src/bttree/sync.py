"""Elidable locks: one lock word per tree, entered by every tree operation.

Three policies share one state array:

* ``MUTEX``   - every critical section takes a test-and-set lock.
* ``SEQLOCK`` - read sections run without the lock and validate a sequence
  counter on exit; after ``retry_limit`` failed validations in a row the
  reader takes the lock.  Writers always lock.
* ``HTM``     - lock elision.  Read sections elide exactly like ``SEQLOCK``;
  writers would speculate in a hardware transaction, which this runtime
  cannot emit, so they fall through to the lock (see :func:`htm_supported`).

The state array is shared with jitted code and outlives node-array growth,
which is signalled by bumping the generation counter.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ._atomics import (
    atomic_add,
    atomic_cas,
    atomic_load,
    atomic_store,
    cpu_relax,
    cpu_yield,
    fence,
    fence_acquire,
)
from ._jit import kernel

__all__ = [
    "SyncPolicy",
    "Intent",
    "ElidableLock",
    "Guard",
    "ThreadSlots",
    "new_sync_array",
    "htm_supported",
]


class SyncPolicy(enum.IntEnum):
    MUTEX = 0
    SEQLOCK = 1
    HTM = 2

    @classmethod
    def parse(cls, name: "str | SyncPolicy") -> "SyncPolicy":
        if isinstance(name, SyncPolicy):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown sync policy {name!r}; expected mutex, seqlock or htm") from None


class Intent(enum.IntEnum):
    READ = 0
    WRITE = 1


# sync array slots, one cache line apart
S_LOCK = 0
S_SEQ = 8
S_GEN = 16
S_EPOCH = 24
S_POOL = 32
S_INJECT = 40
S_DETECT = 48
S_HWM = 56
S_ANN = 64
SLOT_STRIDE = 8

# per-thread statistics (after the announcement block)
ST_OPT_ATTEMPTS = 0
ST_VALIDATION_FAILS = 1
ST_FALLBACKS = 2
ST_LAST_ATTEMPTS = 3
ST_LAST_LOCKED_AT = 4
ST_RESTARTS = 5

INACTIVE = np.int64(1 << 62)
SPIN_LIMIT = 64

OK = 0
STALE = -1
NEED_GROW = -2


def new_sync_array(max_threads: int) -> np.ndarray:
    n = S_ANN + 2 * SLOT_STRIDE * max_threads
    sy = np.zeros(n, dtype=np.int64)
    for t in range(max_threads):
        sy[S_ANN + SLOT_STRIDE * t] = INACTIVE
    return sy


def stats_base(max_threads: int, tid: int) -> int:
    return S_ANN + SLOT_STRIDE * max_threads + SLOT_STRIDE * tid


def htm_supported() -> bool:
    """True when the CPU advertises RTM.  The jitted paths never emit RTM."""
    try:
        with open("/proc/cpuinfo") as fh:
            for line in fh:
                if line.startswith("flags"):
                    return " rtm" in line
    except OSError:
        pass
    return False


# --- jitted primitives -----------------------------------------------------


@kernel
def spin_lock(sy, idx):
    spins = 0
    while True:
        if atomic_load(sy, idx) == 0:
            if atomic_cas(sy, idx, 0, 1) == 0:
                return
        spins += 1
        if spins < SPIN_LIMIT:
            cpu_relax()
        else:
            cpu_yield()


@kernel
def spin_unlock(sy, idx):
    atomic_store(sy, idx, 0)


@kernel
def use_lock_path(policy, intent, failures, retry_limit):
    if policy == 0 or intent == 1:
        return True
    return failures >= retry_limit


@kernel
def write_enter(sy, gen):
    """Take the lock and open a write section; False if the state moved on."""
    spin_lock(sy, S_LOCK)
    if atomic_load(sy, S_GEN) != gen:
        spin_unlock(sy, S_LOCK)
        return False
    atomic_add(sy, S_SEQ, 1)
    return True


@kernel
def write_publish(sy):
    """Close the write section (sequence back to even) and advance the epoch."""
    atomic_add(sy, S_SEQ, 1)
    atomic_add(sy, S_EPOCH, 1)


@kernel
def write_unlock(sy):
    spin_unlock(sy, S_LOCK)


@kernel
def write_exit(sy):
    write_publish(sy)
    write_unlock(sy)


@kernel
def read_begin(sy, gen):
    """Wait for an even sequence and return it; -1 if the state moved on."""
    spins = 0
    while True:
        s = atomic_load(sy, S_SEQ)
        if s & 1 == 0:
            break
        spins += 1
        if spins < SPIN_LIMIT:
            cpu_relax()
        else:
            cpu_yield()
    if atomic_load(sy, S_GEN) != gen:
        return -1
    return s


@kernel
def read_validate(sy, seq):
    inject = sy[S_INJECT]
    if inject != 0:
        # test hook: a writer commits inside this read section
        atomic_add(sy, S_SEQ, 2)
        if inject > 0:
            sy[S_INJECT] = inject - 1
    fence_acquire()
    return atomic_load(sy, S_SEQ) == seq


@kernel
def announce(sy, tid):
    atomic_store(sy, S_ANN + SLOT_STRIDE * tid, atomic_load(sy, S_EPOCH))
    fence()


@kernel
def retract(sy, tid):
    atomic_store(sy, S_ANN + SLOT_STRIDE * tid, INACTIVE)


@kernel
def min_announced(sy):
    fence()
    lo = INACTIVE
    hwm = atomic_load(sy, S_HWM)
    for t in range(hwm):
        v = atomic_load(sy, S_ANN + SLOT_STRIDE * t)
        if v < lo:
            lo = v
    return lo


@kernel
def stat_add(sy, maxt, tid, field, delta):
    i = S_ANN + SLOT_STRIDE * maxt + SLOT_STRIDE * tid + field
    sy[i] += delta


@kernel
def stat_set(sy, maxt, tid, field, value):
    sy[S_ANN + SLOT_STRIDE * maxt + SLOT_STRIDE * tid + field] = value


# --- thread slots ----------------------------------------------------------


class _SlotLease:
    __slots__ = ("slots", "tid")

    def __init__(self, slots: "ThreadSlots", tid: int):
        self.slots = slots
        self.tid = tid

    def __del__(self):
        # runs when the owning thread's locals are torn down
        try:
            self.slots._release(self.tid)
        except Exception:
            pass


class ThreadSlots:
    """Hands each OS thread a small integer id for per-thread arena and epoch state."""

    def __init__(self, sy: np.ndarray, max_threads: int):
        self._sy = sy
        self.max_threads = max_threads
        self._mutex = threading.Lock()
        self._free = list(range(max_threads - 1, -1, -1))
        self._local = threading.local()

    def current(self) -> int:
        lease = getattr(self._local, "lease", None)
        if lease is None:
            with self._mutex:
                if not self._free:
                    raise RuntimeError(f"more than {self.max_threads} threads are using this tree")
                tid = self._free.pop()
                if tid + 1 > self._sy[S_HWM]:
                    self._sy[S_HWM] = tid + 1
            lease = self._local.lease = _SlotLease(self, tid)
        return lease.tid

    def _release(self, tid: int) -> None:
        with self._mutex:
            self._free.append(tid)


# --- python facade ---------------------------------------------------------

OPTIMISTIC = "optimistic"
LOCKED = "locked"


@dataclass
class Guard:
    intent: Intent
    mode: str
    seq: int
    attempt: int


Hook = Callable[[str, Guard], None]


class ElidableLock:
    """Critical sections over a shared lock word.

    ``enter``/``exit`` are the raw protocol; ``read``/``write`` run a callable
    with retries.  ``hook`` is called as ``hook(event, guard)`` with event
    ``"entered"`` or ``"exiting"``, which lets tests interleave writers.
    """

    def __init__(
        self,
        policy: SyncPolicy | str = SyncPolicy.MUTEX,
        retry_limit: int = 2,
        sy: Optional[np.ndarray] = None,
        max_threads: int = 64,
        hook: Optional[Hook] = None,
    ):
        self.policy = SyncPolicy.parse(policy)
        if retry_limit < 0:
            raise ValueError("retry_limit must be non-negative")
        self.retry_limit = retry_limit
        self.sy = new_sync_array(max_threads) if sy is None else sy
        self.hook = hook
        self._tls = threading.local()

    @property
    def sequence(self) -> int:
        return int(self.sy[S_SEQ])

    @property
    def held(self) -> bool:
        return bool(self.sy[S_LOCK])

    def enter(self, intent: Intent = Intent.WRITE, attempt: int = 1) -> Guard:
        if use_lock_path(int(self.policy), int(intent), attempt - 1, self.retry_limit):
            while not write_enter(self.sy, self.sy[S_GEN]):
                pass
            guard = Guard(Intent(intent), LOCKED, int(self.sy[S_SEQ]), attempt)
        else:
            seq = -1
            while seq < 0:
                seq = read_begin(self.sy, self.sy[S_GEN])
            guard = Guard(Intent(intent), OPTIMISTIC, int(seq), attempt)
        if self.hook is not None:
            self.hook("entered", guard)
        return guard

    def exit(self, guard: Guard) -> bool:
        """Leave the section.  False means an optimistic read must be retried."""
        if self.hook is not None:
            self.hook("exiting", guard)
        if guard.mode == LOCKED:
            write_exit(self.sy)
            return True
        return bool(read_validate(self.sy, guard.seq))

    def read(self, fn: Callable[[], object]):
        attempt = 1
        while True:
            guard = self.enter(Intent.READ, attempt)
            try:
                result = fn()
            except Exception:
                if guard.mode == LOCKED:
                    self.exit(guard)
                    raise
                # a torn optimistic read may raise; only a validated one counts
                if self.exit(guard):
                    raise
            else:
                if self.exit(guard):
                    return result
            attempt += 1

    def write(self, fn: Callable[[], object]):
        guard = self.enter(Intent.WRITE)
        try:
            return fn()
        finally:
            self.exit(guard)

    def __enter__(self):
        stack = self._tls.__dict__.setdefault("guards", [])
        stack.append(self.enter(Intent.WRITE))
        return self

    def __exit__(self, *exc):
        self.exit(self._tls.guards.pop())
        return False
