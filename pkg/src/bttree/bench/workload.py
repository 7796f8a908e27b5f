"""Throughput workloads over one shared map.

A run prefills the map to its steady-state size, then every worker thread
draws ops from the mix with keys uniform in ``[1, k]`` until the time is up
(or its share of a fixed op budget is done).  Each worker runs compiled
batches without the GIL; Python only checks the clock between batches.
Workers seed the compiled generator from their own stream of a
``SeedSequence``, so a one-thread fixed-budget run is exactly repeatable.
"""

from __future__ import annotations

import enum
import hashlib
import threading
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from ..core.ops import tree_insert, tree_remove, tree_search
from ..core.tree import BTTree, Config
from ..sync import NEED_GROW, SyncPolicy
from .baselines import HashMap, TreapMap, hash_op, treap_op

BATCH = 4096
IMPLS = ("bttree", "baseline_bst", "baseline_hash")


class Mix(enum.Enum):
    """(search, insert, remove) fractions."""

    UPDATE = (0.0, 0.5, 0.5)
    MIXED = (0.7, 0.2, 0.1)
    CONSTANT = (1.0, 0.0, 0.0)

    @classmethod
    def parse(cls, name: "str | Mix") -> "Mix":
        if isinstance(name, Mix):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown mix {name!r}; expected update, mixed or constant") from None

    def prefill_size(self, k: int) -> int:
        if self is Mix.UPDATE:
            return k // 2
        if self is Mix.MIXED:
            return (2 * k) // 3
        return k

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class WorkloadSpec:
    mix: Mix
    k: int
    threads: int = 1
    duration: float = 5.0
    seed: int = 1
    impl: str = "bttree"
    sync: SyncPolicy = SyncPolicy.MUTEX
    ops: Optional[int] = None  # fixed budget: deterministic mode

    def __post_init__(self):
        object.__setattr__(self, "mix", Mix.parse(self.mix))
        object.__setattr__(self, "sync", SyncPolicy.parse(self.sync))
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.threads < 1:
            raise ValueError("threads must be positive")
        if self.impl not in IMPLS:
            raise ValueError(f"unknown impl {self.impl!r}; expected one of {', '.join(IMPLS)}")
        if self.ops is None and self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.ops is not None and self.ops < 0:
            raise ValueError("ops must be non-negative")

    @property
    def n(self) -> int:
        return self.mix.prefill_size(self.k)

    @property
    def deterministic(self) -> bool:
        return self.ops is not None


@dataclass
class BenchResult:
    spec: WorkloadSpec
    total_ops: int
    per_thread_ops: list[int]
    elapsed_s: float
    op_counts: tuple[int, int, int] = (0, 0, 0)  # search, insert, remove
    final_size: int = 0
    digest: str = ""

    @property
    def throughput(self) -> float:
        return self.total_ops / self.elapsed_s if self.elapsed_s > 0 else 0.0


# --- compiled batches ----------------------------------------------------------


@njit(nogil=True, cache=True)
def seed_worker(seed):
    # numba's generator state is per thread
    np.random.seed(seed)


@njit(nogil=True, cache=True)
def draw_op(p_search, p_insert, k):
    r = np.random.random()
    key = np.random.randint(1, k + 1)
    if r < p_search:
        return 0, key
    if r < p_search + p_insert:
        return 1, key
    return 2, key


@njit(nogil=True, cache=True)
def bttree_batch(st, sy, gen, tid, n, p_search, p_insert, k, pending, counts):
    """Run up to ``n`` ops; (done, status).  An op interrupted by a status
    stays in ``pending`` so the retry replays it instead of drawing again."""
    kt = st.leaves.dtype.type
    out = np.zeros(2, dtype=st.leaves.dtype)
    done = 0
    while done < n:
        if pending[0] == 0:
            code, key = draw_op(p_search, p_insert, k)
            pending[0] = 1
            pending[1] = code
            pending[2] = key
        code = pending[1]
        key = kt(pending[2])
        if code == 0:
            s = tree_search(st, sy, gen, tid, key, out)
        elif code == 1:
            s = tree_insert(st, sy, gen, tid, key, key, out)
        else:
            s = tree_remove(st, sy, gen, tid, key, out)
        if s < 0:
            return done, s
        pending[0] = 0
        counts[code] += 1
        done += 1
    return done, 0


@njit(nogil=True, cache=True)
def bttree_fill(st, sy, gen, tid, keys, start):
    kt = st.leaves.dtype.type
    out = np.zeros(2, dtype=st.leaves.dtype)
    for i in range(start, keys.shape[0]):
        key = kt(keys[i])
        s = tree_insert(st, sy, gen, tid, key, key, out)
        if s < 0:
            return i, s
    return keys.shape[0], 0


@njit(nogil=True, cache=True)
def treap_batch(nodes, vals, meta, sy, path, n, p_search, p_insert, k, counts):
    for _ in range(n):
        code, key = draw_op(p_search, p_insert, k)
        treap_op(nodes, vals, meta, sy, path, code, key, np.uint64(key))
        counts[code] += 1
    return n


@njit(nogil=True, cache=True)
def treap_fill(nodes, vals, meta, sy, path, keys):
    for i in range(keys.shape[0]):
        treap_op(nodes, vals, meta, sy, path, 1, keys[i], np.uint64(keys[i]))


@njit(nogil=True, cache=True)
def hash_batch(table, meta, sy, n, p_search, p_insert, k, counts):
    for _ in range(n):
        code, key = draw_op(p_search, p_insert, k)
        hash_op(table, meta, sy, code, key, np.uint64(key))
        counts[code] += 1
    return n


@njit(nogil=True, cache=True)
def hash_fill(table, meta, sy, keys):
    for i in range(keys.shape[0]):
        hash_op(table, meta, sy, 1, keys[i], np.uint64(keys[i]))


# --- map adapters --------------------------------------------------------------


class BenchMap:
    """What the harness needs from a map: bulk fill, batches, contents."""

    name = ""

    def fill(self, keys: np.ndarray) -> None:
        raise NotImplementedError

    def batch(self, n: int, mix: Mix, k: int, pending: np.ndarray, counts: np.ndarray) -> int:
        raise NotImplementedError

    def warm(self, mix: Mix, k: int) -> None:
        """Compile the batch kernel with a zero-length call, outside any timing."""
        raise NotImplementedError

    def __len__(self) -> int:
        raise NotImplementedError

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


class TreeBench(BenchMap):
    name = "bttree"

    def __init__(self, spec: WorkloadSpec):
        # 32-bit keys and values, as in the throughput experiments
        self.tree = BTTree(Config(sync=spec.sync, key_bits=32, max_threads=max(8, spec.threads), canary=False))
        self.tree.reserve(spec.k)

    def fill(self, keys):
        tree = self.tree
        tid = tree.thread_id()
        i = 0
        while i < len(keys):
            gen, st = tree.snapshot()
            i, status = bttree_fill(st, tree.sync_array, gen, tid, keys, i)
            if status == NEED_GROW:
                tree.grow(gen)

    def batch(self, n, mix, k, pending, counts):
        tree = self.tree
        tid = tree.thread_id()
        ps, pi, _ = mix.value
        total = 0
        while total < n:
            gen, st = tree.snapshot()
            done, status = bttree_batch(st, tree.sync_array, gen, tid, n - total, ps, pi, k, pending, counts)
            total += done
            if status == NEED_GROW:
                tree.grow(gen)
        return total

    def warm(self, mix, k):
        gen, st = self.tree.snapshot()
        ps, pi, _ = mix.value
        scratch = np.zeros(3, dtype=np.int64)
        bttree_batch(st, self.tree.sync_array, gen, self.tree.thread_id(), 0, ps, pi, k, scratch, scratch.copy())

    def __len__(self):
        return len(self.tree)

    def arrays(self):
        return self.tree.arrays()


class TreapBench(BenchMap):
    name = "baseline_bst"

    def __init__(self, spec: WorkloadSpec):
        self.map = TreapMap(spec.k, spec.sync)

    def fill(self, keys):
        m = self.map
        treap_fill(m.nodes, m.vals, m.meta, m.sy, m._path, keys)

    def batch(self, n, mix, k, pending, counts):
        m = self.map
        ps, pi, _ = mix.value
        return treap_batch(m.nodes, m.vals, m.meta, m.sy, m._path, n, ps, pi, k, counts)

    def warm(self, mix, k):
        self.batch(0, mix, k, None, np.zeros(3, dtype=np.int64))

    def __len__(self):
        return len(self.map)

    def arrays(self):
        return self.map.arrays()


class HashBench(BenchMap):
    name = "baseline_hash"

    def __init__(self, spec: WorkloadSpec):
        self.map = HashMap(spec.k, spec.sync)

    def fill(self, keys):
        m = self.map
        hash_fill(m.table, m.meta, m.sy, keys)

    def batch(self, n, mix, k, pending, counts):
        m = self.map
        ps, pi, _ = mix.value
        return hash_batch(m.table, m.meta, m.sy, n, ps, pi, k, counts)

    def warm(self, mix, k):
        self.batch(0, mix, k, None, np.zeros(3, dtype=np.int64))

    def __len__(self):
        return len(self.map)

    def arrays(self):
        return self.map.arrays()


def make_map(spec: WorkloadSpec) -> BenchMap:
    return {"bttree": TreeBench, "baseline_bst": TreapBench, "baseline_hash": HashBench}[spec.impl](spec)


# --- harness -------------------------------------------------------------------


def prefill_keys(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` distinct keys from [1, k]: uniform draws with replacement, first
    occurrences kept, until ``n`` are collected."""
    if n > k:
        raise ValueError(f"cannot prefill {n} distinct keys from [1, {k}]")
    seen = np.zeros(k + 1, dtype=bool)
    out = np.empty(n, dtype=np.int64)
    have = 0
    while have < n:
        draw = rng.integers(1, k, size=max(2 * (n - have), 64), endpoint=True)
        _, first = np.unique(draw, return_index=True)
        fresh = draw[np.sort(first)]
        fresh = fresh[~seen[fresh]][: n - have]
        seen[fresh] = True
        out[have : have + len(fresh)] = fresh
        have += len(fresh)
    return out


def prefill(m: BenchMap, spec: WorkloadSpec, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    if len(m):
        raise ValueError("prefill expects an empty map")
    rng = rng or np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(1)[0])
    keys = prefill_keys(spec.k, spec.n, rng)
    m.fill(keys)
    return keys


def content_digest(keys: np.ndarray, vals: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(keys, dtype=np.uint64).tobytes())
    h.update(np.ascontiguousarray(vals, dtype=np.uint64).tobytes())
    return h.hexdigest()[:16]


def _worker_seeds(seed: int, threads: int) -> list[int]:
    # stream 0 is the prefill; workers take the next ones
    children = np.random.SeedSequence(seed).spawn(threads + 1)[1:]
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def run_workload(spec: WorkloadSpec, m: Optional[BenchMap] = None) -> BenchResult:
    """Prefill (not counted), run the timed or fixed-budget phase, aggregate."""
    spec = spec if isinstance(spec, WorkloadSpec) else WorkloadSpec(**spec)
    m = m or make_map(spec)
    prefill(m, spec)
    m.warm(spec.mix, spec.k)
    seeds = _worker_seeds(spec.seed, spec.threads)
    counts = [np.zeros(3, dtype=np.int64) for _ in range(spec.threads)]
    budgets = None
    if spec.deterministic:
        budgets = [spec.ops // spec.threads + (1 if t < spec.ops % spec.threads else 0) for t in range(spec.threads)]
    ready = threading.Barrier(spec.threads + 1)
    go = threading.Event()
    stop_at = [0.0]
    errors = []

    def work(t):
        try:
            seed_worker(seeds[t])
            pending = np.zeros(3, dtype=np.int64)
            ready.wait()
            go.wait()
            if budgets is not None:
                left = budgets[t]
                while left > 0:
                    left -= m.batch(min(BATCH, left), spec.mix, spec.k, pending, counts[t])
            else:
                while time.perf_counter() < stop_at[0]:
                    m.batch(BATCH, spec.mix, spec.k, pending, counts[t])
        except BaseException as exc:
            errors.append(exc)

    workers = [threading.Thread(target=work, args=(t,), name=f"bench-{t}") for t in range(spec.threads)]
    for w in workers:
        w.start()
    ready.wait()
    t0 = time.perf_counter()
    stop_at[0] = t0 + spec.duration
    go.set()
    for w in workers:
        w.join()
    elapsed = time.perf_counter() - t0
    if errors:
        raise errors[0]
    per_thread = [int(c.sum()) for c in counts]
    by_kind = tuple(int(sum(c[i] for c in counts)) for i in range(3))
    keys, vals = m.arrays()
    return BenchResult(
        spec=spec,
        total_ops=sum(per_thread),
        per_thread_ops=per_thread,
        elapsed_s=elapsed,
        op_counts=by_kind,
        final_size=len(m),
        digest=content_digest(keys, vals),
    )
