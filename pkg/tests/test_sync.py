import threading

import numpy as np
import pytest
from numba import njit

from bttree import BTTree, ElidableLock, SyncPolicy
from bttree.sync import (
    LOCKED,
    OPTIMISTIC,
    S_SEQ,
    ST_FALLBACKS,
    ST_VALIDATION_FAILS,
    Intent,
    htm_supported,
    new_sync_array,
    read_begin,
    read_validate,
    use_lock_path,
    write_enter,
    write_exit,
)


@njit(nogil=True)
def _bump(sy, counter, n):
    for _ in range(n):
        write_enter(sy, 0)
        c = counter[0]
        counter[0] = c + 1
        write_exit(sy)


@njit(nogil=True)
def _pair_writer(sy, pair, n):
    for i in range(n):
        write_enter(sy, 0)
        pair[0] = i
        pair[1] = i
        write_exit(sy)


@njit(nogil=True)
def _pair_reader(sy, pair, n):
    """Count validated reads that saw a torn pair (must stay 0)."""
    torn = 0
    done = 0
    while done < n:
        seq = read_begin(sy, 0)
        a = pair[0]
        b = pair[1]
        if read_validate(sy, seq):
            if a != b:
                torn += 1
            done += 1
    return torn


def test_writers_are_serialized():
    sy = new_sync_array(4)
    counter = np.zeros(1, dtype=np.int64)
    n = 1_000_000
    workers = [threading.Thread(target=_bump, args=(sy, counter, n)) for _ in range(2)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    assert counter[0] == 2 * n
    assert sy[S_SEQ] == 4 * n  # two bumps per section, even at rest


def test_validated_optimistic_reads_are_never_torn():
    sy = new_sync_array(4)
    pair = np.zeros(2, dtype=np.int64)
    torn = []
    reader = threading.Thread(target=lambda: torn.append(_pair_reader(sy, pair, 200_000)))
    writer = threading.Thread(target=_pair_writer, args=(sy, pair, 200_000))
    reader.start()
    writer.start()
    reader.join()
    writer.join()
    assert torn == [0]


def test_write_section_leaves_sequence_even_and_two_higher():
    lock = ElidableLock("seqlock")
    before = lock.sequence
    g = lock.enter(Intent.WRITE)
    assert lock.sequence % 2 == 1
    lock.exit(g)
    assert lock.sequence % 2 == 0 and lock.sequence >= before + 2
    g = lock.enter(Intent.READ)
    assert lock.exit(g)  # nothing changed in between


def test_lock_path_decision_table():
    for failures in range(6):
        for limit in range(4):
            # mutex locks everything; writers always lock
            assert use_lock_path(0, 0, failures, limit)
            assert use_lock_path(1, 1, failures, limit)
            assert use_lock_path(1, 0, failures, limit) == (failures >= limit)
            assert use_lock_path(2, 0, failures, limit) == (failures >= limit)


def test_policy_parsing():
    assert SyncPolicy.parse("seqlock") is SyncPolicy.SEQLOCK
    assert SyncPolicy.parse(SyncPolicy.HTM) is SyncPolicy.HTM
    with pytest.raises(ValueError):
        SyncPolicy.parse("spin")
    assert isinstance(htm_supported(), bool)


def _forced_failure_log(policy, retry_limit=2):
    lock = ElidableLock(policy, retry_limit=retry_limit)
    log = []

    def hook(event, guard):
        if event != "entered" or guard.intent != Intent.READ:
            return
        log.append((guard.mode, guard.attempt))
        if guard.mode == OPTIMISTIC:
            # a writer commits while the read section is open
            w = threading.Thread(target=lock.write, args=(lambda: None,))
            w.start()
            w.join()

    lock.hook = hook
    assert lock.read(lambda: 42) == 42
    return log


def test_hook_forced_failures_fall_back_on_third_attempt():
    log = _forced_failure_log("seqlock")
    assert log == [(OPTIMISTIC, 1), (OPTIMISTIC, 2), (LOCKED, 3)]


def test_htm_reads_degrade_like_seqlock():
    assert _forced_failure_log("htm") == [(OPTIMISTIC, 1), (OPTIMISTIC, 2), (LOCKED, 3)]


def test_mutex_reads_lock_immediately():
    assert _forced_failure_log("mutex") == [(LOCKED, 1)]


@pytest.mark.parametrize("limit", [0, 1, 3])
def test_retry_limit_moves_the_fallback(limit):
    log = _forced_failure_log("seqlock", retry_limit=limit)
    assert [m for m, _ in log] == [OPTIMISTIC] * limit + [LOCKED]


def test_elidable_lock_as_context_manager_and_raw_protocol():
    lock = ElidableLock("seqlock")
    with lock:
        assert lock.held
    assert not lock.held
    g = lock.enter(Intent.READ)
    assert g.mode == OPTIMISTIC
    assert lock.exit(g)
    g = lock.enter(Intent.READ)
    lock.write(lambda: None)
    assert not lock.exit(g)


def test_failed_optimistic_read_that_raised_is_retried():
    lock = ElidableLock("seqlock")
    calls = []

    def fn():
        calls.append(1)
        if len(calls) == 1:
            lock.sy[S_SEQ] += 2  # looks like a concurrent commit
            raise IndexError("torn read")
        return "ok"

    assert lock.read(fn) == "ok"
    assert len(calls) == 2


# --- tree reads -------------------------------------------------------------


@pytest.fixture
def seq_tree():
    t = BTTree(sync="seqlock", leaf_capacity=6, internal_capacity=6)
    for k in range(1, 200):
        t.insert(k, k)
    return t


@pytest.mark.parametrize(
    "inject,expected",
    [(0, (1, 0)), (1, (2, 0)), (2, (3, 3)), (-1, (3, 3))],
)
def test_tree_read_takes_lock_exactly_on_third_attempt(seq_tree, inject, expected):
    seq_tree.fail_validations(inject)
    assert seq_tree.search(50) == 50
    assert seq_tree.last_read() == expected
    seq_tree.fail_validations(0)


def test_adjacent_reads_fall_back_the_same_way(seq_tree):
    seq_tree.fail_validations(-1)
    assert seq_tree.successor(50) == (51, 51)
    assert seq_tree.last_read() == (3, 3)
    assert seq_tree.predecessor(50) == (49, 49)
    assert seq_tree.last_read() == (3, 3)
    seq_tree.fail_validations(0)


def test_tree_read_fallback_counters(seq_tree):
    seq_tree.fail_validations(-1)
    for k in range(1, 11):
        assert seq_tree.search(k) == k
    seq_tree.fail_validations(0)
    stats = seq_tree.thread_stats()[seq_tree.thread_id()]
    assert stats[ST_FALLBACKS] == 10
    assert stats[ST_VALIDATION_FAILS] == 20


def test_mutex_tree_reads_are_locked_first_time():
    t = BTTree(sync="mutex")
    t.insert(1, 1)
    t.fail_validations(-1)
    assert t.search(1) == 1
    assert t.last_read() == (1, 1)
