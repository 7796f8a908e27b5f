import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bttree.core import OpResult, leaf_insert, leaf_remove, leaf_search, new_leaf_row
from bttree.core.leaf import gather_entries, leaf_occupancy, select_smallest

LC = 8


def filled(keys, lc=LC):
    row = new_leaf_row(lc)
    for k in keys:
        status, _, _ = leaf_insert(row, lc, np.uint64(k), np.uint64(k * 10))
        assert status == OpResult.SUCCESS
    return row


def test_empty_row_is_all_sentinels():
    row = new_leaf_row(LC)
    assert row.shape == (2 * LC,)
    assert not row.any()
    assert leaf_occupancy(row, LC) == 0


def test_search_hit_and_miss():
    row = filled([5, 9, 2])
    assert leaf_search(row, LC, np.uint64(9)) == (OpResult.SUCCESS, 90)
    assert leaf_search(row, LC, np.uint64(7))[0] == OpResult.FAILURE


def test_insert_takes_a_free_slot_then_overwrites():
    row = new_leaf_row(LC)
    assert leaf_insert(row, LC, np.uint64(4), np.uint64(1)) == (OpResult.SUCCESS, False, 0)
    assert leaf_insert(row, LC, np.uint64(4), np.uint64(2)) == (OpResult.SUCCESS, True, 1)
    assert leaf_occupancy(row, LC) == 1
    assert leaf_search(row, LC, np.uint64(4))[1] == 2


def test_insert_into_full_leaf_asks_for_split_and_changes_nothing():
    row = filled(range(1, LC + 1))
    before = row.copy()
    assert leaf_insert(row, LC, np.uint64(100), np.uint64(1))[0] == OpResult.SPLIT
    np.testing.assert_array_equal(row, before)
    # overwriting an existing key still works when full
    assert leaf_insert(row, LC, np.uint64(3), np.uint64(7)) == (OpResult.SUCCESS, True, 30)


def test_remove_reuses_slot():
    row = filled([1, 2, 3, 4])
    assert leaf_remove(row, LC, np.uint64(2), False) == (OpResult.SUCCESS, 20)
    assert leaf_remove(row, LC, np.uint64(2), False)[0] == OpResult.FAILURE
    filled_again = leaf_insert(row, LC, np.uint64(9), np.uint64(90))
    assert filled_again[0] == OpResult.SUCCESS
    assert leaf_occupancy(row, LC) == 4


@pytest.mark.parametrize("n", [0, 1, 2])
def test_small_non_root_leaf_asks_for_merge_before_removing(n):
    row = filled(range(1, n + 1))
    before = row.copy()
    # present or not, the answer is MERGE and the leaf is untouched
    assert leaf_remove(row, LC, np.uint64(1), False)[0] == OpResult.MERGE
    assert leaf_remove(row, LC, np.uint64(99), False)[0] == OpResult.MERGE
    np.testing.assert_array_equal(row, before)


def test_root_leaf_never_merges():
    row = filled([1, 2])
    assert leaf_remove(row, LC, np.uint64(1), True) == (OpResult.SUCCESS, 10)
    assert leaf_remove(row, LC, np.uint64(2), True) == (OpResult.SUCCESS, 20)
    assert leaf_occupancy(row, LC) == 0


def test_three_entries_allow_a_removal():
    row = filled([1, 2, 3])
    assert leaf_remove(row, LC, np.uint64(3), False) == (OpResult.SUCCESS, 30)


def test_gather_appends_live_entries():
    row = filled([4, 8, 6])
    leaf_remove(row, LC, np.uint64(8), True)
    keys = np.zeros(10, dtype=np.uint64)
    vals = np.zeros(10, dtype=np.uint64)
    assert gather_entries(row, LC, keys, vals, 3) == 5
    assert sorted(keys[3:5].tolist()) == [4, 6]
    assert dict(zip(keys[3:5].tolist(), vals[3:5].tolist())) == {4: 40, 6: 60}


def test_32_bit_rows():
    row = new_leaf_row(LC, np.uint32)
    assert leaf_insert(row, LC, np.uint32(0xFFFFFFFF), np.uint32(5))[0] == OpResult.SUCCESS
    assert leaf_search(row, LC, np.uint32(0xFFFFFFFF)) == (OpResult.SUCCESS, 5)


@settings(max_examples=200, deadline=None)
@given(
    keys=st.lists(st.integers(1, 10_000), min_size=1, max_size=64, unique=True),
    data=st.data(),
)
def test_select_smallest_partitions_by_rank(keys, data):
    n = len(keys)
    s = data.draw(st.integers(0, n))
    k = np.array(keys, dtype=np.uint64)
    v = k * np.uint64(3)
    select_smallest(k, v, n, s)
    ordered = sorted(keys)
    assert sorted(k[:s].tolist()) == ordered[:s]
    if s < n:
        assert k[s] == ordered[s]
    np.testing.assert_array_equal(v, k * np.uint64(3))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from("isr"), st.integers(1, 12)), max_size=60))
def test_root_leaf_behaves_like_a_bounded_dict(script):
    row = new_leaf_row(LC)
    model = {}
    for op, k in script:
        key = np.uint64(k)
        if op == "i":
            status, existed, old = leaf_insert(row, LC, key, np.uint64(k + 1000))
            if k in model or len(model) < LC:
                assert status == OpResult.SUCCESS
                assert existed == (k in model)
                model[k] = k + 1000
            else:
                assert status == OpResult.SPLIT
        elif op == "s":
            status, v = leaf_search(row, LC, key)
            assert (status == OpResult.SUCCESS) == (k in model)
        else:
            status, v = leaf_remove(row, LC, key, True)
            assert (status == OpResult.SUCCESS) == (k in model)
            model.pop(k, None)
        assert leaf_occupancy(row, LC) == len(model)
