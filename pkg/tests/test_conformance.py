import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bttree import BTTree, Config
from bttree.conformance import (
    DenseOracle,
    OpTrace,
    OracleMap,
    check_arena,
    check_tree,
    concurrent_stress,
    corrupt_leaf_key,
    differential_run,
    make_ops,
    replay,
    shrink,
)
from bttree.conformance.driver import drive, new_results
from bttree.conformance.oracle import OP_CORRUPT, OP_INSERT, OP_NAMES
from bttree.layout import M_COUNT, M_IC, M_LEAF_NEXT, NODE_FREE, NODE_LIVE

from conftest import make_inode, make_leaf, install_root, small_tree, two_level


# --- oracles ---------------------------------------------------------------


def test_oracle_map_semantics():
    m = OracleMap([(5, 50), (1, 10)])
    assert m.items() == [(1, 10), (5, 50)]
    assert m.insert(5, 55) == 50
    assert m.successor(1) == (5, 55)
    assert m.predecessor(1) is None
    assert m.remove(1) == 10 and m.remove(1) is None
    assert m.apply(OP_INSERT, 9, 90) == (0, 0, 0)
    with pytest.raises(ValueError):
        m.apply(42, 1, 1)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), key_range=st.integers(1, 40))
def test_dense_oracle_agrees_with_sorted_list(seed, key_range):
    ops = make_ops(seed, 300, key_range)
    dense = DenseOracle(key_range + 1)
    got = new_results(len(ops))
    dense.run(ops, got)
    ref = OracleMap()
    want = np.array([ref.apply(*row) for row in ops.tolist()], dtype=np.uint64)
    np.testing.assert_array_equal(got, want)
    assert dense.items() == ref.items()


def test_make_ops_is_reproducible_and_in_range():
    a = make_ops(7, 5000, 100)
    b = make_ops(7, 5000, 100)
    np.testing.assert_array_equal(a, b)
    probes = a[:, 0] >= 3
    assert a[~probes, 1].min() >= 1 and a[~probes, 1].max() <= 100
    assert a[probes, 1].max() <= 101
    assert set(np.unique(a[:, 0]).tolist()) == {0, 1, 2, 3, 4}


# --- checker ---------------------------------------------------------------


def kinds(violations):
    return sorted(v.kind for v in violations)


def test_sound_trees_have_no_violations(rng):
    t = BTTree(leaf_capacity=6, internal_capacity=6)
    for k in rng.permutation(3000)[:2000]:
        t.insert(int(k) + 1, 1)
    assert check_tree(t) == []
    assert check_arena(t) == []


def test_seeded_duplicate_is_reported_once():
    t = small_tree(8, 8)
    root, leaves = two_level(t, [[1, 2, 3], [10, 11, 12]])
    t.state.leaves[leaves[1], 3] = 11
    found = check_tree(t)
    assert [v.kind for v in found].count("duplicate") == 1
    assert "11" in str([v for v in found if v.kind == "duplicate"][0])


def test_duplicate_across_two_leaves_is_reported_once():
    t = small_tree(8, 8)
    root, leaves = two_level(t, [[1, 2, 3], [10, 11, 12]])
    t.state.leaves[leaves[0], 3] = 11
    t.state.meta[M_COUNT] += 1
    found = check_tree(t)
    assert [v.kind for v in found].count("duplicate") == 1


def test_empty_tree_is_sound(tree):
    assert check_tree(tree) == []
    assert check_arena(tree) == []


def test_underfull_leaf_is_reported():
    t = small_tree(8, 8)
    root, leaves = two_level(t, [[1, 2, 3], [10, 11, 12]])
    t.state.leaves[leaves[1], :8] = [10, 0, 0, 0, 0, 0, 0, 0]
    t.state.meta[M_COUNT] -= 2
    assert kinds(check_tree(t)) == ["leaf-occupancy"]


def test_misrouted_key_is_reported():
    t = small_tree(8, 8)
    root, leaves = two_level(t, [[1, 2, 3], [10, 11, 12]])
    t.state.leaves[leaves[1], 0] = 5
    assert kinds(check_tree(t)) == ["range"]


def test_unordered_and_zero_routing_keys_are_reported():
    t = small_tree(8, 8)
    root, leaves = two_level(t, [[1, 2], [10, 11], [20, 21]])
    ic = int(t.state.meta[M_IC])
    t.state.inodes[root, ic + 1 : ic + 3] = [20, 10]
    assert "key-order" in kinds(check_tree(t))
    t.state.inodes[root, ic + 1 : ic + 3] = [0, 20]
    assert "sentinel" in kinds(check_tree(t))


def test_shared_child_is_reported():
    t = small_tree(8, 8)
    root, leaves = two_level(t, [[1, 2], [10, 11]])
    t.state.inodes[root, 1] = leaves[0]
    assert "shared-node" in kinds(check_tree(t))


def test_bad_internal_size_and_dead_child_are_reported():
    t = small_tree(8, 8)
    ll = [make_leaf(t, [k, k + 1]) for k in (1, 10, 20, 30)]
    a = make_inode(t, ll[:2], [10])
    b = make_inode(t, ll[2:], [30])
    root = make_inode(t, [a, b], [20])
    install_root(t, root, 2, 8)
    assert check_tree(t) == []
    ic = int(t.state.meta[M_IC])
    t.state.istate[b] = NODE_FREE
    assert "kind" in kinds(check_tree(t))
    t.state.istate[b] = NODE_LIVE
    t.state.inodes[a, ic] = 1
    assert "internal-size" in kinds(check_tree(t))


def test_count_mismatch_is_reported(tree):
    tree.insert(1, 1)
    tree.state.meta[M_COUNT] += 1
    assert kinds(check_tree(tree)) == ["count"]


def test_corrupt_leaf_key_flips_a_stored_key(tree):
    for k in (4, 8):
        tree.insert(k, k)
    original = corrupt_leaf_key(tree, 0)
    assert original in (4, 8)
    assert tree.items() != [(4, 4), (8, 8)]


def test_arena_leak_is_reported(tree):
    tree.insert(1, 1)
    tree.state.meta[M_LEAF_NEXT] += 1  # pretend one more leaf was carved off
    assert any(v.kind == "conservation" for v in check_arena(tree))


# --- traces ----------------------------------------------------------------


def test_trace_text_round_trip(tmp_path):
    ops = make_ops(3, 50, 20)
    t = OpTrace(ops, None, {"leaf_capacity": 6, "internal_capacity": 6, "sync": "seqlock"}, "two\nlines")
    out = replay(t)
    assert not out.failed
    t.expected = out.expected
    path = t.save(tmp_path / "x.trace")
    back = OpTrace.load(path)
    np.testing.assert_array_equal(back.ops, ops)
    np.testing.assert_array_equal(back.expected, t.expected)
    assert back.config == t.config
    assert back.note == "two\nlines"
    text = path.read_text()
    assert text.startswith("# bttree op trace v1\n")
    assert all(line.split()[0] in OP_NAMES.values() for line in text.splitlines() if not line.startswith("#"))


def test_shrink_keeps_a_failing_core():
    ops = make_ops(11, 400, 30)
    ops[200] = (OP_CORRUPT, 0, 0)
    trace = OpTrace(ops, None, {"leaf_capacity": 6, "internal_capacity": 6})
    assert replay(trace).failed
    small = shrink(trace, budget_s=20)
    assert replay(small).failed
    assert len(small) <= 5
    assert OP_CORRUPT in small.ops[:, 0]


def test_shrink_leaves_passing_traces_alone():
    trace = OpTrace(make_ops(1, 30, 10), None, {})
    assert shrink(trace) is trace


# --- drivers ---------------------------------------------------------------


def test_driver_handles_growth_midway():
    t = BTTree(leaf_capacity=6, internal_capacity=6, initial_leaves=8, initial_inodes=8)
    ops = make_ops(5, 20_000, 5000, mix=(0, 1, 0, 0, 0))
    res = new_results(len(ops))
    drive(t, ops, res)
    oracle = DenseOracle(5001)
    exp = new_results(len(ops))
    oracle.run(ops, exp)
    np.testing.assert_array_equal(res, exp)
    assert t.items() == oracle.items()


@pytest.mark.parametrize("cap", [6, 32])
@pytest.mark.parametrize("sync", ["mutex", "seqlock"])
def test_differential_run_passes(cap, sync):
    cfg = Config(leaf_capacity=cap, internal_capacity=cap, sync=sync)
    v = differential_run(4, 50_000, 300, cfg, trace_dir=None)
    assert v.passed, v.message
    assert v.checkpoints == 50


def test_empty_differential_run_passes():
    v = differential_run(1, 0, 10, trace_dir=None)
    assert v.passed and v.ops_run == 0


def test_differential_run_catches_corruption_and_writes_trace(tmp_path):
    cfg = Config(leaf_capacity=6, internal_capacity=6)
    v = differential_run(2, 20_000, 200, cfg, corrupt_at=5000, trace_dir=tmp_path)
    assert not v.passed
    assert v.trace_path == tmp_path / "conform-failure-seed2.trace"
    trace = OpTrace.load(v.trace_path)
    assert len(trace) < 20
    assert replay(trace).failed


# --- concurrency -----------------------------------------------------------


@pytest.mark.parametrize("threads", [2, 3])
@pytest.mark.parametrize("policy", ["mutex", "seqlock", "htm"])
def test_small_stress_runs_pass(threads, policy):
    v = concurrent_stress(threads, 60_000, 600, policy, seed=threads)
    assert v.passed, v.message
    assert v.ops == 60_000
    assert v.canary_detections == 0


def test_single_thread_stress_matches_the_oracle():
    v = concurrent_stress(1, 40_000, 300, "mutex", seed=5)
    assert v.passed, v.message
    assert v.validation_failures == 0


def test_stress_rejects_bad_arguments():
    with pytest.raises(ValueError):
        concurrent_stress(0, 10)
    with pytest.raises(ValueError):
        concurrent_stress(8, 10, key_range=10)
