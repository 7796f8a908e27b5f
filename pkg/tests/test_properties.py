"""Invariants checked over generated inputs."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, initialize, invariant, rule

from bttree import BTTree
from bttree.conformance import OracleMap, check_arena, check_tree
from bttree.core import merge_policy, route_child, split_point

keys = st.integers(1, 400)


class TreeAgainstOracle(RuleBasedStateMachine):
    @initialize(
        cap=st.sampled_from([6, 7, 8, 16]),
        policy=st.sampled_from(["mutex", "seqlock", "htm"]),
    )
    def build(self, cap, policy):
        self.tree = BTTree(leaf_capacity=cap, internal_capacity=cap, sync=policy, canary=True)
        self.model = OracleMap()

    @rule(k=keys, v=st.integers(0, 2**64 - 1))
    def insert(self, k, v):
        assert self.tree.insert(k, v) == self.model.insert(k, v)

    @rule(ks=st.lists(keys, min_size=1, max_size=80))
    def insert_many(self, ks):
        for k in ks:
            assert self.tree.insert(k, k) == self.model.insert(k, k)

    @rule(k=keys)
    def remove(self, k):
        assert self.tree.remove(k) == self.model.remove(k)

    @rule(lo=keys, n=st.integers(1, 60))
    def remove_run(self, lo, n):
        for k in range(lo, lo + n):
            assert self.tree.remove(k) == self.model.remove(k)

    @rule(k=keys)
    def search(self, k):
        assert self.tree.search(k) == self.model.search(k)

    @rule(k=st.integers(0, 401))
    def neighbours(self, k):
        assert self.tree.successor(k) == self.model.successor(k)
        assert self.tree.predecessor(k) == self.model.predecessor(k)

    @invariant()
    def same_content_and_sound(self):
        assert len(self.tree) == len(self.model)
        assert check_tree(self.tree) == []

    @invariant()
    def height_is_logarithmic(self):
        # internal nodes have >= 2 children and non-root leaves >= 2 entries
        h = self.tree.height
        if h:
            assert len(self.tree) >= 2 ** (h + 1)

    def teardown(self):
        if hasattr(self, "tree"):
            assert self.tree.items() == self.model.items()
            assert check_arena(self.tree) == []


TestTreeAgainstOracle = TreeAgainstOracle.TestCase
TestTreeAgainstOracle.settings = settings(max_examples=60, stateful_step_count=40, deadline=None)


@given(c=st.integers(6, 128), data=st.data())
def test_rebalance_outputs_fit_their_nodes(c, data):
    # a merge sees an underfull node (2) plus a sibling (2..C); a split sees C
    total = data.draw(st.one_of(st.integers(4, c + 2), st.just(c)))
    out = merge_policy(total, c)
    s = split_point(total, out)
    sizes = [s] if out == 1 else [s, total - s]
    assert sum(sizes) == total
    assert all(2 <= x <= c for x in sizes)
    assert max(sizes) - min(sizes) <= 1


@given(c=st.integers(6, 128), data=st.data())
def test_merge_outputs_are_durable(c, data):
    b = (2 * (c + 2)) // 3
    total = data.draw(st.integers(4, c + 2))
    out = merge_policy(total, c)
    s = split_point(total, out)
    if out == 1:
        # room for about a third of a node of inserts before the next split
        assert c - total >= (c - 4) // 3
    else:
        # neither half is merge-eligible (<= 2 entries) straight away
        assert min(s, total - s) >= (b + 1) // 2 >= 3


@given(sep=st.lists(st.integers(1, 10_000), min_size=1, max_size=30, unique=True), k=st.integers(1, 10_001))
def test_route_child_finds_the_covering_interval(sep, k):
    sep.sort()
    ic = 32
    row = np.zeros(2 * ic, dtype=np.uint64)
    size = len(sep) + 1
    row[ic] = size
    row[ic + 1 : ic + size] = sep
    i = route_child(row, ic, size, np.uint64(k))
    assert 0 <= i < size
    if i > 0:
        assert sep[i - 1] <= k
    if i < size - 1:
        assert k < sep[i]


@settings(max_examples=30, deadline=None)
@given(ops=st.lists(st.tuples(st.booleans(), st.integers(1, 300)), max_size=400))
def test_policies_agree_on_serial_traces(ops):
    contents = set()
    for policy in ("mutex", "seqlock", "htm"):
        t = BTTree(leaf_capacity=6, internal_capacity=6, sync=policy)
        for ins, k in ops:
            t.insert(k, k) if ins else t.remove(k)
        keys, vals = t.arrays()
        contents.add((keys.tobytes(), vals.tobytes()))
    assert len(contents) == 1


@settings(max_examples=40, deadline=None)
@given(ks=st.lists(st.integers(1, 2**32 - 1), max_size=300, unique=True))
def test_bulk_insert_then_drain_in_any_order(ks):
    t = BTTree(leaf_capacity=6, internal_capacity=6, key_bits=32)
    for k in ks:
        t.insert(k, k ^ 0xFFFF)
    assert t.items() == sorted((k, k ^ 0xFFFF) for k in ks)
    for k in reversed(ks):
        assert t.remove(k) == k ^ 0xFFFF
    assert len(t) == 0 and t.height == 0
    assert check_tree(t) == [] and check_arena(t) == []
