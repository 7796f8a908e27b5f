"""Helpers for building and inspecting trees by hand."""

import numpy as np
import pytest

from bttree import BTTree, Config
from bttree.arena import ensure_capacity, retire, take_inode, take_leaf
from bttree.core.balance import balance_internals, balance_leaves, set_root
from bttree.layout import KIND_LEAF, M_COUNT, M_IC, M_LC, M_ROOTH, unpack_root
from bttree.sync import OK, write_enter, write_exit


def small_tree(lc=32, ic=32, **kw):
    return BTTree(Config(leaf_capacity=lc, internal_capacity=ic, canary=False, **kw))


def _reserve(tree, n):
    gen, st = tree.snapshot()
    assert ensure_capacity(st, tree.sync_array, gen, tree.thread_id(), n) == OK
    return st


def make_leaf(tree, keys):
    """A live leaf holding ``keys`` (values are key * 10)."""
    st = _reserve(tree, 1)
    lc = int(st.meta[M_LC])
    node = take_leaf(st, tree.thread_id())
    keys = list(keys)
    st.leaves[node, : len(keys)] = keys
    st.leaves[node, lc : lc + len(keys)] = [k * 10 for k in keys]
    return node


def make_inode(tree, children, keys):
    st = _reserve(tree, 1)
    ic = int(st.meta[M_IC])
    assert len(keys) == len(children) - 1
    node = take_inode(st, tree.thread_id())
    st.inodes[node, : len(children)] = children
    st.inodes[node, ic] = len(children)
    st.inodes[node, ic + 1 : ic + len(children)] = keys
    return node


def install_root(tree, root, height, count):
    """Replace the initial empty root leaf with a hand-built subtree."""
    st = tree.state
    old, _ = unpack_root(int(st.meta[M_ROOTH]))
    retire(st, tree.sync_array, KIND_LEAF, old)
    set_root(st, root, height)
    st.meta[M_COUNT] = count


def two_level(tree, leaf_keys):
    """Root internal node over leaves with the given keys; separators are leaf minima."""
    leaves = [make_leaf(tree, ks) for ks in leaf_keys]
    root = make_inode(tree, leaves, [min(ks) for ks in leaf_keys[1:]])
    install_root(tree, root, 1, sum(len(ks) for ks in leaf_keys))
    return root, leaves


def rebalance(tree, kind, gp, pi, p, ci, c, merge):
    """Run one split (merge=False) or merge inside a write section."""
    st = _reserve(tree, 3)
    sy = tree.sync_array
    assert write_enter(sy, tree.snapshot()[0])
    try:
        fn = balance_leaves if kind == "leaf" else balance_internals
        fn(st, sy, tree.thread_id(), gp, pi, p, ci, c, merge)
    finally:
        write_exit(sy)


def shape(tree, node=None, height=None):
    """Nested view: a leaf is its sorted key list, an internal node is (keys, [children])."""
    st = tree.state
    if node is None:
        node, height = unpack_root(int(st.meta[M_ROOTH]))
    if height == 0:
        lc = int(st.meta[M_LC])
        row = st.leaves[node, :lc]
        return sorted(int(k) for k in row if k != 0)
    ic = int(st.meta[M_IC])
    size = int(st.inodes[node, ic])
    kids = [int(c) for c in st.inodes[node, :size]]
    keys = [int(k) for k in st.inodes[node, ic + 1 : ic + size]]
    return keys, [shape(tree, c, height - 1) for c in kids]


def root_of(tree):
    return unpack_root(int(tree.state.meta[M_ROOTH]))


@pytest.fixture
def tree():
    t = small_tree()
    yield t
    t.destroy()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance report -------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed, detail: str) -> None:
    """Remember one acceptance verdict; ``passed`` None means skipped."""
    status = "SKIP" if passed is None else ("PASS" if passed else "FAIL")
    line = f"criterion {criterion}: {status} - {detail}"
    ACCEPTANCE[criterion] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
