"""Flat array layout shared by the tree, the arena and the checkers.

Every node is one row of a 2-d array whose rows are padded to a multiple of
64 bytes and whose base is 64-byte aligned, so each node starts on its own
cache line.

Leaf row:      keys[0:L_C] | values[L_C:2*L_C] | padding
Internal row:  children[0:I_C] | size[I_C] | keys[I_C+1:2*I_C] | padding

Both node kinds use the key dtype for every word; child ids and the size are
stored as unsigned integers of that width.
"""

from collections import namedtuple

import numpy as np

CACHE_LINE = 64

# meta slots; config first, writer-updated fields on separate cache lines
M_LC = 0
M_IC = 1
M_RETRY = 2
M_PREALLOC = 3
M_POLICY = 4
M_CANARY = 5
M_MAXT = 6
M_LOCAL_CAP = 7
M_ROOTH = 8
M_COUNT = 16
M_LEAF_NEXT = 24
M_INODE_NEXT = 25
M_LSHARED_N = 26
M_ISHARED_N = 27
M_RETIRED_N = 28
META_LEN = 32

HEIGHT_BITS = 8
HEIGHT_MASK = (1 << HEIGHT_BITS) - 1

# node lifecycle
NODE_UNUSED = 0
NODE_FREE = 1
NODE_LIVE = 2
NODE_RETIRED = 3

# node kinds in retired-list refs
KIND_INTERNAL = 0
KIND_LEAF = 1

TreeState = namedtuple(
    "TreeState",
    [
        "meta",  # int64[META_LEN]
        "leaves",  # key dtype [n_leaves, leaf_row_width]
        "inodes",  # key dtype [n_inodes, inode_row_width]
        "lstate",  # int8 lifecycle per leaf
        "istate",  # int8 lifecycle per internal node
        "lfree",  # int64 [max_threads, local_cap + 1]; column 0 is the count
        "ifree",
        "lshared",  # int64 shared overflow free stack
        "ishared",
        "retired",  # int64 [cap, 2]: (id * 2 + kind, retire epoch)
        "scratch",  # key dtype [2, 2*max(L_C, I_C)]: rebalance buffers (used under the lock)
        "scratch_ids",  # int64 [2*I_C]: children gathered by an internal rebalance
    ],
)


def pack_root(root: int, height: int) -> int:
    return (root << HEIGHT_BITS) | height


def unpack_root(rooth: int) -> tuple[int, int]:
    return rooth >> HEIGHT_BITS, rooth & HEIGHT_MASK


def row_width(capacity: int, itemsize: int) -> int:
    """Words per node row: 2*capacity, padded to whole cache lines."""
    per_line = CACHE_LINE // itemsize
    words = 2 * capacity
    return -(-words // per_line) * per_line


def aligned_zeros(shape, dtype, align: int = CACHE_LINE) -> np.ndarray:
    """Zeroed C-contiguous array whose data pointer is a multiple of ``align``."""
    dtype = np.dtype(dtype)
    count = int(np.prod(shape))
    nbytes = count * dtype.itemsize
    buf = np.zeros(nbytes + align, dtype=np.uint8)
    offset = (-buf.ctypes.data) % align
    arr = buf[offset : offset + nbytes].view(dtype).reshape(shape)
    assert arr.ctypes.data % align == 0
    return arr


def leaf_keys(leaves: np.ndarray, lc: int, leaf: int) -> np.ndarray:
    return leaves[leaf, :lc]


def leaf_values(leaves: np.ndarray, lc: int, leaf: int) -> np.ndarray:
    return leaves[leaf, lc : 2 * lc]


def inode_size(inodes: np.ndarray, ic: int, node: int) -> int:
    return int(inodes[node, ic])


def inode_children(inodes: np.ndarray, ic: int, node: int) -> np.ndarray:
    return inodes[node, : inode_size(inodes, ic, node)].astype(np.int64)


def inode_keys(inodes: np.ndarray, ic: int, node: int) -> np.ndarray:
    size = inode_size(inodes, ic, node)
    return inodes[node, ic + 1 : ic + size]
