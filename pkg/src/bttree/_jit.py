"""Compilation flags for the tree's compiled paths.

Kernels are compiled without the reference-counting runtime: they take the
node arrays as arguments and never allocate, and with refcounting on every
call boundary would acquire and release each array of the state tuple,
which costs more than the tree operation itself.
"""

from numba import njit

kernel = njit(nogil=True, cache=True, _nrt=False)
