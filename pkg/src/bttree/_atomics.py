"""Atomic memory operations for numba-compiled code.

numba exposes no CPU atomics, so these are thin llvmlite intrinsics over
integer array elements.  They are usable only from jitted code.
"""

import platform

from llvmlite import ir
from numba import types
from numba.core import cgutils
from numba.extending import intrinsic

__all__ = [
    "atomic_cas",
    "atomic_add",
    "atomic_load",
    "atomic_load_acquire",
    "atomic_store",
    "atomic_store_release",
    "fence",
    "fence_acquire",
    "fence_release",
    "cpu_relax",
    "cpu_yield",
]

_X86 = platform.machine().lower() in ("x86_64", "amd64", "i386", "i686")


def _item_ptr(context, builder, aryty, ary, idx):
    arr = context.make_array(aryty)(context, builder, ary)
    return cgutils.get_item_pointer(context, builder, aryty, arr, [idx])


def _check_int_array(arr):
    if not isinstance(arr, types.Array) or not isinstance(arr.dtype, types.Integer):
        raise TypeError("atomic operations need an integer array")
    if arr.ndim != 1:
        raise TypeError("atomic operations need a 1-d array")


@intrinsic
def atomic_cas(typingctx, arr, idx, expected, new):
    """Compare-and-swap ``arr[idx]``; returns the value seen before the swap."""
    _check_int_array(arr)
    sig = arr.dtype(arr, types.intp, arr.dtype, arr.dtype)

    def codegen(context, builder, sig, args):
        ptr = _item_ptr(context, builder, sig.args[0], args[0], args[1])
        res = builder.cmpxchg(ptr, args[2], args[3], "seq_cst", "seq_cst")
        return builder.extract_value(res, 0)

    return sig, codegen


@intrinsic
def atomic_add(typingctx, arr, idx, val):
    """Fetch-and-add on ``arr[idx]``; returns the previous value."""
    _check_int_array(arr)
    sig = arr.dtype(arr, types.intp, arr.dtype)

    def codegen(context, builder, sig, args):
        ptr = _item_ptr(context, builder, sig.args[0], args[0], args[1])
        return builder.atomic_rmw("add", ptr, args[2], "seq_cst")

    return sig, codegen


def _make_load(ordering):
    @intrinsic
    def _load(typingctx, arr, idx):
        _check_int_array(arr)
        sig = arr.dtype(arr, types.intp)

        def codegen(context, builder, sig, args):
            ptr = _item_ptr(context, builder, sig.args[0], args[0], args[1])
            width = sig.return_type.bitwidth // 8
            return builder.load_atomic(ptr, ordering, width)

        return sig, codegen

    return _load


def _make_store(ordering):
    @intrinsic
    def _store(typingctx, arr, idx, val):
        _check_int_array(arr)
        sig = types.void(arr, types.intp, arr.dtype)

        def codegen(context, builder, sig, args):
            ptr = _item_ptr(context, builder, sig.args[0], args[0], args[1])
            width = sig.args[2].bitwidth // 8
            builder.store_atomic(args[2], ptr, ordering, width)
            return context.get_dummy_value()

        return sig, codegen

    return _store


atomic_load = _make_load("seq_cst")
atomic_load_acquire = _make_load("acquire")
atomic_store = _make_store("seq_cst")
atomic_store_release = _make_store("release")


def _make_fence(ordering):
    @intrinsic
    def _fence(typingctx):
        sig = types.void()

        def codegen(context, builder, sig, args):
            builder.fence(ordering)
            return context.get_dummy_value()

        return sig, codegen

    return _fence


fence = _make_fence("seq_cst")
fence_acquire = _make_fence("acquire")
fence_release = _make_fence("release")


@intrinsic
def cpu_relax(typingctx):
    """Spin-wait hint (x86 ``pause``)."""
    sig = types.void()

    def codegen(context, builder, sig, args):
        if _X86:
            # the intrinsic, not inline asm: cached object code can't hold asm
            fnty = ir.FunctionType(ir.VoidType(), [])
            fn = cgutils.get_or_insert_function(builder.module, fnty, "llvm.x86.sse2.pause")
            builder.call(fn, [])
        return context.get_dummy_value()

    return sig, codegen


@intrinsic
def cpu_yield(typingctx):
    """Give up the CPU (``sched_yield``); keeps spinners from starving a preempted holder."""
    sig = types.void()

    def codegen(context, builder, sig, args):
        fnty = ir.FunctionType(ir.IntType(32), [])
        fn = cgutils.get_or_insert_function(builder.module, fnty, "sched_yield")
        builder.call(fn, [])
        return context.get_dummy_value()

    return sig, codegen
