"""Public object layer: handles, executors, descriptors, execution.

Every entry point is named ``tapp_<verb>_<object>`` and reports status
through the integral :class:`ErrorCode` contract (``OK`` is zero).
Creation calls return the created object on success and an ErrorCode on
failure; pure-action calls return an ErrorCode.  All objects carry a
key-value store reachable through :func:`tapp_vkv_set` /
:func:`tapp_vkv_get`, and objects are only valid together with the
handle that created them.

Execution is synchronous; the executor argument selects no resources in
this single-backend implementation but is validated and recorded in the
status record.
"""

from __future__ import annotations

import itertools
import threading
import weakref
from typing import Sequence

import numpy as np

from . import engine
from .core import DType, TensorDesc, TensorView
from .engine import StatusRecord
from .errors import ErrorCode, TappError, error_string
from .labels import LabelSpec

__all__ = [
    "Handle",
    "Executor",
    "TensorInfo",
    "OperationDescriptor",
    "VKVStore",
    "StatusRecord",
    "ErrorCode",
    "tapp_create_handle",
    "tapp_destroy_handle",
    "tapp_get_default_executor",
    "tapp_create_tensor_info",
    "tapp_create_contraction",
    "tapp_create_binary_op",
    "tapp_create_unary_op",
    "tapp_execute_product",
    "tapp_execute_binary",
    "tapp_execute_unary",
    "tapp_create_vkv",
    "tapp_vkv_set",
    "tapp_vkv_get",
    "tapp_error_string",
]

_ids = itertools.count(1)


class VKVStore:
    """Mapping from non-negative integer keys to opaque byte strings."""

    def __init__(self):
        self._values: dict[int, bytes] = {}
        self._lock = threading.Lock()

    def set(self, key: int, value: bytes) -> None:
        with self._lock:
            self._values[int(key)] = bytes(value)

    def get(self, key: int) -> bytes:
        with self._lock:
            try:
                return self._values[int(key)]
            except KeyError:
                raise TappError(ErrorCode.ERR_KEY_NOT_FOUND) from None


class Handle:
    """Root object owning all other library objects."""

    def __init__(self):
        self.id = next(_ids)
        self.vkv = VKVStore()
        self._lock = threading.Lock()
        self._alive = True
        self._objects: weakref.WeakSet = weakref.WeakSet()
        self._default_executor = Executor(self)

    @property
    def alive(self) -> bool:
        return self._alive

    def _register(self, obj) -> None:
        with self._lock:
            self._objects.add(obj)

    def _destroy(self) -> None:
        with self._lock:
            self._alive = False


class Executor:
    """An execution resource; the reference backend runs serially."""

    def __init__(self, handle: Handle):
        self.id = next(_ids)
        self.handle = handle
        self.vkv = VKVStore()


class TensorInfo:
    """A tensor descriptor owned by a handle."""

    def __init__(self, handle: Handle, desc: TensorDesc):
        self.id = next(_ids)
        self.handle = handle
        self.desc = desc
        self.vkv = VKVStore()
        handle._register(self)


class OperationDescriptor:
    """An immutable, reusable planned operation owned by a handle."""

    def __init__(self, handle: Handle, kind: str, plan):
        self.id = next(_ids)
        self.handle = handle
        self.kind = kind
        self.plan = plan
        self.vkv = VKVStore()
        handle._register(self)


def tapp_create_handle() -> Handle:
    return Handle()


def tapp_destroy_handle(handle) -> ErrorCode:
    """Invalidate ``handle``; all objects created under it become invalid."""
    if not isinstance(handle, Handle) or not handle.alive:
        return ErrorCode.ERR_INVALID_HANDLE
    handle._destroy()
    return ErrorCode.OK


def _live_handle(handle) -> bool:
    return isinstance(handle, Handle) and handle.alive


def tapp_get_default_executor(handle) -> Executor | ErrorCode:
    """The constant executor of ``handle``, usable without setup."""
    if not _live_handle(handle):
        return ErrorCode.ERR_INVALID_HANDLE
    return handle._default_executor


def tapp_create_tensor_info(
    handle,
    dtype: DType,
    nmodes: int,
    extents: Sequence[int],
    strides: Sequence[int] | None = None,
) -> TensorInfo | ErrorCode:
    """Describe a tensor's shape, layout and dtype.

    ``strides`` defaults to the dense column-major layout; negative and
    zero strides are accepted.
    """
    if not _live_handle(handle):
        return ErrorCode.ERR_INVALID_HANDLE
    if nmodes != len(extents) or (strides is not None and nmodes != len(strides)):
        return ErrorCode.ERR_EXTENT_MISMATCH
    try:
        if strides is None:
            desc = TensorDesc.column_major(tuple(extents), dtype)
        else:
            desc = TensorDesc(tuple(extents), tuple(strides), dtype)
    except TappError as err:
        return err.code
    return TensorInfo(handle, desc)


def _owned(handle: Handle, *infos) -> bool:
    return all(
        isinstance(i, TensorInfo) and i.handle is handle and handle.alive
        for i in infos
    )


def tapp_create_contraction(
    handle,
    info_a,
    labels_a: Sequence[str] | str,
    info_b,
    labels_b: Sequence[str] | str,
    info_c,
    labels_c: Sequence[str] | str,
    info_d,
    labels_d: Sequence[str] | str,
    compute_dtype: DType | None = None,
) -> OperationDescriptor | ErrorCode:
    """Plan ``D := alpha*A B + beta*C`` over the given descriptors."""
    if not _live_handle(handle) or not _owned(handle, info_a, info_b, info_c, info_d):
        return ErrorCode.ERR_INVALID_HANDLE
    try:
        spec = LabelSpec.of(
            tuple(labels_a), tuple(labels_b), tuple(labels_d), tuple(labels_c)
        )
        plan = engine.make_plan(
            spec, info_a.desc, info_b.desc, info_c.desc, info_d.desc, compute_dtype
        )
    except TappError as err:
        return err.code
    return OperationDescriptor(handle, "contraction", plan)


def tapp_create_binary_op(
    handle,
    info_a,
    labels_a: Sequence[str] | str,
    info_b,
    labels_b: Sequence[str] | str,
    info_c,
    labels_c: Sequence[str] | str,
) -> OperationDescriptor | ErrorCode:
    """Plan ``C := alpha*A + beta*B``."""
    if not _live_handle(handle) or not _owned(handle, info_a, info_b, info_c):
        return ErrorCode.ERR_INVALID_HANDLE
    try:
        plan = engine.make_binary_plan(
            tuple(labels_a), info_a.desc, tuple(labels_b), info_b.desc,
            tuple(labels_c), info_c.desc,
        )
    except TappError as err:
        return err.code
    return OperationDescriptor(handle, "binary", plan)


def tapp_create_unary_op(
    handle,
    info_a,
    labels_a: Sequence[str] | str,
    info_b,
    labels_b: Sequence[str] | str,
) -> OperationDescriptor | ErrorCode:
    """Plan ``B := alpha*A`` (permutation, diagonal, reduction)."""
    if not _live_handle(handle) or not _owned(handle, info_a, info_b):
        return ErrorCode.ERR_INVALID_HANDLE
    try:
        plan = engine.make_unary_plan(
            tuple(labels_a), info_a.desc, tuple(labels_b), info_b.desc
        )
    except TappError as err:
        return err.code
    return OperationDescriptor(handle, "unary", plan)


def _as_view(desc: TensorDesc, data) -> TensorView:
    """Bind descriptor to data: a flat numpy array or (array, base)."""
    if isinstance(data, tuple):
        buffer, base = data
    else:
        buffer, base = data, 0
    if not isinstance(buffer, np.ndarray):
        raise TappError(
            ErrorCode.ERR_DTYPE_MISMATCH, "tensor data must be a numpy array"
        )
    return TensorView(desc, buffer, int(base))


def _valid_execution(op, executor, kind: str) -> ErrorCode:
    if not isinstance(op, OperationDescriptor) or not op.handle.alive:
        return ErrorCode.ERR_INVALID_HANDLE
    if op.kind != kind:
        return ErrorCode.ERR_INVALID_HANDLE
    if not isinstance(executor, Executor) or executor.handle is not op.handle:
        return ErrorCode.ERR_INVALID_HANDLE
    return ErrorCode.OK


def _finish(
    status: StatusRecord, status_out: StatusRecord | None, executor
) -> ErrorCode:
    status.executor = executor
    if status_out is not None:
        status_out.seconds_elapsed = status.seconds_elapsed
        status_out.elements_written = status.elements_written
        status_out.multiply_adds = status.multiply_adds
        status_out.error = status.error
        status_out.executor = status.executor
    return status.error


def tapp_execute_product(
    op,
    executor,
    alpha,
    data_a,
    data_b,
    beta,
    data_c,
    data_d,
    status_out: StatusRecord | None = None,
) -> ErrorCode:
    """Run a planned contraction on concrete buffers.

    Each ``data_*`` is a flat numpy array, optionally wrapped as
    ``(array, base_offset)``.  ``status_out``, when given, receives the
    execution metadata; passing None suppresses it.
    """
    code = _valid_execution(op, executor, "contraction")
    if code is not ErrorCode.OK:
        return code
    plan = op.plan
    try:
        status = engine.contract(
            plan,
            alpha,
            _as_view(plan.desc_a, data_a),
            _as_view(plan.desc_b, data_b),
            beta,
            _as_view(plan.desc_c, data_c),
            _as_view(plan.desc_d, data_d),
        )
    except TappError as err:
        return _finish(StatusRecord(error=err.code), status_out, executor)
    return _finish(status, status_out, executor)


def tapp_execute_binary(
    op,
    executor,
    alpha,
    data_a,
    beta,
    data_b,
    data_c,
    status_out: StatusRecord | None = None,
) -> ErrorCode:
    code = _valid_execution(op, executor, "binary")
    if code is not ErrorCode.OK:
        return code
    plan = op.plan
    try:
        status = engine.run_binary(
            plan,
            alpha,
            _as_view(plan.desc_a, data_a),
            beta,
            _as_view(plan.desc_b, data_b),
            _as_view(plan.desc_out, data_c),
        )
    except TappError as err:
        return _finish(StatusRecord(error=err.code), status_out, executor)
    return _finish(status, status_out, executor)


def tapp_execute_unary(
    op,
    executor,
    alpha,
    data_a,
    data_b,
    status_out: StatusRecord | None = None,
) -> ErrorCode:
    code = _valid_execution(op, executor, "unary")
    if code is not ErrorCode.OK:
        return code
    plan = op.plan
    try:
        status = engine.run_unary(
            plan,
            alpha,
            _as_view(plan.desc_a, data_a),
            _as_view(plan.desc_out, data_b),
        )
    except TappError as err:
        return _finish(StatusRecord(error=err.code), status_out, executor)
    return _finish(status, status_out, executor)


def tapp_create_vkv() -> VKVStore:
    """A bare key-value store; the one object needing no handle."""
    return VKVStore()


def _store_of(obj) -> VKVStore | None:
    if isinstance(obj, VKVStore):
        return obj
    vkv = getattr(obj, "vkv", None)
    return vkv if isinstance(vkv, VKVStore) else None


def tapp_vkv_set(obj, key: int, value: bytes) -> ErrorCode:
    store = _store_of(obj)
    if store is None:
        return ErrorCode.ERR_INVALID_HANDLE
    store.set(key, value)
    return ErrorCode.OK


def tapp_vkv_get(obj, key: int) -> bytes | ErrorCode:
    store = _store_of(obj)
    if store is None:
        return ErrorCode.ERR_INVALID_HANDLE
    try:
        return store.get(key)
    except TappError as err:
        return err.code


def tapp_error_string(code: int) -> str:
    """Plain-text description for any integer status code."""
    return error_string(code)
