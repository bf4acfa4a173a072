"""Foundational value types: datatypes, scalars, descriptors, views.

Tensors are described by a logical shape (``extents``), a physical
strided layout (``strides``, in element units, possibly negative or
zero) and an element datatype.  The memory location of element
``(i_1, ..., i_n)`` is ``base + sum(i_k * s_k)``.  A tensor with zero
modes is a scalar occupying exactly the element at ``base``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ErrorCode, TappError

__all__ = [
    "DType",
    "ScalarValue",
    "TensorDesc",
    "TensorView",
    "dtype_promote",
    "element_offset",
    "odometer_increment",
    "validate_view",
]


class DType(Enum):
    """Element datatype: real or complex, 32- or 64-bit component width."""

    R32 = "r32"
    R64 = "r64"
    C32 = "c32"
    C64 = "c64"

    @property
    def is_complex(self) -> bool:
        return self in (DType.C32, DType.C64)

    @property
    def width(self) -> int:
        return 32 if self in (DType.R32, DType.C32) else 64

    @property
    def np_dtype(self) -> np.dtype:
        return _NP_DTYPES[self]

    @classmethod
    def from_name(cls, name: str) -> "DType":
        try:
            return cls(name.lower())
        except ValueError:
            raise TappError(
                ErrorCode.ERR_PARSE, f"unknown dtype name {name!r}"
            ) from None


_NP_DTYPES = {
    DType.R32: np.dtype(np.float32),
    DType.R64: np.dtype(np.float64),
    DType.C32: np.dtype(np.complex64),
    DType.C64: np.dtype(np.complex128),
}


def dtype_promote(a: DType, b: DType) -> DType:
    """Widths promote to the maximum; complexness is contagious."""
    if a.is_complex or b.is_complex:
        return DType.C64 if max(a.width, b.width) == 64 else DType.C32
    return DType.R64 if max(a.width, b.width) == 64 else DType.R32


def round_to(value: float | complex, dtype: DType) -> float | complex:
    """Round ``value`` to ``dtype``'s precision, dropping an imaginary
    part when the target is real."""
    if isinstance(value, complex) and not dtype.is_complex:
        value = value.real
    if dtype is DType.R32:
        return float(np.float32(value))
    if dtype is DType.C32:
        return complex(np.complex64(value))
    if dtype is DType.C64:
        return complex(value)
    return float(value)


def compute_rounder(dtype: DType) -> Callable[[float | complex], float | complex] | None:
    """Per-operation rounding for arithmetic carried out in ``dtype``.

    Returns ``None`` for 64-bit dtypes: Python floats and complexes are
    already double precision, so no rounding step is needed.
    """
    if dtype is DType.R32:
        return lambda x: float(np.float32(x))
    if dtype is DType.C32:
        return lambda z: complex(np.complex64(z))
    return None


@dataclass(frozen=True)
class ScalarValue:
    """A dtype-tagged scalar; ``im`` must be zero for real dtypes."""

    dtype: DType
    re: float
    im: float = 0.0

    def __post_init__(self):
        if not self.dtype.is_complex and self.im != 0.0:
            raise TappError(
                ErrorCode.ERR_DTYPE_MISMATCH,
                "real scalar carries a nonzero imaginary part",
            )

    @classmethod
    def of(cls, value: "ScalarValue | int | float | complex") -> "ScalarValue":
        """Coerce a Python number to a 64-bit scalar; pass through as-is."""
        if isinstance(value, ScalarValue):
            return value
        if isinstance(value, complex):
            if value.imag != 0.0:
                return cls(DType.C64, value.real, value.imag)
            return cls(DType.R64, value.real)
        return cls(DType.R64, float(value))

    @property
    def value(self) -> float | complex:
        return complex(self.re, self.im) if self.dtype.is_complex else self.re

    def cast(self, dtype: DType) -> "ScalarValue":
        v = round_to(self.value, dtype)
        if dtype.is_complex:
            return ScalarValue(dtype, v.real, v.imag)
        return ScalarValue(dtype, v)

    def add(self, other: "ScalarValue") -> "ScalarValue":
        dt = dtype_promote(self.dtype, other.dtype)
        return _from_number(round_to(self.value + other.value, dt), dt)

    def mul(self, other: "ScalarValue") -> "ScalarValue":
        dt = dtype_promote(self.dtype, other.dtype)
        return _from_number(round_to(self.value * other.value, dt), dt)

    def scale(self, factor: float) -> "ScalarValue":
        return _from_number(round_to(self.value * factor, self.dtype), self.dtype)

    def __add__(self, other: "ScalarValue") -> "ScalarValue":
        return self.add(other)

    def __mul__(self, other: "ScalarValue") -> "ScalarValue":
        return self.mul(other)


def _from_number(v: float | complex, dtype: DType) -> ScalarValue:
    if isinstance(v, complex):
        return ScalarValue(dtype, v.real, v.imag)
    return ScalarValue(dtype, v)


@dataclass(frozen=True)
class TensorDesc:
    """Logical shape, strided physical layout and dtype of one operand."""

    extents: tuple[int, ...]
    strides: tuple[int, ...]
    dtype: DType

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))
        if len(self.extents) != len(self.strides):
            raise TappError(
                ErrorCode.ERR_EXTENT_MISMATCH,
                "extent and stride lists differ in length",
            )
        if any(e < 1 for e in self.extents):
            raise TappError(ErrorCode.ERR_EXTENT_MISMATCH, "extents must be >= 1")

    @property
    def nmodes(self) -> int:
        return len(self.extents)

    @property
    def size(self) -> int:
        return math.prod(self.extents)

    @classmethod
    def column_major(cls, extents: Sequence[int], dtype: DType) -> "TensorDesc":
        """Dense layout with ``s_k = prod(e_l for l < k)``."""
        strides, acc = [], 1
        for e in extents:
            strides.append(acc)
            acc *= int(e)
        return cls(tuple(extents), tuple(strides), dtype)

    def reach_bounds(self, base: int = 0) -> tuple[int, int]:
        """Inclusive (lowest, highest) element offset addressable from ``base``."""
        lo = hi = base
        for e, s in zip(self.extents, self.strides):
            span = s * (e - 1)
            lo += min(0, span)
            hi += max(0, span)
        return lo, hi


@dataclass(frozen=True, eq=False)
class TensorView:
    """A descriptor bound to flat element storage at an element offset.

    The buffer is a one-dimensional numpy array whose dtype matches the
    descriptor; the view grants no synchronization over it.
    """

    desc: TensorDesc
    buffer: np.ndarray
    base: int = 0

    def __post_init__(self):
        if self.buffer.ndim != 1:
            raise ValueError("tensor storage must be a flat 1-D buffer")


def element_offset(indices: Sequence[int], strides: Sequence[int]) -> int:
    """``sum(i_k * s_k)``; zero for empty index lists."""
    return sum(i * s for i, s in zip(indices, strides))


def odometer_increment(indices: list[int], extents: Sequence[int]) -> None:
    """Advance ``indices`` to the next multi-index in place.

    Position 0 moves fastest; each position wraps modulo its extent and
    carries into the next.  The all-max index wraps back to all-zero.
    """
    for k, e in enumerate(extents):
        indices[k] = (indices[k] + 1) % e
        if indices[k] != 0:
            return


def validate_view(view: TensorView) -> ErrorCode:
    """Check that every addressable offset lies inside the buffer."""
    lo, hi = view.desc.reach_bounds(view.base)
    if lo < 0 or hi >= view.buffer.shape[0]:
        return ErrorCode.ERR_OUT_OF_BOUNDS
    return ErrorCode.OK


def allocate_buffer(dtype: DType, length: int) -> np.ndarray:
    """Zero-filled flat storage for ``length`` elements of ``dtype``."""
    return np.zeros(max(length, 0), dtype=dtype.np_dtype)
