import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tapp import (
    DType,
    ScalarValue,
    TappError,
    TensorDesc,
    TensorView,
    dtype_promote,
    element_offset,
    odometer_increment,
    validate_view,
)
from tapp.errors import ErrorCode

ALL_DTYPES = list(DType)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (DType.R32, DType.R32, DType.R32),
        (DType.R32, DType.C64, DType.C64),
        (DType.R64, DType.C32, DType.C64),
        (DType.C32, DType.C32, DType.C32),
        (DType.R32, DType.R64, DType.R64),
    ],
)
def test_dtype_promote(a, b, expected):
    assert dtype_promote(a, b) is expected


def test_dtype_promote_is_a_semilattice():
    for a in ALL_DTYPES:
        assert dtype_promote(a, a) is a
        for b in ALL_DTYPES:
            assert dtype_promote(a, b) is dtype_promote(b, a)
            for c in ALL_DTYPES:
                assert dtype_promote(a, dtype_promote(b, c)) is dtype_promote(
                    dtype_promote(a, b), c
                )


@pytest.mark.parametrize(
    "indices, strides, expected",
    [
        ([0, 0], [1, 4], 0),
        ([2, 1], [1, 4], 6),
        ([1, 2], [-1, 3], 5),
        ([], [], 0),
    ],
)
def test_element_offset(indices, strides, expected):
    assert element_offset(indices, strides) == expected


@given(
    st.integers(0, 5).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, 50), min_size=n, max_size=n),
            st.lists(st.integers(0, 50), min_size=n, max_size=n),
            st.lists(st.integers(-20, 20), min_size=n, max_size=n),
        )
    )
)
def test_element_offset_is_linear(args):
    i, j, s = args
    both = [x + y for x, y in zip(i, j)]
    assert element_offset(both, s) == element_offset(i, s) + element_offset(j, s)


@pytest.mark.parametrize(
    "start, extents, expected",
    [
        ([0, 0], [2, 3], [1, 0]),
        ([1, 0], [2, 3], [0, 1]),
        ([1, 2], [2, 3], [0, 0]),
    ],
)
def test_odometer_increment(start, extents, expected):
    odometer_increment(start, extents)
    assert start == expected


@given(st.lists(st.integers(1, 4), min_size=0, max_size=4))
def test_odometer_covers_every_index_once(extents):
    idx = [0] * len(extents)
    seen = set()
    for _ in range(math.prod(extents)):
        seen.add(tuple(idx))
        odometer_increment(idx, extents)
    assert len(seen) == math.prod(extents)
    assert idx == [0] * len(extents)


def _view(extents, strides, base, length):
    desc = TensorDesc(tuple(extents), tuple(strides), DType.R64)
    return TensorView(desc, np.zeros(length), base)


@pytest.mark.parametrize(
    "extents, strides, base, length, expected",
    [
        ([2, 2], [1, 2], 0, 4, ErrorCode.OK),
        ([2], [-1], 0, 2, ErrorCode.ERR_OUT_OF_BOUNDS),
        ([2], [-1], 1, 2, ErrorCode.OK),
        ([], [], 0, 1, ErrorCode.OK),
        ([3], [1], 0, 2, ErrorCode.ERR_OUT_OF_BOUNDS),
    ],
)
def test_validate_view(extents, strides, base, length, expected):
    assert validate_view(_view(extents, strides, base, length)) is expected


@given(st.lists(st.integers(1, 4), min_size=1, max_size=4))
def test_validate_view_dense_column_major(extents):
    desc = TensorDesc.column_major(extents, DType.R64)
    size = math.prod(extents)
    assert validate_view(TensorView(desc, np.zeros(size))) is ErrorCode.OK
    if size > 1:
        short = TensorView(desc, np.zeros(size - 1))
        assert validate_view(short) is ErrorCode.ERR_OUT_OF_BOUNDS


def test_column_major_strides():
    desc = TensorDesc.column_major([2, 3, 4], DType.R32)
    assert desc.strides == (1, 2, 6)


def test_desc_rejects_bad_shapes():
    with pytest.raises(TappError) as err:
        TensorDesc((2, 0), (1, 2), DType.R64)
    assert err.value.code is ErrorCode.ERR_EXTENT_MISMATCH
    with pytest.raises(TappError):
        TensorDesc((2,), (1, 2), DType.R64)


def test_scalar_real_rejects_imaginary():
    with pytest.raises(TappError) as err:
        ScalarValue(DType.R64, 1.0, 0.5)
    assert err.value.code is ErrorCode.ERR_DTYPE_MISMATCH


def test_scalar_arithmetic_promotes():
    a = ScalarValue(DType.R32, 1.5)
    b = ScalarValue(DType.C64, 2.0, -1.0)
    total = a + b
    assert total.dtype is DType.C64
    assert total.value == complex(3.5, -1.0)
    prod = a * b
    assert prod.dtype is DType.C64
    assert prod.value == complex(3.0, -1.5)
    assert a.scale(2.0).value == 3.0
    assert ScalarValue.of(2 + 0j).dtype is DType.R64
    assert ScalarValue.of(1j).dtype is DType.C64
