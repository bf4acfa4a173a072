import math
import random

import numpy as np
import pytest

from tapp import (
    DType,
    LabelSpec,
    ScalarValue,
    TappError,
    TensorDesc,
    TensorView,
    binary_op,
    contract,
    densify,
    make_plan,
    oracle_contract,
    parse_einsum,
    unary_op,
)
from tapp.errors import ErrorCode


def view(extents, data=None, dtype=DType.R64, strides=None, base=0, length=None):
    if strides is None:
        desc = TensorDesc.column_major(tuple(extents), dtype)
    else:
        desc = TensorDesc(tuple(extents), tuple(strides), dtype)
    if data is None:
        lo, hi = desc.reach_bounds(base)
        buf = np.zeros(length if length is not None else hi + 1, dtype=dtype.np_dtype)
    else:
        buf = np.array(data, dtype=dtype.np_dtype)
    return TensorView(desc, buf, base)


def run(einsum, a, b, c=None, d=None, alpha=1.0, beta=0.0, compute_dtype=None):
    spec = parse_einsum(einsum)
    if d is None:
        extent_of = {}
        for labels, v in ((spec.labels_a, a), (spec.labels_b, b)):
            for lbl, e in zip(labels, v.desc.extents):
                extent_of[lbl] = e
        d = view([extent_of[l] for l in spec.labels_d])
    if c is None:
        c = view(d.desc.extents, dtype=d.desc.dtype)
    plan = make_plan(spec, a.desc, b.desc, c.desc, d.desc, compute_dtype)
    status = contract(plan, alpha, a, b, beta, c, d)
    return d, status


def test_matmul_against_identity():
    a = view([2, 2], [1, 2, 3, 4], strides=[2, 1])
    eye = view([2, 2], [1, 0, 0, 1])
    d, _ = run("ij,jk->ik", a, eye)
    assert d.buffer.tolist() == [1, 3, 2, 4]  # column-major [[1,2],[3,4]]


def test_matmul_fixture():
    a = view([2, 2], [1, 2, 3, 4], strides=[2, 1])
    b = view([2, 2], [5, 6, 7, 8], strides=[2, 1])
    d = view([2, 2], strides=[2, 1])
    d, status = run("ij,jk->ik", a, b, d=d)
    assert d.buffer.tolist() == [19, 22, 43, 50]
    assert status.elements_written == 4
    assert status.multiply_adds == 8


def test_dot_product_with_update():
    a = view([3], [1, 2, 3])
    b = view([3], [4, 5, 6])
    c = view([], [10.0])
    d, _ = run("i,i->", a, b, c=c, alpha=2.0, beta=1.0)
    assert d.buffer.tolist() == [74.0]


def test_alpha_zero_never_reads_inputs():
    a = view([2], [np.nan, np.nan])
    b = view([2], [np.nan, np.nan])
    c = view([2], [3.0, 4.0])
    d, _ = run("i,i->i", a, b, c=c, alpha=0.0, beta=1.0)
    assert d.buffer.tolist() == [3.0, 4.0]


def test_beta_zero_never_reads_c():
    a = view([2], [1.0, 2.0])
    b = view([2], [3.0, 4.0])
    c = view([2], [np.nan, np.nan])
    d, _ = run("i,i->i", a, b, c=c, alpha=1.0, beta=0.0)
    assert d.buffer.tolist() == [3.0, 8.0]


def test_plan_loop_sizes():
    spec = parse_einsum("ijk,jlk->il")
    plan = make_plan(
        spec,
        TensorDesc.column_major([2, 3, 4], DType.R64),
        TensorDesc.column_major([3, 5, 4], DType.R64),
        TensorDesc.column_major([2, 5], DType.R64),
        TensorDesc.column_major([2, 5], DType.R64),
    )
    assert plan.size_contracted == 12
    assert plan.size_free_a == 2
    assert plan.size_free_b == 5
    assert plan.size_batch == 1
    assert plan.compute_dtype is DType.R64


def _plan_error(einsum, descs, **kwargs):
    with pytest.raises(TappError) as err:
        make_plan(parse_einsum(einsum), *descs, **kwargs)
    return err.value.code


def test_plan_rejects_extent_mismatch():
    code = _plan_error(
        "ij,jk->ik",
        (
            TensorDesc.column_major([2, 3], DType.R64),
            TensorDesc.column_major([4, 5], DType.R64),
            TensorDesc.column_major([2, 5], DType.R64),
            TensorDesc.column_major([2, 5], DType.R64),
        ),
    )
    assert code is ErrorCode.ERR_EXTENT_MISMATCH


def test_plan_rejects_aliased_output():
    code = _plan_error(
        "i,i->i",
        (
            TensorDesc.column_major([2], DType.R64),
            TensorDesc.column_major([2], DType.R64),
            TensorDesc.column_major([2], DType.R64),
            TensorDesc((2,), (0,), DType.R64),
        ),
    )
    assert code is ErrorCode.ERR_ALIASING


def test_plan_rejects_output_only_labels():
    code = _plan_error(
        "i,j->ijk",
        (
            TensorDesc.column_major([2], DType.R64),
            TensorDesc.column_major([2], DType.R64),
            TensorDesc.column_major([2, 2, 2], DType.R64),
            TensorDesc.column_major([2, 2, 2], DType.R64),
        ),
    )
    assert code is ErrorCode.ERR_UNSUPPORTED


def test_plan_rejects_c_label_order_mismatch():
    spec = LabelSpec.of(("i", "j"), ("j", "k"), ("i", "k"), labels_c=("k", "i"))
    with pytest.raises(TappError) as err:
        make_plan(
            spec,
            TensorDesc.column_major([2, 3], DType.R64),
            TensorDesc.column_major([3, 2], DType.R64),
            TensorDesc.column_major([2, 2], DType.R64),
            TensorDesc.column_major([2, 2], DType.R64),
        )
    assert err.value.code is ErrorCode.ERR_OUTPUT_MISMATCH


def test_plan_rejects_narrower_compute_dtype():
    descs = [TensorDesc.column_major([2], DType.R64)] * 4
    with pytest.raises(TappError) as err:
        make_plan(parse_einsum("i,i->i"), *descs, compute_dtype=DType.R32)
    assert err.value.code is ErrorCode.ERR_DTYPE_MISMATCH
    plan = make_plan(parse_einsum("i,i->i"), *descs, compute_dtype=DType.C64)
    assert plan.compute_dtype is DType.C64


def test_contract_rejects_complex_scalar_on_real_operands():
    a = view([2], [1.0, 2.0])
    with pytest.raises(TappError) as err:
        run("i,i->i", a, a, alpha=ScalarValue(DType.C64, 1.0, 2.0))
    assert err.value.code is ErrorCode.ERR_DTYPE_MISMATCH
    # A zero imaginary part degrades gracefully to the real value.
    d, _ = run("i,i->i", a, a, alpha=ScalarValue(DType.C64, 2.0, 0.0))
    assert d.buffer.tolist() == [2.0, 8.0]


def test_contract_rejects_wrong_buffer_dtype():
    a = view([2], [1.0, 2.0])
    bad = TensorView(a.desc, np.zeros(2, dtype=np.float32))
    plan = make_plan(parse_einsum("i,i->i"), a.desc, a.desc, a.desc, a.desc)
    with pytest.raises(TappError) as err:
        contract(plan, 1.0, a, bad, 0.0, a, view([2]))
    assert err.value.code is ErrorCode.ERR_DTYPE_MISMATCH


def test_contract_rejects_view_escaping_buffer():
    a = view([2], [1.0, 2.0])
    short = TensorView(a.desc, np.zeros(1))
    plan = make_plan(parse_einsum("i,i->i"), a.desc, a.desc, a.desc, a.desc)
    with pytest.raises(TappError) as err:
        contract(plan, 1.0, a, a, 0.0, a, short)
    assert err.value.code is ErrorCode.ERR_OUT_OF_BOUNDS


def test_in_place_update_is_allowed():
    a = view([2], [1.0, 2.0])
    b = view([2], [3.0, 4.0])
    cd = view([2], [10.0, 20.0])
    d, _ = run("i,i->i", a, b, c=cd, d=cd, alpha=1.0, beta=1.0)
    assert d.buffer.tolist() == [13.0, 28.0]


def test_output_overlapping_an_input_is_rejected():
    buf = np.array([1.0, 2.0, 3.0, 4.0])
    desc = TensorDesc.column_major([2], DType.R64)
    a = TensorView(desc, buf, 0)
    d = TensorView(desc, buf, 1)  # overlaps a
    plan = make_plan(parse_einsum("i,i->i"), desc, desc, desc, desc)
    with pytest.raises(TappError) as err:
        contract(plan, 1.0, a, view([2], [1, 1]), 0.0, view([2]), d)
    assert err.value.code is ErrorCode.ERR_ALIASING


def test_partially_overlapping_c_and_d_are_rejected():
    buf = np.zeros(4)
    desc = TensorDesc.column_major([2], DType.R64)
    c = TensorView(desc, buf, 0)
    d = TensorView(desc, buf, 1)
    plan = make_plan(parse_einsum("i,i->i"), desc, desc, desc, desc)
    with pytest.raises(TappError) as err:
        contract(plan, 1.0, view([2], [1, 1]), view([2], [1, 1]), 1.0, c, d)
    assert err.value.code is ErrorCode.ERR_ALIASING


def test_mixed_dtype_promotion_and_cast():
    a = view([2], [1.5, 2.5], dtype=DType.R32)
    b = view([2], [1j, 1j], dtype=DType.C64)
    spec = parse_einsum("i,i->i")
    d = view([2], dtype=DType.C64)
    c = view([2], dtype=DType.C64)
    plan = make_plan(spec, a.desc, b.desc, c.desc, d.desc)
    assert plan.compute_dtype is DType.C64
    contract(plan, 1.0, a, b, 0.0, c, d)
    assert d.buffer.tolist() == [1.5j, 2.5j]


def test_guard_bands_stay_untouched():
    pad = 3
    buf = np.full(4 + 2 * pad, 7.0)
    desc = TensorDesc.column_major([2, 2], DType.R64)
    d = TensorView(desc, buf, pad)
    a = view([2, 2], [1, 2, 3, 4])
    b = view([2, 2], [1, 0, 0, 1])
    plan = make_plan(parse_einsum("ij,jk->ik"), a.desc, b.desc, desc, desc)
    contract(plan, 1.0, a, b, 0.0, view([2, 2]), d)
    assert buf[:pad].tolist() == [7.0] * pad
    assert buf[4 + pad:].tolist() == [7.0] * pad
    assert buf[pad:4 + pad].tolist() == [1, 2, 3, 4]


def test_binary_elementwise_add():
    status_target = view([2])
    binary_op(1.0, view([2], [1, 2]), "i", 1.0, view([2], [3, 4]), "i", status_target, "i")
    assert status_target.buffer.tolist() == [4.0, 6.0]


def test_binary_reduction():
    a = view([2, 2], [1, 2, 3, 4], strides=[2, 1])  # rows are i
    out = view([2])
    binary_op(1.0, a, "ij", 0.0, view([2]), "i", out, "i")
    assert out.buffer.tolist() == [3.0, 7.0]


def test_binary_broadcast_scalar():
    out = view([2])
    binary_op(1.0, view([], [5.0]), "", 1.0, view([2], [1, 2]), "i", out, "i")
    assert out.buffer.tolist() == [6.0, 7.0]


def test_binary_rejects_label_mismatch():
    with pytest.raises(TappError) as err:
        binary_op(1.0, view([2], [1, 2]), "i", 1.0, view([2], [3, 4]), "i", view([2]), "j")
    assert err.value.code is ErrorCode.ERR_OUTPUT_MISMATCH


def test_unary_transpose():
    a = view([2, 2], [1, 2, 3, 4], strides=[2, 1])  # [[1,2],[3,4]]
    out = view([2, 2])
    unary_op(1.0, a, "ij", out, "ji")
    # out[j,i] == a[i,j]; column-major buffer order (j fastest)
    assert out.buffer.tolist() == [1.0, 2.0, 3.0, 4.0]


def test_unary_diagonal():
    a = view([2, 2], [1, 2, 3, 4], strides=[2, 1])
    out = view([2])
    unary_op(1.0, a, "ii", out, "i")
    assert out.buffer.tolist() == [1.0, 4.0]


def test_unary_reduce_and_scale():
    out = view([])
    unary_op(2.0, view([3], [1, 2, 3]), "i", out, "")
    assert out.buffer.tolist() == [12.0]


def test_unary_rejects_output_only_label():
    with pytest.raises(TappError) as err:
        unary_op(1.0, view([2], [1, 2]), "i", view([2, 2]), "ij")
    assert err.value.code is ErrorCode.ERR_UNSUPPORTED


def test_repeated_executions_are_identical():
    rng = random.Random(5)
    a = view([3, 3], [rng.uniform(-1, 1) for _ in range(9)])
    b = view([3, 3], [rng.uniform(-1, 1) for _ in range(9)])
    plan = make_plan(parse_einsum("ij,jk->ik"), a.desc, b.desc, a.desc, a.desc)
    d1, d2 = view([3, 3]), view([3, 3])
    contract(plan, 1.25, a, b, 0.0, view([3, 3]), d1)
    contract(plan, 1.25, a, b, 0.0, view([3, 3]), d2)
    assert d1.buffer.tolist() == d2.buffer.tolist()


# ---------------------------------------------------------------------------
# Randomized equivalence against the brute-force evaluator.


def _random_structure(rng):
    pool = iter("abcdefgh")
    groups = {
        "batch": [next(pool) for _ in range(rng.randint(0, 1))],
        "contracted": [next(pool) for _ in range(rng.randint(0, 2))],
        "free_a": [next(pool) for _ in range(rng.randint(0, 2))],
        "free_b": [next(pool) for _ in range(rng.randint(0, 1))],
        "reduced_a": [next(pool) for _ in range(rng.randint(0, 1))],
        "reduced_b": [next(pool) for _ in range(rng.randint(0, 1))],
    }
    labels_a = groups["batch"] + groups["contracted"] + groups["free_a"] + groups["reduced_a"]
    labels_b = groups["batch"] + groups["contracted"] + groups["free_b"] + groups["reduced_b"]
    labels_d = groups["batch"] + groups["free_a"] + groups["free_b"]
    rng.shuffle(labels_a)
    rng.shuffle(labels_b)
    rng.shuffle(labels_d)
    extents = {l: rng.randint(1, 4) for v in groups.values() for l in v}
    return labels_a[:4], labels_b[:4], labels_d, extents


def _dense_random(rng, labels, extents):
    shape = [extents[l] for l in labels]
    return view(shape, [rng.uniform(-1, 1) for _ in range(math.prod(shape))])


def test_engine_matches_oracle_on_random_cases():
    rng = random.Random(2024)
    checked = 0
    for _ in range(150):
        labels_a, labels_b, labels_d, extents = _random_structure(rng)
        used = set(labels_a) | set(labels_b)
        labels_d = [l for l in labels_d if l in used]
        a = _dense_random(rng, labels_a, extents)
        b = _dense_random(rng, labels_b, extents)
        c = _dense_random(rng, labels_d, extents)
        d = view([extents[l] for l in labels_d])
        einsum = "".join(labels_a) + "," + "".join(labels_b) + "->" + "".join(labels_d)
        alpha, beta = rng.uniform(-1, 1), rng.uniform(-1, 1)
        plan = make_plan(parse_einsum(einsum), a.desc, b.desc, c.desc, d.desc)
        contract(plan, alpha, a, b, beta, c, d)

        dense_a, ua = densify(a, labels_a)
        dense_b, ub = densify(b, labels_b)
        dense_c, uc = densify(c, labels_d)
        expected = oracle_contract(
            LabelSpec.of(ua, ub, tuple(labels_d), uc), dense_a, dense_b, dense_c,
            alpha, beta,
        )
        for got, want in zip(d.buffer.tolist(), expected.elements):
            assert abs(got - want) / max(abs(want), 1.0) <= 1e-12
        checked += 1
    assert checked == 150


def test_linearity_in_alpha():
    rng = random.Random(7)
    a = _dense_random(rng, "ij", {"i": 3, "j": 4})
    b = _dense_random(rng, "jk", {"j": 4, "k": 2})
    c = _dense_random(rng, "ik", {"i": 3, "k": 2})
    spec = parse_einsum("ij,jk->ik")

    def apply(alpha, c_view):
        d = view([3, 2])
        plan = make_plan(spec, a.desc, b.desc, c_view.desc, d.desc)
        contract(plan, alpha, a, b, 1.0, c_view, d)
        return d

    combined = apply(0.7 + 0.6, c)
    staged = apply(0.7, apply(0.6, c))
    for x, y in zip(combined.buffer.tolist(), staged.buffer.tolist()):
        assert abs(x - y) / max(abs(y), 1.0) <= 1e-12


def test_permuting_a_modes_preserves_result_within_tolerance():
    rng = random.Random(11)
    a = _dense_random(rng, "ijp", {"i": 3, "j": 2, "p": 4})
    b = _dense_random(rng, "jp", {"j": 2, "p": 4})
    d1 = view([3])
    plan = make_plan(
        parse_einsum("ijp,jp->i"), a.desc, b.desc, d1.desc, d1.desc
    )
    contract(plan, 1.0, a, b, 0.0, view([3]), d1)

    perm = [2, 0, 1]
    a_perm = TensorView(
        TensorDesc(
            tuple(a.desc.extents[k] for k in perm),
            tuple(a.desc.strides[k] for k in perm),
            DType.R64,
        ),
        a.buffer,
    )
    d2 = view([3])
    plan2 = make_plan(
        parse_einsum("pij,jp->i"), a_perm.desc, b.desc, d2.desc, d2.desc
    )
    contract(plan2, 1.0, a_perm, b, 0.0, view([3]), d2)
    for x, y in zip(d1.buffer.tolist(), d2.buffer.tolist()):
        assert abs(x - y) / max(abs(y), 1.0) <= 1e-12
