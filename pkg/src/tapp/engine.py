"""Strided contraction engine.

Executes the ternary update ``D := alpha * A B + beta * C`` over
general strided views, plus the analogous binary (``C := alpha*A +
beta*B``) and unary (``B := alpha*A``) operations.

A validated, immutable plan is built once per operation shape.  Plan
creation merges repeated labels (summing their strides), classifies the
distinct labels into groups, checks extent consistency, verifies that C
matches D, rejects output-only labels, and proves the output
address map injective by full enumeration.  Execution then walks four
nested index loops -- batch, free-of-A, free-of-B outside, contracted
inside -- in reverse-lexicographic (first label fastest) order, with
optional inner reductions over input-only labels accumulated before
each multiplication.  Offsets for each loop level are precomputed per
tensor, so a loop body only adds deltas to running base offsets.

Arithmetic happens in the plan's compute dtype (each operation result
is rounded to that precision) and each output element is cast to D's
dtype exactly once, after accumulation.  Following BLAS convention,
``beta == 0`` means C is never read and ``alpha == 0`` means A and B
are never read.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Sequence

from .core import (
    DType,
    ScalarValue,
    TensorDesc,
    TensorView,
    compute_rounder,
    dtype_promote,
    element_offset,
    odometer_increment,
    round_to,
    validate_view,
)
from .errors import ErrorCode, TappError
from .labels import ClassifiedLabels, LabelSpec, MergedTensorLabels, classify, merge_repeats

__all__ = [
    "StatusRecord",
    "ContractionPlan",
    "BinaryPlan",
    "UnaryPlan",
    "make_plan",
    "contract",
    "make_binary_plan",
    "binary_op",
    "run_binary",
    "make_unary_plan",
    "unary_op",
    "run_unary",
]


@dataclass
class StatusRecord:
    """Execution metadata.

    ``multiply_adds`` counts products of (possibly pre-reduced) input
    values accumulated into outputs; it is exact for the loops actually
    executed, i.e. zero when ``alpha == 0``.
    """

    seconds_elapsed: float = 0.0
    elements_written: int = 0
    multiply_adds: int = 0
    error: ErrorCode = ErrorCode.OK
    executor: object | None = None


def _offset_table(
    extents: Sequence[int], *stride_vectors: Sequence[int]
) -> tuple[tuple[int, ...], ...]:
    """Per-tensor offsets for every multi-index of a label group, in
    odometer order.  The empty group yields a single all-zero entry."""
    idx = [0] * len(extents)
    rows = []
    for _ in range(math.prod(extents)):
        rows.append(tuple(element_offset(idx, sv) for sv in stride_vectors))
        odometer_increment(idx, extents)
    return tuple(rows)


def _check_output_addresses_injective(merged: MergedTensorLabels) -> None:
    seen: set[int] = set()
    idx = [0] * len(merged.extents)
    for _ in range(math.prod(merged.extents)):
        off = element_offset(idx, merged.strides)
        if off in seen:
            raise TappError(
                ErrorCode.ERR_ALIASING,
                "two output element indices map to one address",
            )
        seen.add(off)
        odometer_increment(idx, merged.extents)


@dataclass(frozen=True)
class ContractionPlan:
    """Immutable preprocessed form of one ternary contraction."""

    spec: LabelSpec
    desc_a: TensorDesc
    desc_b: TensorDesc
    desc_c: TensorDesc
    desc_d: TensorDesc
    classified: ClassifiedLabels
    compute_dtype: DType
    # Offset deltas per loop level, one row per multi-index.
    table_batch: tuple[tuple[int, int, int, int], ...] = field(repr=False)
    table_free_a: tuple[tuple[int, int, int, int], ...] = field(repr=False)
    table_free_b: tuple[tuple[int, int, int, int], ...] = field(repr=False)
    table_contracted: tuple[tuple[int, int], ...] = field(repr=False)
    table_reduced_a: tuple[int, ...] = field(repr=False)
    table_reduced_b: tuple[int, ...] = field(repr=False)

    @property
    def size_batch(self) -> int:
        return self.classified.batch.size

    @property
    def size_free_a(self) -> int:
        return self.classified.free_a.size

    @property
    def size_free_b(self) -> int:
        return self.classified.free_b.size

    @property
    def size_contracted(self) -> int:
        return self.classified.contracted.size

    @property
    def size_reduced_a(self) -> int:
        return self.classified.reduced_a.size

    @property
    def size_reduced_b(self) -> int:
        return self.classified.reduced_b.size

    @property
    def output_size(self) -> int:
        return self.size_batch * self.size_free_a * self.size_free_b


def _resolve_compute_dtype(requested: DType | None, *operands: DType) -> DType:
    promoted = operands[0]
    for dt in operands[1:]:
        promoted = dtype_promote(promoted, dt)
    if requested is None:
        return promoted
    if dtype_promote(requested, promoted) is not requested:
        raise TappError(
            ErrorCode.ERR_DTYPE_MISMATCH,
            "compute dtype narrower than the operand promotion",
        )
    return requested


def make_plan(
    spec: LabelSpec,
    desc_a: TensorDesc,
    desc_b: TensorDesc,
    desc_c: TensorDesc,
    desc_d: TensorDesc,
    compute_dtype: DType | None = None,
) -> ContractionPlan:
    """Validate and preprocess one contraction; raises TappError.

    Checks run in a fixed order: label counts, per-tensor repeated-label
    merging, cross-tensor extent consistency, C-matches-D, rejection of
    output-only labels, output address injectivity.
    """
    merged_a = merge_repeats(spec.labels_a, desc_a)
    merged_b = merge_repeats(spec.labels_b, desc_b)
    merged_d = merge_repeats(spec.labels_d, desc_d)
    classified = classify(merged_a, merged_b, merged_d)

    if spec.labels_c != spec.labels_d or desc_c.extents != desc_d.extents:
        raise TappError(
            ErrorCode.ERR_OUTPUT_MISMATCH,
            "C must carry D's labels, in order, with equal extents",
        )
    merged_c = merge_repeats(spec.labels_c, desc_c)

    if classified.broadcast_out.labels:
        raise TappError(
            ErrorCode.ERR_UNSUPPORTED,
            f"output-only labels {classified.broadcast_out.labels} are not supported",
        )
    _check_output_addresses_injective(merged_d)

    cdt = _resolve_compute_dtype(
        compute_dtype, desc_a.dtype, desc_b.dtype, desc_c.dtype, desc_d.dtype
    )

    def d_side_table(group):
        strides_c = tuple(merged_c.stride_of(l) for l in group.labels)
        return _offset_table(
            group.extents, group.strides_a, group.strides_b, strides_c, group.strides_d
        )

    return ContractionPlan(
        spec=spec,
        desc_a=desc_a,
        desc_b=desc_b,
        desc_c=desc_c,
        desc_d=desc_d,
        classified=classified,
        compute_dtype=cdt,
        table_batch=d_side_table(classified.batch),
        table_free_a=d_side_table(classified.free_a),
        table_free_b=d_side_table(classified.free_b),
        table_contracted=_offset_table(
            classified.contracted.extents,
            classified.contracted.strides_a,
            classified.contracted.strides_b,
        ),
        table_reduced_a=tuple(
            row[0]
            for row in _offset_table(
                classified.reduced_a.extents, classified.reduced_a.strides_a
            )
        ),
        table_reduced_b=tuple(
            row[0]
            for row in _offset_table(
                classified.reduced_b.extents, classified.reduced_b.strides_b
            )
        ),
    )


def _buffer_anchor(view: TensorView) -> int:
    return (
        view.buffer.__array_interface__["data"][0]
        + view.base * view.buffer.itemsize
    )


def _byte_range(view: TensorView) -> tuple[int, int]:
    lo, hi = view.desc.reach_bounds(view.base)
    start = view.buffer.__array_interface__["data"][0]
    item = view.buffer.itemsize
    return start + lo * item, start + hi * item


def _overlaps(r1: tuple[int, int], r2: tuple[int, int]) -> bool:
    return r1[0] <= r2[1] and r2[0] <= r1[1]


def _check_view(view: TensorView, desc: TensorDesc, name: str) -> None:
    if view.desc.dtype is not desc.dtype or view.buffer.dtype != desc.dtype.np_dtype:
        raise TappError(
            ErrorCode.ERR_DTYPE_MISMATCH, f"{name}: buffer dtype differs from plan"
        )
    if view.desc.extents != desc.extents or view.desc.strides != desc.strides:
        raise TappError(
            ErrorCode.ERR_OUT_OF_BOUNDS, f"{name}: view layout differs from plan"
        )
    code = validate_view(view)
    if code is not ErrorCode.OK:
        raise TappError(code, f"{name}: view escapes its buffer")


def _check_output_disjoint(
    out: TensorView, inputs: Sequence[tuple[TensorView, str]], in_place_with: TensorView | None
) -> None:
    """Reject detectable overlap between the output and any operand it
    is not explicitly allowed to alias (cheap interval comparison)."""
    out_range = _byte_range(out)
    for view, name in inputs:
        if in_place_with is not None and view is in_place_with:
            continue
        if _overlaps(out_range, _byte_range(view)):
            raise TappError(
                ErrorCode.ERR_ALIASING, f"output storage overlaps operand {name}"
            )


def _is_identical_view(x: TensorView, y: TensorView) -> bool:
    return x.desc == y.desc and _buffer_anchor(x) == _buffer_anchor(y)


def _scalar_for(value, compute_dtype: DType, name: str) -> float | complex:
    sv = ScalarValue.of(value)
    if sv.im != 0.0 and not compute_dtype.is_complex:
        raise TappError(
            ErrorCode.ERR_DTYPE_MISMATCH,
            f"{name} has a nonzero imaginary part but all operands are real",
        )
    v = sv.value
    if not compute_dtype.is_complex and isinstance(v, complex):
        v = v.real
    return round_to(v, compute_dtype)


def contract(
    plan: ContractionPlan,
    alpha: ScalarValue | int | float | complex,
    a: TensorView,
    b: TensorView,
    beta: ScalarValue | int | float | complex,
    c: TensorView,
    d: TensorView,
) -> StatusRecord:
    """Run the planned contraction over concrete views.

    C and D may be the identical view (in-place update); any other
    detectable overlap between D and an operand is rejected.
    """
    t0 = time.perf_counter()
    al = _scalar_for(alpha, plan.compute_dtype, "alpha")
    be = _scalar_for(beta, plan.compute_dtype, "beta")

    _check_view(a, plan.desc_a, "A")
    _check_view(b, plan.desc_b, "B")
    _check_view(c, plan.desc_c, "C")
    _check_view(d, plan.desc_d, "D")
    in_place = _is_identical_view(c, d)
    _check_output_disjoint(
        d, [(a, "A"), (b, "B"), (c, "C")], in_place_with=c if in_place else None
    )

    rnd = compute_rounder(plan.compute_dtype) or (lambda x: x)
    read_ab = al != 0
    read_c = be != 0
    abuf = a.buffer.tolist() if read_ab else None
    bbuf = b.buffer.tolist() if read_ab else None
    cbuf = c.buffer.tolist() if read_c else None
    dbuf = d.buffer
    d_complex = plan.desc_d.dtype.is_complex

    t_batch = plan.table_batch
    t_fa = plan.table_free_a
    t_fb = plan.table_free_b
    t_p = plan.table_contracted
    red_a0 = plan.table_reduced_a[0]
    red_a_rest = plan.table_reduced_a[1:]
    red_b0 = plan.table_reduced_b[0]
    red_b_rest = plan.table_reduced_b[1:]

    base_a, base_b, base_c, base_d = a.base, b.base, c.base, d.base
    for h_a, h_b, h_c, h_d in t_batch:
        ha = base_a + h_a
        hb = base_b + h_b
        hc = base_c + h_c
        hd = base_d + h_d
        for f_a, _, f_c, f_d in t_fa:
            ia = ha + f_a
            ic = hc + f_c
            idx_d = hd + f_d
            for _, g_b, g_c, g_d in t_fb:
                off_d = idx_d + g_d
                if read_ab:
                    jb = hb + g_b
                    acc = 0.0
                    for k_a, k_b in t_p:
                        pa = ia + k_a
                        av = abuf[pa + red_a0]
                        for m in red_a_rest:
                            av = rnd(av + abuf[pa + m])
                        pb = jb + k_b
                        bv = bbuf[pb + red_b0]
                        for m in red_b_rest:
                            bv = rnd(bv + bbuf[pb + m])
                        acc = rnd(acc + rnd(av * bv))
                    v = rnd(al * acc)
                else:
                    v = 0.0
                if read_c:
                    v = rnd(v + rnd(be * cbuf[ic + g_c]))
                if d_complex:
                    dbuf[off_d] = v
                else:
                    dbuf[off_d] = v.real if isinstance(v, complex) else v

    writes = len(t_batch) * len(t_fa) * len(t_fb)
    return StatusRecord(
        seconds_elapsed=time.perf_counter() - t0,
        elements_written=writes,
        multiply_adds=writes * len(t_p) if read_ab else 0,
    )


@dataclass(frozen=True)
class BinaryPlan:
    """Preprocessed form of ``C := alpha*A + beta*B`` (B's labels name C)."""

    labels_a: tuple[str, ...]
    labels_b: tuple[str, ...]
    labels_out: tuple[str, ...]
    desc_a: TensorDesc
    desc_b: TensorDesc
    desc_out: TensorDesc
    compute_dtype: DType
    table_out: tuple[tuple[int, int, int], ...] = field(repr=False)
    table_reduced_a: tuple[int, ...] = field(repr=False)


def make_binary_plan(
    labels_a: Sequence[str],
    desc_a: TensorDesc,
    labels_b: Sequence[str],
    desc_b: TensorDesc,
    labels_out: Sequence[str],
    desc_out: TensorDesc,
) -> BinaryPlan:
    labels_a = tuple(labels_a)
    labels_b = tuple(labels_b)
    labels_out = tuple(labels_out)
    merged_a = merge_repeats(labels_a, desc_a)
    merged_b = merge_repeats(labels_b, desc_b)
    merged_out = merge_repeats(labels_out, desc_out)
    classify(merged_a, merged_b, merged_out)  # cross-tensor extent check
    if labels_b != labels_out or desc_b.extents != desc_out.extents:
        raise TappError(
            ErrorCode.ERR_OUTPUT_MISMATCH,
            "binary output must carry B's labels, in order, with equal extents",
        )
    _check_output_addresses_injective(merged_out)
    stride_a = tuple(merged_a.stride_of(l) for l in merged_out.labels)
    return BinaryPlan(
        labels_a=labels_a,
        labels_b=labels_b,
        labels_out=labels_out,
        desc_a=desc_a,
        desc_b=desc_b,
        desc_out=desc_out,
        compute_dtype=_resolve_compute_dtype(
            None, desc_a.dtype, desc_b.dtype, desc_out.dtype
        ),
        table_out=_offset_table(
            merged_out.extents, stride_a, merged_b.strides, merged_out.strides
        ),
        table_reduced_a=tuple(
            row[0]
            for row in _offset_table(
                tuple(
                    e
                    for l, e in zip(merged_a.labels, merged_a.extents)
                    if l not in merged_out.labels
                ),
                tuple(
                    s
                    for l, s in zip(merged_a.labels, merged_a.strides)
                    if l not in merged_out.labels
                ),
            )
        ),
    )


def run_binary(
    plan: BinaryPlan,
    alpha: ScalarValue | int | float | complex,
    a: TensorView,
    beta: ScalarValue | int | float | complex,
    b: TensorView,
    out: TensorView,
) -> StatusRecord:
    t0 = time.perf_counter()
    al = _scalar_for(alpha, plan.compute_dtype, "alpha")
    be = _scalar_for(beta, plan.compute_dtype, "beta")
    _check_view(a, plan.desc_a, "A")
    _check_view(b, plan.desc_b, "B")
    _check_view(out, plan.desc_out, "C")
    in_place = _is_identical_view(b, out)
    _check_output_disjoint(
        out, [(a, "A"), (b, "B")], in_place_with=b if in_place else None
    )

    rnd = compute_rounder(plan.compute_dtype) or (lambda x: x)
    read_a = al != 0
    read_b = be != 0
    abuf = a.buffer.tolist() if read_a else None
    bbuf = b.buffer.tolist() if read_b else None
    obuf = out.buffer
    out_complex = plan.desc_out.dtype.is_complex
    red0 = plan.table_reduced_a[0]
    red_rest = plan.table_reduced_a[1:]

    for d_a, d_b, d_o in plan.table_out:
        if read_a:
            pa = a.base + d_a
            av = abuf[pa + red0]
            for m in red_rest:
                av = rnd(av + abuf[pa + m])
            v = rnd(al * av)
        else:
            v = 0.0
        if read_b:
            v = rnd(v + rnd(be * bbuf[b.base + d_b]))
        off = out.base + d_o
        if out_complex:
            obuf[off] = v
        else:
            obuf[off] = v.real if isinstance(v, complex) else v

    writes = len(plan.table_out)
    return StatusRecord(
        seconds_elapsed=time.perf_counter() - t0,
        elements_written=writes,
        multiply_adds=writes * (int(read_a) + int(read_b)),
    )


def binary_op(
    alpha,
    a: TensorView,
    labels_a: Sequence[str],
    beta,
    b: TensorView,
    labels_b: Sequence[str],
    out: TensorView,
    labels_out: Sequence[str],
) -> StatusRecord:
    """One-shot ``C := alpha*A + beta*B``; see :func:`make_binary_plan`."""
    plan = make_binary_plan(labels_a, a.desc, labels_b, b.desc, labels_out, out.desc)
    return run_binary(plan, alpha, a, beta, b, out)


@dataclass(frozen=True)
class UnaryPlan:
    """Preprocessed form of ``B := alpha*A`` with permutation, diagonal
    access (repeated labels in A) and reduction (labels dropped in B)."""

    labels_a: tuple[str, ...]
    labels_out: tuple[str, ...]
    desc_a: TensorDesc
    desc_out: TensorDesc
    compute_dtype: DType
    table_out: tuple[tuple[int, int], ...] = field(repr=False)
    table_reduced: tuple[int, ...] = field(repr=False)


def make_unary_plan(
    labels_a: Sequence[str],
    desc_a: TensorDesc,
    labels_out: Sequence[str],
    desc_out: TensorDesc,
) -> UnaryPlan:
    labels_a = tuple(labels_a)
    labels_out = tuple(labels_out)
    merged_a = merge_repeats(labels_a, desc_a)
    merged_out = merge_repeats(labels_out, desc_out)
    for lbl in merged_out.labels:
        if lbl not in merged_a.labels:
            raise TappError(
                ErrorCode.ERR_UNSUPPORTED,
                f"output-only label {lbl!r} is not supported",
            )
    for lbl, ext in zip(merged_out.labels, merged_out.extents):
        if merged_a.extents[merged_a.labels.index(lbl)] != ext:
            raise TappError(
                ErrorCode.ERR_EXTENT_MISMATCH,
                f"label {lbl!r} extents differ between input and output",
            )
    _check_output_addresses_injective(merged_out)
    stride_a = tuple(merged_a.stride_of(l) for l in merged_out.labels)
    reduced = [
        (e, s)
        for l, e, s in zip(merged_a.labels, merged_a.extents, merged_a.strides)
        if l not in merged_out.labels
    ]
    return UnaryPlan(
        labels_a=labels_a,
        labels_out=labels_out,
        desc_a=desc_a,
        desc_out=desc_out,
        compute_dtype=dtype_promote(desc_a.dtype, desc_out.dtype),
        table_out=_offset_table(merged_out.extents, stride_a, merged_out.strides),
        table_reduced=tuple(
            row[0]
            for row in _offset_table(
                tuple(e for e, _ in reduced), tuple(s for _, s in reduced)
            )
        ),
    )


def run_unary(
    plan: UnaryPlan,
    alpha: ScalarValue | int | float | complex,
    a: TensorView,
    out: TensorView,
) -> StatusRecord:
    t0 = time.perf_counter()
    al = _scalar_for(alpha, plan.compute_dtype, "alpha")
    _check_view(a, plan.desc_a, "A")
    _check_view(out, plan.desc_out, "B")
    in_place = _is_identical_view(a, out)
    _check_output_disjoint(out, [(a, "A")], in_place_with=a if in_place else None)

    rnd = compute_rounder(plan.compute_dtype) or (lambda x: x)
    read_a = al != 0
    abuf = a.buffer.tolist() if read_a else None
    obuf = out.buffer
    out_complex = plan.desc_out.dtype.is_complex
    red0 = plan.table_reduced[0]
    red_rest = plan.table_reduced[1:]

    for d_a, d_o in plan.table_out:
        if read_a:
            pa = a.base + d_a
            av = abuf[pa + red0]
            for m in red_rest:
                av = rnd(av + abuf[pa + m])
            v = rnd(al * av)
        else:
            v = 0.0
        off = out.base + d_o
        if out_complex:
            obuf[off] = v
        else:
            obuf[off] = v.real if isinstance(v, complex) else v

    writes = len(plan.table_out)
    return StatusRecord(
        seconds_elapsed=time.perf_counter() - t0,
        elements_written=writes,
        multiply_adds=writes if read_a else 0,
    )


def unary_op(
    alpha,
    a: TensorView,
    labels_a: Sequence[str],
    out: TensorView,
    labels_out: Sequence[str],
) -> StatusRecord:
    """One-shot ``B := alpha*A``; see :func:`make_unary_plan`."""
    plan = make_unary_plan(labels_a, a.desc, labels_out, out.desc)
    return run_unary(plan, alpha, a, out)
