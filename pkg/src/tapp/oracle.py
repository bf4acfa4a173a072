"""Brute-force contraction evaluator used as conformance ground truth.

This module deliberately avoids the engine's grouped loop structure:
it walks one nested loop per distinct label over the full Cartesian
product of label values, collecting raw product terms per output cell,
and finally combines them with exactly rounded summation (``math.fsum``
componentwise).  Output-only labels are supported here (each product is
broadcast into every position along them) even though the engine
rejects them.  Agreement between the two paths is therefore evidence,
not tautology.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .core import DType, ScalarValue, TensorView, dtype_promote, round_to, validate_view
from .errors import ErrorCode, TappError
from .labels import LabelSpec

__all__ = ["DenseTensor", "densify", "oracle_contract"]


@dataclass(frozen=True)
class DenseTensor:
    """Column-major dense materialization of one tensor."""

    extents: tuple[int, ...]
    elements: tuple[float | complex, ...]
    dtype: DType

    def __post_init__(self):
        if len(self.elements) != math.prod(self.extents):
            raise TappError(
                ErrorCode.ERR_EXTENT_MISMATCH,
                "dense element count does not match the extents",
            )


def _first_fastest(extents) -> "itertools.product":
    """All multi-indices with the first position varying fastest."""
    rev = itertools.product(*[range(e) for e in reversed(extents)])
    return (idx[::-1] for idx in rev)


def _diagonal_weights(labels, strides) -> tuple[tuple[str, ...], list[int]]:
    """Distinct labels with per-label address weights; a repeated label
    accumulates the strides of every mode carrying it, so stepping the
    label steps all those modes together (the semi-diagonal)."""
    uniq: list[str] = []
    weights: list[int] = []
    for lbl, s in zip(labels, strides):
        if lbl in uniq:
            weights[uniq.index(lbl)] += s
        else:
            uniq.append(lbl)
            weights.append(s)
    return tuple(uniq), weights


def densify(view: TensorView, labels) -> tuple[DenseTensor, tuple[str, ...]]:
    """Materialize a strided view into dense column-major storage.

    Repeated labels are resolved by reading only the (semi-)diagonal
    elements; the returned label list is repeat-free.
    """
    labels = tuple(labels)
    if len(labels) != view.desc.nmodes:
        raise TappError(
            ErrorCode.ERR_EXTENT_MISMATCH,
            f"{len(labels)} labels for a tensor with {view.desc.nmodes} modes",
        )
    code = validate_view(view)
    if code is not ErrorCode.OK:
        raise TappError(code)
    uniq, weights = _diagonal_weights(labels, view.desc.strides)
    extents = []
    for lbl in uniq:
        ext = view.desc.extents[labels.index(lbl)]
        for k, other in enumerate(labels):
            if other == lbl and view.desc.extents[k] != ext:
                raise TappError(
                    ErrorCode.ERR_EXTENT_MISMATCH,
                    f"label {lbl!r} repeats with unequal extents",
                )
        extents.append(ext)
    buf = view.buffer.tolist()
    elements = tuple(
        buf[view.base + sum(i * w for i, w in zip(idx, weights))]
        for idx in _first_fastest(extents)
    )
    return DenseTensor(tuple(extents), elements, view.desc.dtype), uniq


def _exact_sum(values) -> float | complex:
    if any(isinstance(v, complex) for v in values):
        return complex(
            math.fsum(v.real for v in values), math.fsum(v.imag for v in values)
        )
    return math.fsum(values)


def oracle_contract(
    spec: LabelSpec,
    a: DenseTensor,
    b: DenseTensor,
    c: DenseTensor,
    alpha: ScalarValue | int | float | complex,
    beta: ScalarValue | int | float | complex,
    out_dtype: DType | None = None,
) -> DenseTensor:
    """Evaluate ``alpha * A B + beta * C`` over dense operands.

    Handles every label class, including output-only labels.  When
    ``alpha`` (``beta``) is exactly zero the inputs (C) are never read.
    """
    al = ScalarValue.of(alpha).value
    be = ScalarValue.of(beta).value

    extent_of: dict[str, int] = {}
    for labels, dense, what in (
        (spec.labels_a, a, "A"),
        (spec.labels_b, b, "B"),
        (spec.labels_c, c, "C"),
    ):
        if len(labels) != len(dense.extents):
            raise TappError(
                ErrorCode.ERR_EXTENT_MISMATCH,
                f"{what}: {len(labels)} labels for {len(dense.extents)} modes",
            )
        for lbl, ext in zip(labels, dense.extents):
            if extent_of.setdefault(lbl, ext) != ext:
                raise TappError(
                    ErrorCode.ERR_EXTENT_MISMATCH,
                    f"label {lbl!r} has extents {extent_of[lbl]} and {ext}",
                )
    if spec.labels_c != spec.labels_d:
        raise TappError(
            ErrorCode.ERR_EXTENT_MISMATCH, "C and D label lists differ"
        )

    out_extents = tuple(extent_of[l] for l in spec.labels_d)
    out_size = math.prod(out_extents)
    if out_dtype is None:
        out_dtype = dtype_promote(dtype_promote(a.dtype, b.dtype), c.dtype)

    # Column-major address weights per distinct label and tensor.
    def colmajor(extents):
        strides, acc = [], 1
        for e in extents:
            strides.append(acc)
            acc *= e
        return strides

    def weight_map(labels, extents):
        uniq, weights = _diagonal_weights(labels, colmajor(extents))
        return dict(zip(uniq, weights))

    ua = weight_map(spec.labels_a, a.extents)
    ub = weight_map(spec.labels_b, b.extents)
    ud = weight_map(spec.labels_d, out_extents)

    ordered: list[str] = []
    for lbl in (*spec.labels_d, *spec.labels_a, *spec.labels_b):
        if lbl not in ordered:
            ordered.append(lbl)

    terms: list[list] = [[] for _ in range(out_size)]
    if al != 0:
        abuf, bbuf = a.elements, b.elements
        steps = [
            (extent_of[l], ua.get(l, 0), ub.get(l, 0), ud.get(l, 0)) for l in ordered
        ]

        def walk(depth: int, pa: int, pb: int, pd: int) -> None:
            if depth == len(steps):
                terms[pd].append(abuf[pa] * bbuf[pb])
                return
            ext, sa, sb, sd = steps[depth]
            for v in range(ext):
                walk(depth + 1, pa + v * sa, pb + v * sb, pd + v * sd)

        walk(0, 0, 0, 0)

    out = []
    for i in range(out_size):
        v = al * _exact_sum(terms[i]) if al != 0 else 0.0
        if be != 0:
            v = v + be * c.elements[i]
        out.append(round_to(v, out_dtype))
    return DenseTensor(out_extents, tuple(out), out_dtype)
