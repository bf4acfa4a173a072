"""Conformance and execution command-line tool.

Subcommands:

* ``run <case.json>``    -- execute one contraction case, print D and
  the execution status as JSON, exit with the ErrorCode integer.
* ``gen <category>``     -- emit a reproducible random case exercising
  one of the 28 conformance categories.
* ``check <case.json>``  -- run the engine and the brute-force oracle
  on one case and compare them elementwise.
* ``suite``              -- generate and check seeded instances of all
  28 categories and emit a summary report.

A case file is a JSON object: ``einsum`` (``"<A>,<B>-><D>"``; C
implicitly carries D's labels), scalars ``alpha``/``beta`` (number or
``[re, im]`` pair), tensor entries ``a``, ``b``, optional ``c``
(default zero) with ``dtype``/``extents``/optional ``strides`` (default
column-major)/optional ``base``/``data`` (flat buffer content, complex
elements as ``[re, im]``), and ``d`` with the same layout fields but no
data.  Unknown keys are ignored.

Exit codes: 0 success, ErrorCode integers for library errors, 1 for a
numeric mismatch, 2 for usage errors.
"""

from __future__ import annotations

import argparse
import itertools
import json
import math
import random
import sys
from dataclasses import dataclass, field

import numpy as np

from .api import (
    StatusRecord,
    tapp_create_contraction,
    tapp_create_handle,
    tapp_create_tensor_info,
    tapp_destroy_handle,
    tapp_execute_product,
    tapp_get_default_executor,
)
from .core import DType, ScalarValue, TensorDesc, TensorView, allocate_buffer
from .errors import ErrorCode, TappError, error_string
from .labels import LabelSpec, parse_einsum
from .oracle import DenseTensor, densify, oracle_contract

__all__ = [
    "load_case",
    "execute_case",
    "oracle_case",
    "check_case",
    "generate_case",
    "run_suite",
    "main",
]

TOLERANCE_64 = 1e-12
TOLERANCE_32 = 1e-4

# Work budgets for generated cases: product of all distinct label
# extents, and of the summed-over (contracted plus input-only) ones.
# They keep suite runtimes and floating-point error well inside the
# comparison tolerances.
TOTAL_EXTENT_BUDGET = 2500
REDUCE_EXTENT_BUDGET = 128

EXPECTED_ERROR = {
    26: ErrorCode.ERR_EXTENT_MISMATCH,
    27: ErrorCode.ERR_OUTPUT_MISMATCH,
    28: ErrorCode.ERR_ALIASING,
}

CATEGORY_TITLES = {
    1: "pure elementwise product",
    2: "basic contractions",
    3: "commutativity under operand swap",
    4: "output label permutations",
    5: "uniform extents",
    6: "outer products",
    7: "fully contracted output",
    8: "zero-mode tensors",
    9: "one-mode tensors",
    10: "sub-tensor views, same mode count",
    11: "sub-tensor views, fewer modes",
    12: "negative strides",
    13: "negative-stride sub-tensors, same mode count",
    14: "negative-stride sub-tensors, fewer modes",
    15: "mixed-sign strides",
    16: "mixed-sign sub-tensors, same mode count",
    17: "mixed-sign sub-tensors, fewer modes",
    18: "double precision",
    19: "single-precision complex",
    20: "double-precision complex",
    21: "zero stride in an input",
    22: "input-only labels (reductions)",
    23: "repeated labels",
    24: "elementwise product with free labels",
    25: "elementwise product with contracted labels",
    26: "error: extent mismatch",
    27: "error: C does not match D",
    28: "error: aliasing within D",
}


# ---------------------------------------------------------------------------
# Case parsing


def _parse_scalar(raw) -> ScalarValue:
    if isinstance(raw, (int, float)):
        return ScalarValue(DType.R64, float(raw))
    if (
        isinstance(raw, (list, tuple))
        and len(raw) == 2
        and all(isinstance(x, (int, float)) for x in raw)
    ):
        if raw[1] == 0:
            return ScalarValue(DType.R64, float(raw[0]))
        return ScalarValue(DType.C64, float(raw[0]), float(raw[1]))
    raise TappError(ErrorCode.ERR_PARSE, f"bad scalar {raw!r}")


def _parse_element(raw, dtype: DType) -> float | complex:
    if isinstance(raw, (int, float)):
        return float(raw)
    if (
        dtype.is_complex
        and isinstance(raw, (list, tuple))
        and len(raw) == 2
        and all(isinstance(x, (int, float)) for x in raw)
    ):
        return complex(raw[0], raw[1])
    raise TappError(ErrorCode.ERR_PARSE, f"bad element {raw!r}")


def _emit_element(value, dtype: DType):
    if dtype.is_complex:
        v = complex(value)
        return [v.real, v.imag]
    return float(value)


@dataclass
class _TensorEntry:
    dtype: DType
    extents: tuple[int, ...]
    strides: tuple[int, ...]
    base: int
    data: list | None


def _parse_tensor(raw, name: str, want_data: bool) -> _TensorEntry:
    if not isinstance(raw, dict):
        raise TappError(ErrorCode.ERR_PARSE, f"tensor {name!r} must be an object")
    try:
        dtype = DType.from_name(raw["dtype"])
        extents = tuple(int(e) for e in raw["extents"])
    except (KeyError, TypeError, ValueError):
        raise TappError(ErrorCode.ERR_PARSE, f"tensor {name!r}: bad dtype/extents") from None
    strides = raw.get("strides")
    if strides is None:
        acc, out = 1, []
        for e in extents:
            out.append(acc)
            acc *= max(e, 1)
        strides = tuple(out)
    else:
        try:
            strides = tuple(int(s) for s in strides)
        except (TypeError, ValueError):
            raise TappError(ErrorCode.ERR_PARSE, f"tensor {name!r}: bad strides") from None
    base = raw.get("base", 0)
    if not isinstance(base, int) or base < 0:
        raise TappError(ErrorCode.ERR_PARSE, f"tensor {name!r}: bad base")
    data = None
    if want_data:
        raw_data = raw.get("data")
        if not isinstance(raw_data, list):
            raise TappError(ErrorCode.ERR_PARSE, f"tensor {name!r}: missing data")
        data = [_parse_element(v, dtype) for v in raw_data]
    return _TensorEntry(dtype, extents, strides, base, data)


@dataclass
class Case:
    """Parsed case file plus the raw document it came from."""

    spec: LabelSpec
    alpha: ScalarValue
    beta: ScalarValue
    a: _TensorEntry
    b: _TensorEntry
    c: _TensorEntry | None
    d: _TensorEntry
    raw: dict = field(repr=False, default_factory=dict)


def parse_case(doc) -> Case:
    if not isinstance(doc, dict):
        raise TappError(ErrorCode.ERR_PARSE, "case document must be an object")
    try:
        spec = parse_einsum(doc["einsum"])
        alpha = _parse_scalar(doc["alpha"])
        beta = _parse_scalar(doc["beta"])
        a = _parse_tensor(doc["a"], "a", want_data=True)
        b = _parse_tensor(doc["b"], "b", want_data=True)
        c = _parse_tensor(doc["c"], "c", want_data=True) if "c" in doc else None
        d = _parse_tensor(doc["d"], "d", want_data=False)
    except KeyError as missing:
        raise TappError(ErrorCode.ERR_PARSE, f"missing case field {missing}") from None
    except TypeError:
        raise TappError(ErrorCode.ERR_PARSE, "malformed case document") from None
    return Case(spec, alpha, beta, a, b, c, d, raw=doc)


def load_case(path: str) -> Case:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise TappError(ErrorCode.ERR_PARSE, f"cannot load {path}: {err}") from None
    return parse_case(doc)


def _dense_strides(extents) -> tuple[int, ...]:
    acc, out = 1, []
    for e in extents:
        out.append(acc)
        acc *= max(e, 1)
    return tuple(out)


def _c_entry(case: Case) -> _TensorEntry:
    if case.c is not None:
        return case.c
    span = 1
    for e, s in zip(case.d.extents, _dense_strides(case.d.extents)):
        span += s * (max(e, 1) - 1)
    return _TensorEntry(
        dtype=case.d.dtype,
        extents=case.d.extents,
        strides=_dense_strides(case.d.extents),
        base=0,
        data=[0.0] * span,
    )


def _entry_buffer(entry: _TensorEntry) -> np.ndarray:
    return np.array(entry.data, dtype=entry.dtype.np_dtype)


def _d_span(entry: _TensorEntry) -> int:
    hi = entry.base
    for e, s in zip(entry.extents, entry.strides):
        hi += max(0, s * (e - 1))
    return hi + 1


# ---------------------------------------------------------------------------
# Engine path


@dataclass
class EngineRun:
    code: ErrorCode
    d_buffer: np.ndarray | None = None
    status: StatusRecord | None = None


def execute_case(case: Case) -> EngineRun:
    """Run a case through the full handle/descriptor/execute stack."""
    c = _c_entry(case)
    handle = tapp_create_handle()
    try:
        infos = {}
        for name, entry, labels in (
            ("a", case.a, case.spec.labels_a),
            ("b", case.b, case.spec.labels_b),
            ("c", c, case.spec.labels_c),
            ("d", case.d, case.spec.labels_d),
        ):
            info = tapp_create_tensor_info(
                handle, entry.dtype, len(entry.extents), entry.extents, entry.strides
            )
            if isinstance(info, ErrorCode):
                return EngineRun(info)
            infos[name] = info
        op = tapp_create_contraction(
            handle,
            infos["a"], case.spec.labels_a,
            infos["b"], case.spec.labels_b,
            infos["c"], case.spec.labels_c,
            infos["d"], case.spec.labels_d,
        )
        if isinstance(op, ErrorCode):
            return EngineRun(op)
        d_buffer = allocate_buffer(case.d.dtype, _d_span(case.d))
        status = StatusRecord()
        code = tapp_execute_product(
            op,
            tapp_get_default_executor(handle),
            case.alpha,
            (_entry_buffer(case.a), case.a.base),
            (_entry_buffer(case.b), case.b.base),
            case.beta,
            (_entry_buffer(c), c.base),
            (d_buffer, case.d.base),
            status_out=status,
        )
        if code is not ErrorCode.OK:
            return EngineRun(code, status=status)
        return EngineRun(ErrorCode.OK, d_buffer=d_buffer, status=status)
    finally:
        tapp_destroy_handle(handle)


# ---------------------------------------------------------------------------
# Oracle path

def _merge_unique(labels, extents, strides):
    """Distinct labels with summed strides (plain re-derivation, kept
    independent of the engine's preprocessing)."""
    uniq, uext, ustr = [], [], []
    for lbl, e, s in zip(labels, extents, strides):
        if lbl in uniq:
            k = uniq.index(lbl)
            ustr[k] += s
        else:
            uniq.append(lbl)
            uext.append(e)
            ustr.append(s)
    return uniq, uext, ustr


def _validate_case_contract(case: Case) -> ErrorCode:
    """Re-derive the validity of a case against the operation contract,
    mirroring the engine's check order so that an invalid case yields
    the same code from both conformance paths."""
    c = _c_entry(case)
    tensors = {
        "a": (case.spec.labels_a, case.a),
        "b": (case.spec.labels_b, case.b),
        "d": (case.spec.labels_d, case.d),
    }
    # Label counts, then per-tensor repeats, then cross-tensor extents.
    extent_of: dict[str, int] = {}
    for name, (labels, entry) in tensors.items():
        if len(labels) != len(entry.extents):
            return ErrorCode.ERR_EXTENT_MISMATCH
        if any(e < 1 for e in entry.extents):
            return ErrorCode.ERR_EXTENT_MISMATCH
        seen: dict[str, int] = {}
        for lbl, e in zip(labels, entry.extents):
            if seen.setdefault(lbl, e) != e:
                return ErrorCode.ERR_EXTENT_MISMATCH
    for name, (labels, entry) in tensors.items():
        for lbl, e in zip(labels, entry.extents):
            if extent_of.setdefault(lbl, e) != e:
                return ErrorCode.ERR_EXTENT_MISMATCH
    # C must mirror D (labels are shared by construction of the format).
    if len(c.extents) != len(case.d.extents) or tuple(c.extents) != tuple(case.d.extents):
        return ErrorCode.ERR_OUTPUT_MISMATCH
    # Output-only labels are rejected by the engine contract.
    in_inputs = set(case.spec.labels_a) | set(case.spec.labels_b)
    if any(lbl not in in_inputs for lbl in case.spec.labels_d):
        return ErrorCode.ERR_UNSUPPORTED
    # Output addresses must be injective.
    uniq, uext, ustr = _merge_unique(
        case.spec.labels_d, case.d.extents, case.d.strides
    )
    seen_offsets = set()
    for idx in itertools.product(*[range(e) for e in uext]):
        off = sum(i * s for i, s in zip(idx, ustr))
        if off in seen_offsets:
            return ErrorCode.ERR_ALIASING
        seen_offsets.add(off)
    # Scalars must fit the arithmetic dtype.
    all_real = not any(
        entry.dtype.is_complex for entry in (case.a, case.b, c, case.d)
    )
    if all_real and (case.alpha.im != 0 or case.beta.im != 0):
        return ErrorCode.ERR_DTYPE_MISMATCH
    # Buffers must cover every addressable element.
    for name, (labels, entry) in (("a", tensors["a"]), ("b", tensors["b"]), ("c", (case.spec.labels_c, c))):
        lo = hi = entry.base
        for e, s in zip(entry.extents, entry.strides):
            lo += min(0, s * (e - 1))
            hi += max(0, s * (e - 1))
        if lo < 0 or hi >= len(entry.data):
            return ErrorCode.ERR_OUT_OF_BOUNDS
    lo = case.d.base
    for e, s in zip(case.d.extents, case.d.strides):
        lo += min(0, s * (e - 1))
    if lo < 0:
        return ErrorCode.ERR_OUT_OF_BOUNDS
    return ErrorCode.OK


@dataclass
class OracleRun:
    code: ErrorCode
    dense: DenseTensor | None = None


def oracle_case(case: Case) -> OracleRun:
    """Evaluate a case with the brute-force oracle."""
    code = _validate_case_contract(case)
    if code is not ErrorCode.OK:
        return OracleRun(code)
    c = _c_entry(case)
    try:
        views = {
            name: TensorView(
                TensorDesc(entry.extents, entry.strides, entry.dtype),
                _entry_buffer(entry),
                entry.base,
            )
            for name, entry in (("a", case.a), ("b", case.b), ("c", c))
        }
        dense_a, ua = densify(views["a"], case.spec.labels_a)
        dense_b, ub = densify(views["b"], case.spec.labels_b)
        dense_c, uc = densify(views["c"], case.spec.labels_c)
        ud, _, _ = _merge_unique(case.spec.labels_d, case.d.extents, case.d.strides)
        dense = oracle_contract(
            LabelSpec.of(ua, ub, tuple(ud), uc),
            dense_a,
            dense_b,
            dense_c,
            case.alpha,
            case.beta,
            out_dtype=case.d.dtype,
        )
    except TappError as err:
        return OracleRun(err.code)
    return OracleRun(ErrorCode.OK, dense=dense)


# ---------------------------------------------------------------------------
# Comparison


def default_tolerance(case: Case) -> float:
    dtypes = [case.a.dtype, case.b.dtype, case.d.dtype]
    if case.c is not None:
        dtypes.append(case.c.dtype)
    return TOLERANCE_32 if any(dt.width == 32 for dt in dtypes) else TOLERANCE_64


def _output_positions(case: Case):
    """Pairs (engine offset, dense position) for every output element."""
    uniq, uext, ustr = _merge_unique(
        case.spec.labels_d, case.d.extents, case.d.strides
    )
    dense_w = _dense_strides(uext)
    rev = itertools.product(*[range(e) for e in reversed(uext)])
    for idx_r in rev:
        idx = idx_r[::-1]
        yield (
            case.d.base + sum(i * s for i, s in zip(idx, ustr)),
            sum(i * w for i, w in zip(idx, dense_w)),
            idx,
        )


@dataclass
class CheckResult:
    engine_code: ErrorCode
    oracle_code: ErrorCode
    max_rel_err: float = 0.0
    worst_index: tuple | None = None
    passed: bool = False
    detail: str = ""


def check_case(
    case: Case, tolerance: float | None = None, perturb: float = 0.0
) -> CheckResult:
    """Run both paths on one case and compare.

    A case on which both paths report the same nonzero code counts as
    agreement (the shared code becomes the process exit code).
    """
    run = execute_case(case)
    orun = oracle_case(case)
    if run.code is not ErrorCode.OK or orun.code is not ErrorCode.OK:
        agreed = run.code == orun.code and run.code is not ErrorCode.OK
        return CheckResult(
            run.code,
            orun.code,
            passed=agreed,
            detail="error codes agree" if agreed else (
                f"engine {run.code.name} vs oracle {orun.code.name}"
            ),
        )
    tol = default_tolerance(case) if tolerance is None else tolerance
    max_rel, worst = 0.0, None
    for off, pos, idx in _output_positions(case):
        expected = orun.dense.elements[pos] + perturb
        got = run.d_buffer[off]
        got = complex(got) if case.d.dtype.is_complex else float(got)
        rel = abs(got - expected) / max(abs(expected), 1.0)
        if rel > max_rel:
            max_rel, worst = rel, idx
    return CheckResult(
        ErrorCode.OK,
        ErrorCode.OK,
        max_rel_err=max_rel,
        worst_index=worst,
        passed=max_rel <= tol,
        detail=f"max relative error {max_rel:.3e} (tolerance {tol:.0e})",
    )


# ---------------------------------------------------------------------------
# Case generation


def _rng_for(seed, category: int) -> random.Random:
    return random.Random(f"{seed}:{category}")


def _draw_extents(rng, labels, reduce_labels, uniform: int | None = None):
    """Extents per label under the total and reduce-side work budgets."""
    extent_of = {}
    total = 1
    reduce_total = 1
    order = list(labels)
    rng.shuffle(order)
    for lbl in order:
        cap = max(1, min(8, TOTAL_EXTENT_BUDGET // total))
        if lbl in reduce_labels:
            cap = max(1, min(cap, REDUCE_EXTENT_BUDGET // reduce_total))
        e = uniform if uniform is not None else rng.randint(1, cap)
        e = max(1, min(e, cap))
        extent_of[lbl] = e
        total *= e
        if lbl in reduce_labels:
            reduce_total *= e
    return extent_of


@dataclass
class _Structure:
    labels_a: list[str]
    labels_b: list[str]
    labels_d: list[str]
    extent_of: dict[str, int]


def _make_structure(
    rng,
    n_batch=0,
    n_contracted=0,
    n_free_a=0,
    n_free_b=0,
    n_reduced_a=0,
    n_reduced_b=0,
    uniform_extent: int | None = None,
    min_extent_first_free_a: int | None = None,
) -> _Structure:
    alphabet = iter("abcdefghijklmnopqrstuvwxyz")
    batch = [next(alphabet) for _ in range(n_batch)]
    contracted = [next(alphabet) for _ in range(n_contracted)]
    free_a = [next(alphabet) for _ in range(n_free_a)]
    free_b = [next(alphabet) for _ in range(n_free_b)]
    reduced_a = [next(alphabet) for _ in range(n_reduced_a)]
    reduced_b = [next(alphabet) for _ in range(n_reduced_b)]
    labels = batch + contracted + free_a + free_b + reduced_a + reduced_b
    extent_of = _draw_extents(
        rng, labels, set(contracted + reduced_a + reduced_b), uniform_extent
    )
    if min_extent_first_free_a is not None and free_a:
        extent_of[free_a[0]] = max(extent_of[free_a[0]], min_extent_first_free_a)
    labels_a = batch + contracted + free_a + reduced_a
    labels_b = batch + contracted + free_b + reduced_b
    labels_d = batch + free_a + free_b
    rng.shuffle(labels_a)
    rng.shuffle(labels_b)
    rng.shuffle(labels_d)
    return _Structure(labels_a, labels_b, labels_d, extent_of)


def _view_layout(rng, extents, signs="pos", parent="none"):
    """Strides, base and buffer length for one tensor's view.

    ``parent="same"`` embeds the view in a larger tensor of equal mode
    count; ``"fewer"`` adds extra parent modes fixed by the base offset.
    ``signs`` flips stride directions: "neg" all, "mixed" at least one
    each where possible.
    """
    n = len(extents)
    parent_extents = list(extents)
    offsets = [0] * n
    if parent == "same":
        parent_extents = [e + rng.randint(1, 2) for e in extents]
        offsets = [rng.randint(0, pe - e) for e, pe in zip(extents, parent_extents)]
    extra: list[tuple[int, int]] = []
    if parent == "fewer":
        for _ in range(rng.randint(1, 2)):
            extra.append((rng.randint(2, 3), 0))
    col, acc = [], 1
    for e in parent_extents + [x[0] for x in extra]:
        col.append(acc)
        acc *= e
    buffer_len = acc
    if signs == "neg":
        flips = [True] * n
    elif signs == "mixed":
        flips = [rng.random() < 0.5 for _ in range(n)]
        if n >= 2:
            if all(flips):
                flips[rng.randrange(n)] = False
            elif not any(flips):
                flips[rng.randrange(n)] = True
    else:
        flips = [False] * n
    strides, base = [], 0
    for k, e in enumerate(extents):
        s = col[k]
        if flips[k]:
            strides.append(-s)
            base += (offsets[k] + e - 1) * s
        else:
            strides.append(s)
            base += offsets[k] * s
    for k, (ext_e, _) in enumerate(extra):
        base += rng.randrange(ext_e) * col[n + k]
    return strides, base, buffer_len


def _random_values(rng, count, dtype: DType):
    if dtype.is_complex:
        return [[rng.uniform(-1, 1), rng.uniform(-1, 1)] for _ in range(count)]
    return [rng.uniform(-1, 1) for _ in range(count)]


def _tensor_doc(rng, labels, extent_of, dtype, signs="pos", parent="none", data=True):
    extents = [extent_of[l] for l in labels]
    doc = {"dtype": dtype.value, "extents": extents}
    if signs == "pos" and parent == "none":
        if data:
            doc["data"] = _random_values(rng, math.prod(extents), dtype)
        return doc
    strides, base, buffer_len = _view_layout(rng, extents, signs, parent)
    doc["strides"] = strides
    if base:
        doc["base"] = base
    if data:
        doc["data"] = _random_values(rng, buffer_len, dtype)
    return doc


def _scalar_doc(rng, dtype: DType, allow_zero=True):
    if allow_zero and rng.random() < 0.1:
        return 0.0
    if dtype.is_complex:
        return [rng.uniform(-1, 1), rng.uniform(-1, 1)]
    return rng.uniform(-1, 1)


def _assemble(rng, structure: _Structure, dtype: DType, signs="pos", parent="none",
              layout_d=True, layout_c=True):
    """Build a case document from a label structure.

    Layout variants apply to the inputs; ``layout_d``/``layout_c``
    extend them to the output side (only safe variants are used there).
    """
    einsum = (
        "".join(structure.labels_a)
        + ","
        + "".join(structure.labels_b)
        + "->"
        + "".join(structure.labels_d)
    )
    d_signs = signs if (layout_d and parent == "none") else "pos"
    c_signs = signs if (layout_c and parent == "none") else "pos"
    doc = {
        "einsum": einsum,
        "alpha": _scalar_doc(rng, dtype),
        "beta": _scalar_doc(rng, dtype),
        "a": _tensor_doc(rng, structure.labels_a, structure.extent_of, dtype, signs, parent),
        "b": _tensor_doc(rng, structure.labels_b, structure.extent_of, dtype, signs, parent),
        "c": _tensor_doc(rng, structure.labels_d, structure.extent_of, dtype, c_signs, "none"),
        "d": _tensor_doc(
            rng, structure.labels_d, structure.extent_of, dtype, d_signs, "none", data=False
        ),
    }
    return doc


def _basic_counts(rng):
    return dict(
        n_contracted=rng.randint(1, 2),
        n_free_a=rng.randint(1, 2),
        n_free_b=rng.randint(1, 2),
    )


def generate_case(category: int, seed) -> dict:
    """Emit one reproducible random case for a conformance category."""
    if not 1 <= category <= 28:
        raise ValueError(f"category must be in 1..28, got {category}")
    rng = _rng_for(seed, category)
    dtype = {
        18: DType.R64,
        19: DType.C32,
        20: DType.C64,
    }.get(category, DType.R32)

    if category == 1:
        st = _make_structure(rng, n_batch=rng.randint(1, 3))
        doc = _assemble(rng, st, dtype)
    elif category in (2, 3, 18, 19, 20):
        st = _make_structure(rng, **_basic_counts(rng))
        doc = _assemble(rng, st, dtype)
    elif category == 4:
        st = _make_structure(
            rng, n_contracted=rng.randint(0, 1), n_free_a=rng.randint(1, 2), n_free_b=1
        )
        doc = _assemble(rng, st, dtype)
    elif category == 5:
        st = _make_structure(
            rng, n_contracted=1, n_free_a=1, n_free_b=1,
            uniform_extent=rng.randint(2, 8),
        )
        doc = _assemble(rng, st, dtype)
    elif category == 6:
        st = _make_structure(rng, n_free_a=rng.randint(1, 2), n_free_b=rng.randint(1, 2))
        doc = _assemble(rng, st, dtype)
    elif category == 7:
        st = _make_structure(rng, n_contracted=rng.randint(1, 3))
        doc = _assemble(rng, st, dtype)
    elif category == 8:
        variant = rng.choice(["a", "b", "d"])
        if variant == "a":
            st = _make_structure(rng, n_free_b=rng.randint(1, 2))
        elif variant == "b":
            st = _make_structure(rng, n_free_a=rng.randint(1, 2))
        else:
            st = _make_structure(rng, n_contracted=rng.randint(1, 2))
        doc = _assemble(rng, st, dtype)
    elif category == 9:
        variant = rng.choice(["a", "b", "d"])
        if variant == "a":
            st = _make_structure(rng, n_contracted=1, n_free_b=rng.randint(1, 2))
        elif variant == "b":
            st = _make_structure(rng, n_contracted=1, n_free_a=rng.randint(1, 2))
        else:
            st = _make_structure(rng, n_contracted=rng.randint(0, 1), n_free_a=1)
        doc = _assemble(rng, st, dtype)
    elif category in (10, 11, 13, 14, 16, 17):
        parent = "same" if category in (10, 13, 16) else "fewer"
        signs = {10: "pos", 11: "pos", 13: "neg", 14: "neg", 16: "mixed", 17: "mixed"}[
            category
        ]
        st = _make_structure(rng, n_contracted=1, n_free_a=1, n_free_b=1)
        doc = _assemble(rng, st, dtype, signs=signs, parent=parent)
    elif category in (12, 15):
        st = _make_structure(rng, n_contracted=1, n_free_a=1, n_free_b=1)
        doc = _assemble(rng, st, dtype, signs="neg" if category == 12 else "mixed")
    elif category == 21:
        st = _make_structure(rng, **_basic_counts(rng))
        doc = _assemble(rng, st, dtype)
        target = rng.choice(["a", "b"])
        labels = st.labels_a if target == "a" else st.labels_b
        mode = rng.randrange(len(labels))
        entry = doc[target]
        entry["strides"] = list(_dense_strides(entry["extents"]))
        entry["strides"][mode] = 0
        span = 1 + sum(
            max(0, s * (e - 1)) for e, s in zip(entry["extents"], entry["strides"])
        )
        entry["data"] = _random_values(rng, span, dtype)
    elif category == 22:
        st = _make_structure(
            rng,
            n_contracted=rng.randint(0, 1),
            n_free_a=rng.randint(0, 1),
            n_free_b=rng.randint(0, 1),
            n_reduced_a=rng.randint(1, 2),
            n_reduced_b=rng.randint(0, 1),
        )
        doc = _assemble(rng, st, dtype)
    elif category == 23:
        st = _make_structure(rng, n_contracted=1, n_free_a=1, n_free_b=rng.randint(0, 1))
        target = rng.choice(["a", "b"])
        labels = st.labels_a if target == "a" else st.labels_b
        repeat = rng.choice(labels)
        labels.insert(rng.randrange(len(labels) + 1), repeat)
        doc = _assemble(rng, st, dtype)
    elif category == 24:
        st = _make_structure(
            rng,
            n_batch=rng.randint(1, 2),
            n_free_a=rng.randint(1, 2),
            n_free_b=rng.randint(0, 1),
        )
        doc = _assemble(rng, st, dtype)
    elif category == 25:
        st = _make_structure(
            rng, n_batch=rng.randint(1, 2), n_contracted=rng.randint(1, 2)
        )
        doc = _assemble(rng, st, dtype)
    elif category == 26:
        st = _make_structure(rng, **_basic_counts(rng))
        doc = _assemble(rng, st, dtype)
        victim = rng.choice([l for l in st.labels_a if l in st.labels_b])
        mode = st.labels_b.index(victim)
        old = doc["b"]["extents"][mode]
        doc["b"]["extents"][mode] = old + 1 if old < 8 else old - 1
        doc["b"]["data"] = _random_values(
            rng, math.prod(doc["b"]["extents"]), dtype
        )
        doc["b"].pop("strides", None)
        doc["b"].pop("base", None)
    elif category == 27:
        st = _make_structure(rng, n_contracted=rng.randint(1, 2), n_free_a=1,
                             n_free_b=rng.randint(0, 1))
        doc = _assemble(rng, st, dtype)
        mode = rng.randrange(len(doc["c"]["extents"]))
        old = doc["c"]["extents"][mode]
        doc["c"]["extents"][mode] = old + 1 if old < 8 else old - 1
        doc["c"]["data"] = _random_values(
            rng, math.prod(doc["c"]["extents"]), dtype
        )
        doc["c"].pop("strides", None)
        doc["c"].pop("base", None)
    else:  # category == 28
        st = _make_structure(
            rng, n_contracted=rng.randint(0, 1), n_free_a=1,
            n_free_b=rng.randint(0, 1), min_extent_first_free_a=2,
        )
        doc = _assemble(rng, st, dtype)
        aliased = rng.choice(
            [k for k, e in enumerate(doc["d"]["extents"]) if e >= 2]
        )
        doc["d"]["strides"] = list(_dense_strides(doc["d"]["extents"]))
        doc["d"]["strides"][aliased] = 0

    doc["category"] = category
    doc["seed"] = str(seed)
    if category in EXPECTED_ERROR:
        doc["expect_error"] = int(EXPECTED_ERROR[category])
    return doc


# ---------------------------------------------------------------------------
# Suite


def _swap_operands(doc: dict) -> dict:
    spec = parse_einsum(doc["einsum"])
    swapped = dict(doc)
    swapped["einsum"] = (
        "".join(spec.labels_b) + "," + "".join(spec.labels_a) + "->" + "".join(spec.labels_d)
    )
    swapped["a"], swapped["b"] = doc["b"], doc["a"]
    return swapped


def _permute_output(doc: dict, rng: random.Random) -> tuple[dict, list[int]]:
    spec = parse_einsum(doc["einsum"])
    n = len(spec.labels_d)
    perm = list(range(n))
    while n >= 2 and perm == list(range(n)):
        rng.shuffle(perm)
    permuted = dict(doc)
    permuted["einsum"] = (
        "".join(spec.labels_a)
        + ","
        + "".join(spec.labels_b)
        + "->"
        + "".join(spec.labels_d[k] for k in perm)
    )
    c_strides = doc["c"].get("strides") or list(_dense_strides(doc["c"]["extents"]))
    permuted["c"] = dict(doc["c"])
    permuted["c"]["extents"] = [doc["c"]["extents"][k] for k in perm]
    permuted["c"]["strides"] = [c_strides[k] for k in perm]
    permuted["d"] = {
        "dtype": doc["d"]["dtype"],
        "extents": [doc["d"]["extents"][k] for k in perm],
    }
    return permuted, perm


def _compare_buffers(case1: Case, run1: EngineRun, case2: Case, run2: EngineRun,
                     tolerance: float, index_map=None) -> tuple[bool, float]:
    """Elementwise comparison of two engine outputs over the logical
    output index space; ``index_map`` maps an index of case1 to the
    corresponding index of case2."""
    uniq, uext, ustr = _merge_unique(
        case1.spec.labels_d, case1.d.extents, case1.d.strides
    )
    _, _, ustr2 = _merge_unique(case2.spec.labels_d, case2.d.extents, case2.d.strides)
    max_rel = 0.0
    complex_out = case1.d.dtype.is_complex
    for idx_r in itertools.product(*[range(e) for e in reversed(uext)]):
        idx = idx_r[::-1]
        idx2 = index_map(idx) if index_map is not None else idx
        off1 = case1.d.base + sum(i * s for i, s in zip(idx, ustr))
        off2 = case2.d.base + sum(i * s for i, s in zip(idx2, ustr2))
        v1 = run1.d_buffer[off1]
        v2 = run2.d_buffer[off2]
        v1 = complex(v1) if complex_out else float(v1)
        v2 = complex(v2) if complex_out else float(v2)
        rel = abs(v1 - v2) / max(abs(v2), 1.0)
        max_rel = max(max_rel, rel)
    return max_rel <= tolerance, max_rel


def _check_instance(doc: dict, category: int, tolerance: float | None) -> CheckResult:
    case = parse_case(doc)
    if category in EXPECTED_ERROR:
        expected = EXPECTED_ERROR[category]
        result = check_case(case, tolerance)
        ok = (
            result.engine_code == expected
            and result.oracle_code == expected
        )
        result.passed = ok
        if not ok:
            result.detail = (
                f"expected {expected.name}, engine {result.engine_code.name},"
                f" oracle {result.oracle_code.name}"
            )
        return result

    result = check_case(case, tolerance)
    if not result.passed:
        return result
    tol = default_tolerance(case) if tolerance is None else tolerance

    if category == 3:
        swapped = parse_case(_swap_operands(doc))
        run1, run2 = execute_case(case), execute_case(swapped)
        if run1.code is not ErrorCode.OK or run2.code is not ErrorCode.OK:
            result.passed = False
            result.detail = "operand swap failed to execute"
            return result
        ok, max_rel = _compare_buffers(case, run1, swapped, run2, tol)
        if not ok:
            result.passed = False
            result.detail = f"operand swap diverged ({max_rel:.3e})"
        return result

    if category == 4 and len(case.spec.labels_d) >= 2:
        rng = random.Random(f"{doc.get('seed')}:{category}:perm")
        permuted_doc, perm = _permute_output(doc, rng)
        permuted = parse_case(permuted_doc)
        run1, run2 = execute_case(case), execute_case(permuted)
        if run1.code is not ErrorCode.OK or run2.code is not ErrorCode.OK:
            result.passed = False
            result.detail = "output permutation failed to execute"
            return result

        def index_map(idx):
            return tuple(idx[perm[k]] for k in range(len(perm)))

        ok, max_rel = _compare_buffers(case, run1, permuted, run2, 0.0, index_map)
        if not ok:
            result.passed = False
            result.detail = f"output permutation diverged ({max_rel:.3e})"
        return result

    return result


def run_suite(
    seed: int,
    iterations: int,
    categories=None,
    tolerance: float | None = None,
    log=None,
) -> tuple[int, dict]:
    """Generate and check ``iterations`` instances of each category.

    Returns (exit_code, report).  The report is fully deterministic for
    a given (seed, iterations, categories) triple.
    """
    chosen = list(categories) if categories else list(range(1, 29))
    report = {
        "seed": seed,
        "iterations": iterations,
        "instances": 0,
        "categories": {},
        "failures": [],
    }
    exit_code = 0
    for category in chosen:
        passed = failed = 0
        max_rel = 0.0
        for i in range(iterations):
            doc = generate_case(category, f"{seed}.{i}")
            result = _check_instance(doc, category, tolerance)
            report["instances"] += 1
            max_rel = max(max_rel, result.max_rel_err)
            if result.passed:
                passed += 1
                continue
            failed += 1
            report["failures"].append(
                {
                    "category": category,
                    "instance": i,
                    "detail": result.detail,
                    "engine_code": int(result.engine_code),
                    "oracle_code": int(result.oracle_code),
                    "case": doc,
                }
            )
            if exit_code == 0:
                if result.engine_code is not ErrorCode.OK:
                    exit_code = int(result.engine_code)
                elif result.oracle_code is not ErrorCode.OK:
                    exit_code = int(result.oracle_code)
                else:
                    exit_code = 1
        report["categories"][str(category)] = {
            "title": CATEGORY_TITLES[category],
            "passed": passed,
            "failed": failed,
            "max_rel_err": max_rel,
        }
        if log is not None:
            state = "ok" if failed == 0 else "FAIL"
            print(
                f"category {category:2d} ({CATEGORY_TITLES[category]}): "
                f"{passed}/{passed + failed} {state}",
                file=log,
            )
    return exit_code, report


# ---------------------------------------------------------------------------
# Entry points


def _cmd_run(args) -> int:
    try:
        case = load_case(args.case)
    except TappError as err:
        print(json.dumps({"error": int(err.code), "message": str(err)}))
        return int(err.code)
    run = execute_case(case)
    if run.code is not ErrorCode.OK:
        print(json.dumps({"error": int(run.code), "message": error_string(run.code)}))
        return int(run.code)
    doc = {
        "d": [_emit_element(v, case.d.dtype) for v in run.d_buffer.tolist()],
        "status": {
            "seconds_elapsed": run.status.seconds_elapsed,
            "elements_written": run.status.elements_written,
            "multiply_adds": run.status.multiply_adds,
            "error": int(run.status.error),
        },
    }
    print(json.dumps(doc))
    return 0


def _cmd_gen(args) -> int:
    doc = generate_case(args.category, args.seed)
    print(json.dumps(doc, indent=2))
    return 0


def _cmd_check(args) -> int:
    try:
        case = load_case(args.case)
    except TappError as err:
        print(json.dumps({"error": int(err.code), "message": str(err)}))
        return int(err.code)
    result = check_case(case, args.tolerance, args.perturb)
    print(
        json.dumps(
            {
                "engine_code": int(result.engine_code),
                "oracle_code": int(result.oracle_code),
                "max_rel_err": result.max_rel_err,
                "worst_index": list(result.worst_index) if result.worst_index else None,
                "passed": result.passed,
                "detail": result.detail,
            }
        )
    )
    if result.passed and result.engine_code is ErrorCode.OK:
        return 0
    if result.passed:
        return int(result.engine_code)
    if result.engine_code is not ErrorCode.OK:
        return int(result.engine_code)
    if result.oracle_code is not ErrorCode.OK:
        return int(result.oracle_code)
    return 1


def _cmd_suite(args) -> int:
    categories = [args.case_filter] if args.case_filter else None
    code, report = run_suite(
        args.seed, args.iterations, categories, args.tolerance, log=sys.stderr
    )
    print(json.dumps(report, indent=2))
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="tapp", description="strided tensor contraction conformance tool"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one case file")
    p_run.add_argument("case", help="path to a case JSON document")
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("gen", help="generate a random conformance case")
    p_gen.add_argument("category", type=int, help="category number, 1..28")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=_cmd_gen)

    p_check = sub.add_parser("check", help="compare engine and oracle on a case")
    p_check.add_argument("case", help="path to a case JSON document")
    p_check.add_argument("--tolerance", type=float, default=None)
    p_check.add_argument("--perturb", type=float, default=0.0)
    p_check.set_defaults(func=_cmd_check)

    p_suite = sub.add_parser("suite", help="run the randomized conformance suite")
    p_suite.add_argument("--seed", type=int, default=0)
    p_suite.add_argument("--iterations", type=int, default=10)
    p_suite.add_argument("--case", dest="case_filter", type=int, default=None)
    p_suite.add_argument("--tolerance", type=float, default=None)
    p_suite.set_defaults(func=_cmd_suite)

    args = parser.parse_args(argv)
    if args.command == "gen" and not 1 <= args.category <= 28:
        parser.error("category must be in 1..28")
    if args.command == "suite" and args.case_filter is not None:
        if not 1 <= args.case_filter <= 28:
            parser.error("--case must be in 1..28")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
