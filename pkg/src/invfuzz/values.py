"""Concrete runtime values, API input records, dtype tables, and the JSON
document form shared with executors.

Every value serializes as `{"kind": "...", ...}`; tensors carry shape, dtype
name, a [lo, hi] range summary, and optionally their flat elements. The
document schema is the payload of the executor protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class WrongKind(Exception):
    """Operation applied to a value of the wrong kind."""


class IndexOutOfRange(Exception):
    """Shape or sequence index outside the valid range."""


class UnknownDtype(Exception):
    pass


class DecodeError(Exception):
    """Malformed value document. Carries a path into the document."""

    def __init__(self, message: str, path: str = "$"):
        self.path = path
        super().__init__(f"{path}: {message}")


# ---------------------------------------------------------------------------
# Dtypes


@dataclass(frozen=True)
class DtypeEntry:
    code: int
    name: str
    byte_width: int
    kind: str  # "float" | "int" | "bool" | "complex"


@dataclass(frozen=True)
class DtypeTable:
    entries: tuple[DtypeEntry, ...]

    def __post_init__(self):
        codes = [e.code for e in self.entries]
        if codes != list(range(len(self.entries))):
            raise ValueError("dtype codes must be dense 0..n-1")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("dtype names must be unique")
        if any(e.byte_width < 1 for e in self.entries):
            raise ValueError("byte widths must be >= 1")

    def __len__(self) -> int:
        return len(self.entries)

    def by_code(self, code: int) -> DtypeEntry:
        if not 0 <= code < len(self.entries):
            raise UnknownDtype(f"dtype code {code} not in table")
        return self.entries[code]

    def by_name(self, name: str) -> DtypeEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise UnknownDtype(f"dtype name {name!r} not in table")


DEFAULT_DTYPES = DtypeTable(
    (
        DtypeEntry(0, "float32", 4, "float"),
        DtypeEntry(1, "float64", 8, "float"),
        DtypeEntry(2, "int32", 4, "int"),
        DtypeEntry(3, "int64", 8, "int"),
        DtypeEntry(4, "bool", 1, "bool"),
        DtypeEntry(5, "complex64", 8, "complex"),
    )
)


# ---------------------------------------------------------------------------
# Values


class ConcreteValue:
    """Base class for runtime values."""

    kind: str = ""


@dataclass(frozen=True)
class IntV(ConcreteValue):
    value: int
    kind = "int"

    def __post_init__(self):
        if isinstance(self.value, bool) or not isinstance(self.value, int):
            raise ValueError("IntV holds a plain int")


@dataclass(frozen=True)
class FloatV(ConcreteValue):
    value: float
    kind = "float"


@dataclass(frozen=True)
class BoolV(ConcreteValue):
    value: bool
    kind = "bool"


@dataclass(frozen=True)
class StrV(ConcreteValue):
    value: str
    kind = "str"


@dataclass(frozen=True)
class DtypeV(ConcreteValue):
    code: int
    kind = "dtype"


@dataclass(frozen=True)
class NoneV(ConcreteValue):
    """Placeholder for an omitted optional parameter."""

    kind = "none"


@dataclass(frozen=True, eq=False)
class TensorV(ConcreteValue):
    """Tensor summary: shape, dtype code, value range, optional elements.

    The (lo, hi) summary is always present, even with materialized elements,
    so rule evaluation works identically on abstract-derived and fully
    materialized tensors. Elements, when present, are a read-only float64
    array of exactly prod(shape) values inside [lo, hi].
    """

    shape: tuple[int, ...]
    dtype: int
    lo: float
    hi: float
    elements: Optional[np.ndarray] = None
    kind = "tensor"

    def __post_init__(self):
        if any(d < 0 for d in self.shape):
            raise ValueError("shape entries must be >= 0")
        if not self.lo <= self.hi:
            raise ValueError(f"tensor range requires lo <= hi, got [{self.lo}, {self.hi}]")
        if self.elements is not None:
            arr = np.asarray(self.elements, dtype=np.float64).reshape(-1)
            if arr.size != self.numel:
                raise ValueError(
                    f"element count {arr.size} != prod(shape) {self.numel}"
                )
            finite = arr[np.isfinite(arr)]
            if finite.size and (finite.min() < self.lo or finite.max() > self.hi):
                raise ValueError("elements outside [lo, hi]")
            arr.setflags(write=False)
            object.__setattr__(self, "elements", arr)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def numel(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.shape else 1

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TensorV):
            return NotImplemented
        if (self.shape, self.dtype, self.lo, self.hi) != (
            other.shape,
            other.dtype,
            other.lo,
            other.hi,
        ):
            return False
        if (self.elements is None) != (other.elements is None):
            return False
        if self.elements is None:
            return True
        return bool(np.array_equal(self.elements, other.elements, equal_nan=True))

    def __hash__(self) -> int:
        return hash((self.shape, self.dtype, self.lo, self.hi, self.elements is None))

    def __repr__(self) -> str:
        elems = f", elements[{self.elements.size}]" if self.elements is not None else ""
        return f"TensorV(shape={list(self.shape)}, dtype={self.dtype}, [{self.lo}, {self.hi}]{elems})"


@dataclass(frozen=True)
class ListV(ConcreteValue):
    items: tuple[ConcreteValue, ...]
    kind = "list"


@dataclass(frozen=True)
class TupleV(ConcreteValue):
    items: tuple[ConcreteValue, ...]
    kind = "tuple"


NONE = NoneV()


# ---------------------------------------------------------------------------
# API records


@dataclass(frozen=True)
class ApiParam:
    name: str
    type_text: str  # declared type in rule-language syntax, e.g. "tensor", "int|float"
    required: bool = True


@dataclass(frozen=True)
class ApiSignature:
    api: str
    params: tuple[ApiParam, ...]

    def __post_init__(self):
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")
        if not self.params:
            raise ValueError("an API needs at least one parameter")

    def param(self, name: str) -> ApiParam:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)


@dataclass(frozen=True)
class ApiInput:
    api: str
    args: tuple[tuple[str, ConcreteValue], ...]  # ordered

    def arg(self, name: str) -> ConcreteValue:
        for k, v in self.args:
            if k == name:
                return v
        return NONE

    def as_dict(self) -> dict[str, ConcreteValue]:
        return dict(self.args)


# ---------------------------------------------------------------------------
# Tensor accessors


def tensor_prop(v: ConcreteValue, fn: str, index: Optional[int] = None) -> Union[int, float]:
    """Evaluate a tensor function on a concrete tensor.

    shape(i) resolves negative indices as i + ndim for -ndim <= i < 0.
    min/max report observed element extrema when elements are present,
    otherwise the (lo, hi) summary.
    """
    if not isinstance(v, TensorV):
        raise WrongKind(f"{fn} applies to tensors, got {type(v).__name__}")
    if fn == "ndim":
        return v.ndim
    if fn == "dtype_":
        return v.dtype
    if fn == "shape":
        if index is None:
            raise WrongKind("shape requires an index")
        resolved = index + v.ndim if index < 0 else index
        if not 0 <= resolved < v.ndim:
            raise IndexOutOfRange(f"index {index} out of range for ndim {v.ndim}")
        return v.shape[resolved]
    if fn in ("min", "max"):
        if v.elements is not None and v.elements.size:
            value = float(v.elements.min() if fn == "min" else v.elements.max())
        else:
            value = v.lo if fn == "min" else v.hi
        return value
    raise WrongKind(f"unknown tensor function {fn!r}")


def byte_size(v: TensorV, table: DtypeTable = DEFAULT_DTYPES) -> int:
    """Total bytes: prod(shape) * byte_width. Scalar tensors count one element."""
    if not isinstance(v, TensorV):
        raise WrongKind("byte_size applies to tensors")
    return v.numel * table.by_code(v.dtype).byte_width


# ---------------------------------------------------------------------------
# Document encoding


def _f(x: float) -> Union[int, float, str]:
    """JSON-safe float: keep integral floats compact, map non-finite to strings."""
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
    return x


def _unf(x: object, path: str) -> float:
    if isinstance(x, str):
        if x == "nan":
            return math.nan
        if x == "inf":
            return math.inf
        if x == "-inf":
            return -math.inf
        raise DecodeError(f"bad float encoding {x!r}", path)
    if not isinstance(x, (int, float)) or isinstance(x, bool):
        raise DecodeError(f"expected a number, got {type(x).__name__}", path)
    return float(x)


def encode_value(v: ConcreteValue, table: DtypeTable = DEFAULT_DTYPES) -> dict:
    if isinstance(v, IntV):
        return {"kind": "int", "value": v.value}
    if isinstance(v, FloatV):
        return {"kind": "float", "value": _f(v.value)}
    if isinstance(v, BoolV):
        return {"kind": "bool", "value": v.value}
    if isinstance(v, StrV):
        return {"kind": "str", "value": v.value}
    if isinstance(v, DtypeV):
        return {"kind": "dtype", "name": table.by_code(v.code).name}
    if isinstance(v, NoneV):
        return {"kind": "none"}
    if isinstance(v, TensorV):
        doc: dict = {
            "kind": "tensor",
            "ndim": v.ndim,
            "shape": list(v.shape),
            "dtype": table.by_code(v.dtype).name,
            "lo": _f(v.lo),
            "hi": _f(v.hi),
        }
        if v.elements is not None:
            doc["elements"] = [_f(float(x)) for x in v.elements.tolist()]
        return doc
    if isinstance(v, (ListV, TupleV)):
        return {"kind": v.kind, "items": [encode_value(item, table) for item in v.items]}
    raise WrongKind(f"cannot encode {type(v).__name__}")


_KNOWN_FIELDS = {
    "int": {"kind", "value"},
    "float": {"kind", "value"},
    "bool": {"kind", "value"},
    "str": {"kind", "value"},
    "dtype": {"kind", "name"},
    "none": {"kind"},
    "tensor": {"kind", "ndim", "shape", "dtype", "lo", "hi", "elements"},
    "list": {"kind", "items"},
    "tuple": {"kind", "items"},
}


def decode_value(doc: object, table: DtypeTable = DEFAULT_DTYPES, path: str = "$") -> ConcreteValue:
    if not isinstance(doc, dict):
        raise DecodeError(f"expected an object, got {type(doc).__name__}", path)
    kind = doc.get("kind")
    if kind not in _KNOWN_FIELDS:
        raise DecodeError(f"unknown kind {kind!r}", f"{path}.kind")
    unknown = set(doc) - _KNOWN_FIELDS[kind]
    if unknown:
        raise DecodeError(f"unknown field(s) {sorted(unknown)}", path)
    if kind == "int":
        v = doc.get("value")
        if not isinstance(v, int) or isinstance(v, bool):
            raise DecodeError("int value must be an integer", f"{path}.value")
        return IntV(v)
    if kind == "float":
        return FloatV(_unf(doc.get("value"), f"{path}.value"))
    if kind == "bool":
        v = doc.get("value")
        if not isinstance(v, bool):
            raise DecodeError("bool value must be true/false", f"{path}.value")
        return BoolV(v)
    if kind == "str":
        v = doc.get("value")
        if not isinstance(v, str):
            raise DecodeError("str value must be a string", f"{path}.value")
        return StrV(v)
    if kind == "dtype":
        name = doc.get("name")
        if not isinstance(name, str):
            raise DecodeError("dtype name must be a string", f"{path}.name")
        try:
            return DtypeV(table.by_name(name).code)
        except UnknownDtype as exc:
            raise DecodeError(str(exc), f"{path}.name")
    if kind == "none":
        return NONE
    if kind == "tensor":
        shape = doc.get("shape")
        if not isinstance(shape, list) or not all(
            isinstance(d, int) and not isinstance(d, bool) for d in shape
        ):
            raise DecodeError("shape must be a list of integers", f"{path}.shape")
        if "ndim" in doc and doc["ndim"] != len(shape):
            raise DecodeError(
                f"ndim {doc['ndim']} does not match shape of length {len(shape)}",
                f"{path}.shape",
            )
        name = doc.get("dtype")
        if not isinstance(name, str):
            raise DecodeError("dtype must be a string name", f"{path}.dtype")
        try:
            code = table.by_name(name).code
        except UnknownDtype as exc:
            raise DecodeError(str(exc), f"{path}.dtype")
        lo = _unf(doc.get("lo"), f"{path}.lo")
        hi = _unf(doc.get("hi"), f"{path}.hi")
        elements = None
        if "elements" in doc:
            raw = doc["elements"]
            if not isinstance(raw, list):
                raise DecodeError("elements must be a list", f"{path}.elements")
            elements = np.array(
                [_unf(x, f"{path}.elements[{i}]") for i, x in enumerate(raw)],
                dtype=np.float64,
            )
        try:
            return TensorV(tuple(shape), code, lo, hi, elements)
        except ValueError as exc:
            raise DecodeError(str(exc), f"{path}.shape")
    # list / tuple
    items = doc.get("items")
    if not isinstance(items, list):
        raise DecodeError("items must be a list", f"{path}.items")
    decoded = tuple(
        decode_value(item, table, f"{path}.items[{i}]") for i, item in enumerate(items)
    )
    return ListV(decoded) if kind == "list" else TupleV(decoded)


def encode_input(inp: ApiInput, table: DtypeTable = DEFAULT_DTYPES) -> dict:
    return {
        "api": inp.api,
        "args": {name: encode_value(v, table) for name, v in inp.args},
    }


def decode_input(doc: dict, table: DtypeTable = DEFAULT_DTYPES) -> ApiInput:
    if not isinstance(doc, dict) or "api" not in doc or "args" not in doc:
        raise DecodeError("input document needs 'api' and 'args'")
    args = doc["args"]
    if not isinstance(args, dict):
        raise DecodeError("args must be an object", "$.args")
    return ApiInput(
        api=doc["api"],
        args=tuple((k, decode_value(v, table, f"$.args.{k}")) for k, v in args.items()),
    )


def signature_doc(sig: ApiSignature) -> dict:
    return {
        "api": sig.api,
        "params": [
            {"name": p.name, "type": p.type_text, "required": p.required} for p in sig.params
        ],
    }


def tensor_from_elements(
    shape: Sequence[int], dtype: int, elements: Iterable[float]
) -> TensorV:
    """Build a tensor whose (lo, hi) summary is derived from its elements.

    Non-finite elements (NaN/inf from defective backends) are excluded from
    the summary; an all-non-finite tensor gets the degenerate range [0, 0].
    """
    arr = np.asarray(list(elements) if not isinstance(elements, np.ndarray) else elements,
                     dtype=np.float64).reshape(-1)
    finite = arr[np.isfinite(arr)]
    if finite.size:
        lo, hi = float(finite.min()), float(finite.max())
    else:
        lo, hi = 0.0, 0.0
    return TensorV(tuple(int(d) for d in shape), dtype, lo, hi, arr)


def signature_from_doc(doc: dict) -> ApiSignature:
    return ApiSignature(
        api=doc["api"],
        params=tuple(
            ApiParam(p["name"], p["type"], bool(p.get("required", True)))
            for p in doc["params"]
        ),
    )
