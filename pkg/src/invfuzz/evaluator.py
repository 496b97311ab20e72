"""Reference semantics: decide whether a typed rule holds for a concrete
binding of variables to values.

Arithmetic is exact rational (int / Fraction); a value used as a shape or
sequence index or as a quantifier bound must be integral. Conjunction,
disjunction, and quantifiers evaluate left to right with short-circuiting;
`if c then e1 else e2` selects a branch, and `if c then e` means
(not c) or e. Quantifier ranges are inclusive and capped at 10^4 values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional, Union

from .dsl import (
    And,
    Arith,
    Cmp,
    Exists,
    Expr,
    ForAll,
    IfThen,
    Literal,
    Or,
    PrimType,
    SeqType,
    TensorFn,
    TensorType,
    TupleIndex,
    TupleLen,
    TypedRule,
    TypeExpr,
    UnionType,
    VarRef,
)
from .values import (
    BoolV,
    ConcreteValue,
    DtypeV,
    FloatV,
    IndexOutOfRange as ValueIndexError,
    IntV,
    ListV,
    NoneV,
    StrV,
    TensorV,
    TupleV,
    WrongKind as ValueWrongKind,
    tensor_prop,
)

QUANTIFIER_SPAN_CAP = 10_000

Binding = dict[str, ConcreteValue]

_Num = Union[int, Fraction]
_Value = Union[int, Fraction, bool, str, ConcreteValue]


class EvalErrorKind(Enum):
    NON_INTEGRAL_INDEX = "NonIntegralIndex"
    DIVISION_BY_ZERO = "DivisionByZero"
    INDEX_OUT_OF_RANGE = "IndexOutOfRange"
    WRONG_KIND = "WrongKind"
    RANGE_TOO_LARGE = "RangeTooLarge"


class EvalError(Exception):
    def __init__(self, kind: EvalErrorKind, message: str):
        self.kind = kind
        super().__init__(f"{kind.value}: {message}")


class CheckStatus(Enum):
    HOLDS = "holds"
    FAILS = "fails"
    ERRORS = "errors"


@dataclass(frozen=True)
class CheckResult:
    status: CheckStatus
    error: Optional[EvalError] = None

    @property
    def holds(self) -> bool:
        return self.status is CheckStatus.HOLDS


def _as_number(v: _Value, what: str) -> _Num:
    if isinstance(v, bool) or not isinstance(v, (int, Fraction)):
        raise EvalError(EvalErrorKind.WRONG_KIND, f"{what} is not numeric: {v!r}")
    return v


def _as_int(v: _Value, what: str) -> int:
    if isinstance(v, bool):
        raise EvalError(EvalErrorKind.WRONG_KIND, f"{what} is not numeric: {v!r}")
    if isinstance(v, int):
        return v
    if isinstance(v, Fraction):
        if v.denominator == 1:
            return int(v)
        raise EvalError(EvalErrorKind.NON_INTEGRAL_INDEX, f"{what} is not integral: {v}")
    raise EvalError(EvalErrorKind.WRONG_KIND, f"{what} is not numeric: {v!r}")


def _as_bool(v: _Value, what: str) -> bool:
    if isinstance(v, bool):
        return v
    raise EvalError(EvalErrorKind.WRONG_KIND, f"{what} is not boolean: {v!r}")


def _unwrap(value: ConcreteValue) -> _Value:
    if isinstance(value, IntV):
        return value.value
    if isinstance(value, FloatV):
        if not math.isfinite(value.value):
            raise EvalError(EvalErrorKind.WRONG_KIND, "non-finite value in evaluation")
        return Fraction(value.value)
    if isinstance(value, BoolV):
        return value.value
    if isinstance(value, StrV):
        return value.value
    if isinstance(value, DtypeV):
        return value.code  # dtype compares by its integer code
    if isinstance(value, NoneV):
        raise EvalError(EvalErrorKind.WRONG_KIND, "omitted optional parameter in binding")
    return value  # tensors, lists, tuples stay wrapped


def _to_fraction_exact(x: float, what: str) -> Fraction:
    if not math.isfinite(x):
        raise EvalError(EvalErrorKind.WRONG_KIND, f"{what} is non-finite")
    return Fraction(x)


class _Eval:
    __slots__ = ("binding", "scope")

    def __init__(self, binding: Binding):
        self.binding = binding
        self.scope: dict[str, int] = {}

    def eval(self, e: Expr) -> _Value:
        if isinstance(e, Literal):
            return e.value
        if isinstance(e, VarRef):
            if e.name in self.scope:
                return self.scope[e.name]
            try:
                value = self.binding[e.name]
            except KeyError:
                raise EvalError(EvalErrorKind.WRONG_KIND, f"unbound variable {e.name!r}")
            return _unwrap(value)
        if isinstance(e, Cmp):
            return self._cmp(e)
        if isinstance(e, TensorFn):
            return self._tensor_fn(e)
        if isinstance(e, Arith):
            lhs = _as_number(self.eval(e.lhs), "arithmetic operand")
            rhs = _as_number(self.eval(e.rhs), "arithmetic operand")
            if e.op == "+":
                return lhs + rhs
            if e.op == "-":
                return lhs - rhs
            if e.op == "*":
                return lhs * rhs
            if rhs == 0:
                raise EvalError(EvalErrorKind.DIVISION_BY_ZERO, "division by zero")
            return Fraction(lhs) / Fraction(rhs)
        if isinstance(e, And):
            if not _as_bool(self.eval(e.lhs), "and operand"):
                return False
            return _as_bool(self.eval(e.rhs), "and operand")
        if isinstance(e, Or):
            if _as_bool(self.eval(e.lhs), "or operand"):
                return True
            return _as_bool(self.eval(e.rhs), "or operand")
        if isinstance(e, (ForAll, Exists)):
            return self._quantifier(e)
        if isinstance(e, IfThen):
            cond = _as_bool(self.eval(e.cond), "condition")
            if e.orelse is None:
                return self.eval(e.then) if cond else True
            return self.eval(e.then) if cond else self.eval(e.orelse)
        if isinstance(e, TupleIndex):
            return self._tuple_index(e)
        if isinstance(e, TupleLen):
            target = self._seq_value(e.target)
            return len(target.items)
        raise EvalError(EvalErrorKind.WRONG_KIND, f"cannot evaluate {type(e).__name__}")

    def _cmp(self, e: Cmp) -> bool:
        lhs = self.eval(e.lhs)
        rhs = self.eval(e.rhs)
        if isinstance(lhs, str) or isinstance(rhs, str):
            if not (isinstance(lhs, str) and isinstance(rhs, str)):
                raise EvalError(EvalErrorKind.WRONG_KIND, "string compared with non-string")
            if e.op == "=":
                return lhs == rhs
            if e.op == "!=":
                return lhs != rhs
            raise EvalError(EvalErrorKind.WRONG_KIND, "strings compare only with = and !=")
        if isinstance(lhs, bool) or isinstance(rhs, bool):
            if not (isinstance(lhs, bool) and isinstance(rhs, bool)):
                raise EvalError(EvalErrorKind.WRONG_KIND, "bool compared with non-bool")
            if e.op == "=":
                return lhs == rhs
            if e.op == "!=":
                return lhs != rhs
            raise EvalError(EvalErrorKind.WRONG_KIND, "bools compare only with = and !=")
        ln = _as_number(lhs, "comparison operand")
        rn = _as_number(rhs, "comparison operand")
        if e.op == "=":
            return ln == rn
        if e.op == "!=":
            return ln != rn
        if e.op == "<":
            return ln < rn
        if e.op == "<=":
            return ln <= rn
        if e.op == ">":
            return ln > rn
        return ln >= rn

    def _tensor_fn(self, e: TensorFn) -> _Num:
        target = self.binding.get(e.target.name)
        if not isinstance(target, TensorV):
            raise EvalError(
                EvalErrorKind.WRONG_KIND,
                f"{e.fn} applies to tensors, got {type(target).__name__}",
            )
        index: Optional[int] = None
        if e.index is not None:
            index = _as_int(self.eval(e.index), "shape index")
        try:
            out = tensor_prop(target, e.fn, index)
        except ValueIndexError as exc:
            raise EvalError(EvalErrorKind.INDEX_OUT_OF_RANGE, str(exc))
        except ValueWrongKind as exc:
            raise EvalError(EvalErrorKind.WRONG_KIND, str(exc))
        if isinstance(out, float):
            return _to_fraction_exact(out, f"{e.fn} value")
        return out

    def _seq_value(self, ref: VarRef) -> Union[ListV, TupleV]:
        target = self.binding.get(ref.name)
        if not isinstance(target, (ListV, TupleV)):
            raise EvalError(
                EvalErrorKind.WRONG_KIND,
                f"sequence access on {type(target).__name__}",
            )
        return target

    def _tuple_index(self, e: TupleIndex) -> _Value:
        target = self._seq_value(e.target)
        index = _as_int(self.eval(e.index), "sequence index")
        n = len(target.items)
        resolved = index + n if index < 0 else index
        if not 0 <= resolved < n:
            raise EvalError(
                EvalErrorKind.INDEX_OUT_OF_RANGE,
                f"index {index} out of range for length {n}",
            )
        return _unwrap(target.items[resolved])

    def _quantifier(self, e: Union[ForAll, Exists]) -> bool:
        lo = _as_int(self.eval(e.lo), "quantifier bound")
        hi = _as_int(self.eval(e.hi), "quantifier bound")
        if lo > hi:
            return isinstance(e, ForAll)  # vacuous truth / empty existential
        span = hi - lo + 1
        if span > QUANTIFIER_SPAN_CAP:
            raise EvalError(
                EvalErrorKind.RANGE_TOO_LARGE, f"quantifier spans {span} > {QUANTIFIER_SPAN_CAP}"
            )
        forall = isinstance(e, ForAll)
        outer = self.scope.get(e.bound)
        try:
            for v in range(lo, hi + 1):
                self.scope[e.bound] = v
                result = _as_bool(self.eval(e.body), "quantifier body")
                if forall and not result:
                    return False
                if not forall and result:
                    return True
        finally:
            if outer is None:
                self.scope.pop(e.bound, None)
            else:
                self.scope[e.bound] = outer
        return forall


def eval_expr(e: Expr, binding: Binding) -> ConcreteValue:
    """Evaluate a typed expression under a binding. Raises EvalError."""
    out = _Eval(binding).eval(e)
    return wrap_value(out)


def wrap_value(out: _Value) -> ConcreteValue:
    if isinstance(out, bool):
        return BoolV(out)
    if isinstance(out, int):
        return IntV(out)
    if isinstance(out, Fraction):
        if out.denominator == 1:
            return IntV(int(out))
        return FloatV(float(out))
    if isinstance(out, str):
        return StrV(out)
    return out


def conforms(value: ConcreteValue, ty: TypeExpr) -> bool:
    """Does a runtime value conform to a declared type? Unions match when
    the value matches one arm."""
    if isinstance(ty, UnionType):
        return any(conforms(value, arm) for arm in ty.arms())
    if isinstance(ty, TensorType):
        return isinstance(value, TensorV)
    if isinstance(ty, SeqType):
        ctor_ok = isinstance(value, ListV if ty.ctor == "list" else TupleV)
        return ctor_ok and all(conforms(item, ty.elem) for item in value.items)  # type: ignore[union-attr]
    assert isinstance(ty, PrimType)
    if ty.kind == "int":
        return isinstance(value, IntV)
    if ty.kind == "float":
        return isinstance(value, FloatV)
    if ty.kind == "bool":
        return isinstance(value, BoolV)
    if ty.kind == "str":
        return isinstance(value, StrV)
    return isinstance(value, DtypeV)


def check_rule(rule: TypedRule, binding: Binding) -> CheckResult:
    """Holds iff the body evaluates to boolean true; evaluation errors are
    reported distinctly from Fails."""
    for name, ty in rule.bindings:
        value = binding.get(name)
        if value is None or not conforms(value, ty):
            return CheckResult(
                CheckStatus.ERRORS,
                EvalError(
                    EvalErrorKind.WRONG_KIND,
                    f"binding for {name!r} does not conform to {ty}",
                ),
            )
    try:
        out = _Eval(binding).eval(rule.body)
    except EvalError as exc:
        return CheckResult(CheckStatus.ERRORS, exc)
    if out is True:
        return CheckResult(CheckStatus.HOLDS)
    if out is False:
        return CheckResult(CheckStatus.FAILS)
    return CheckResult(
        CheckStatus.ERRORS,
        EvalError(EvalErrorKind.WRONG_KIND, f"rule body is not boolean: {out!r}"),
    )
