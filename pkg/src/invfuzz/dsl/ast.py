"""AST for the rule language: types, expressions, and rules.

Nodes are frozen dataclasses. Source spans are carried for diagnostics but
excluded from equality, so a parsed rule compares equal to its re-parsed
rendering.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union


@dataclass(frozen=True)
class SourceSpan:
    """Byte offsets [start, end) into the source text."""

    start: int
    end: int


EMPTY_SPAN = SourceSpan(0, 0)

PRIM_KINDS = ("int", "float", "bool", "dtype", "str")


# ---------------------------------------------------------------------------
# Types


class TypeExpr:
    """Base class for binding types."""

    def is_numeric(self) -> bool:
        return False


@dataclass(frozen=True)
class PrimType(TypeExpr):
    kind: str  # one of PRIM_KINDS

    def __post_init__(self):
        if self.kind not in PRIM_KINDS:
            raise ValueError(f"not a primitive kind: {self.kind}")

    def is_numeric(self) -> bool:
        return self.kind in ("int", "float")

    def __str__(self) -> str:
        return self.kind


@dataclass(frozen=True)
class TensorType(TypeExpr):
    def __str__(self) -> str:
        return "tensor"


@dataclass(frozen=True)
class SeqType(TypeExpr):
    """list(elem) or tuple(elem); element may be a primitive or tensor."""

    ctor: str  # "list" | "tuple"
    elem: TypeExpr

    def __post_init__(self):
        if self.ctor not in ("list", "tuple"):
            raise ValueError(f"bad sequence constructor: {self.ctor}")
        if isinstance(self.elem, (SeqType, UnionType)):
            raise ValueError("sequence element must be a primitive or tensor")

    def __str__(self) -> str:
        return f"{self.ctor}({self.elem})"


@dataclass(frozen=True)
class UnionType(TypeExpr):
    left: TypeExpr
    right: TypeExpr

    def __post_init__(self):
        for arm in (self.left, self.right):
            if not isinstance(arm, PrimType):
                raise ValueError("union arms must be primitive types")

    def arms(self) -> tuple[PrimType, ...]:
        out: list[PrimType] = []
        for side in (self.left, self.right):
            if isinstance(side, UnionType):  # defensive; parser builds flat pairs
                out.extend(side.arms())
            else:
                out.append(side)  # type: ignore[arg-type]
        return tuple(out)

    def is_numeric(self) -> bool:
        return all(a.is_numeric() for a in self.arms())

    def __str__(self) -> str:
        return f"{self.left}|{self.right}"


INT = PrimType("int")
FLOAT = PrimType("float")
BOOL = PrimType("bool")
DTYPE = PrimType("dtype")
STR = PrimType("str")
TENSOR = TensorType()


# ---------------------------------------------------------------------------
# Expressions

LiteralValue = Union[int, Fraction, bool, str]

TENSOR_FNS = ("ndim", "shape", "dtype_", "min", "max")
ARITH_OPS = ("+", "-", "*", "/")
CMP_OPS = ("=", "!=", ">", "<", ">=", "<=")


@dataclass(frozen=True)
class Expr:
    span: SourceSpan = field(compare=False, kw_only=True, default=EMPTY_SPAN)


@dataclass(frozen=True, eq=False)
class Literal(Expr):
    value: LiteralValue

    # bool is an int subtype and Fraction(1) == 1, so plain field equality
    # would conflate `true`, `1`, and `1.0`; compare the value's type too.
    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Literal)
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    def __hash__(self) -> int:
        return hash((type(self.value).__name__, self.value))


@dataclass(frozen=True)
class VarRef(Expr):
    name: str


@dataclass(frozen=True)
class TensorFn(Expr):
    fn: str  # one of TENSOR_FNS
    target: VarRef
    index: Optional[Expr] = None  # exactly one index for shape, none otherwise


@dataclass(frozen=True)
class TupleIndex(Expr):
    target: VarRef
    index: Expr


@dataclass(frozen=True)
class TupleLen(Expr):
    target: VarRef


@dataclass(frozen=True)
class Arith(Expr):
    op: str  # one of ARITH_OPS
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Cmp(Expr):
    op: str  # one of CMP_OPS
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class And(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Or(Expr):
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class ForAll(Expr):
    bound: str
    lo: Expr
    hi: Expr
    body: Expr


@dataclass(frozen=True)
class Exists(Expr):
    bound: str
    lo: Expr
    hi: Expr
    body: Expr


@dataclass(frozen=True)
class IfThen(Expr):
    cond: Expr
    then: Expr
    orelse: Optional[Expr] = None


@dataclass(frozen=True)
class Rule:
    name: str
    description: str
    bindings: tuple[tuple[str, TypeExpr], ...]
    body: Expr

    def binding_type(self, name: str) -> TypeExpr:
        for var, ty in self.bindings:
            if var == name:
                return ty
        raise KeyError(name)


def walk(e: Expr):
    """Yield every node of an expression tree in preorder."""
    yield e
    if isinstance(e, TensorFn):
        yield e.target
        if e.index is not None:
            yield from walk(e.index)
    elif isinstance(e, TupleIndex):
        yield e.target
        yield from walk(e.index)
    elif isinstance(e, TupleLen):
        yield e.target
    elif isinstance(e, (Arith, Cmp, And, Or)):
        yield from walk(e.lhs)
        yield from walk(e.rhs)
    elif isinstance(e, (ForAll, Exists)):
        yield from walk(e.lo)
        yield from walk(e.hi)
        yield from walk(e.body)
    elif isinstance(e, IfThen):
        yield from walk(e.cond)
        yield from walk(e.then)
        if e.orelse is not None:
            yield from walk(e.orelse)


def free_var_names(e: Expr, bound: frozenset[str] = frozenset()) -> set[str]:
    """Variable names referenced by e, minus quantifier-bound names."""
    out: set[str] = set()
    if isinstance(e, VarRef):
        if e.name not in bound:
            out.add(e.name)
    elif isinstance(e, TensorFn):
        out |= free_var_names(e.target, bound)
        if e.index is not None:
            out |= free_var_names(e.index, bound)
    elif isinstance(e, TupleIndex):
        out |= free_var_names(e.target, bound)
        out |= free_var_names(e.index, bound)
    elif isinstance(e, TupleLen):
        out |= free_var_names(e.target, bound)
    elif isinstance(e, (Arith, Cmp, And, Or)):
        out |= free_var_names(e.lhs, bound)
        out |= free_var_names(e.rhs, bound)
    elif isinstance(e, (ForAll, Exists)):
        out |= free_var_names(e.lo, bound)
        out |= free_var_names(e.hi, bound)
        out |= free_var_names(e.body, bound | {e.bound})
    elif isinstance(e, IfThen):
        out |= free_var_names(e.cond, bound)
        out |= free_var_names(e.then, bound)
        if e.orelse is not None:
            out |= free_var_names(e.orelse, bound)
    return out
