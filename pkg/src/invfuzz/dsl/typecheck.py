"""Type checker for rules.

Accepts exactly the judgments of the typing rules: primitive and union
variable access, tuple/list indexing and length, the zero- and one-argument
tensor functions, plus standard typing for literals, arithmetic,
comparisons, logical operators, quantifiers, and conditionals.

All errors in a rule are collected; checking never stops at the first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .ast import (
    And,
    Arith,
    BOOL,
    Cmp,
    Exists,
    Expr,
    FLOAT,
    ForAll,
    IfThen,
    INT,
    Literal,
    Or,
    PrimType,
    Rule,
    SeqType,
    TensorFn,
    TensorType,
    TupleIndex,
    TupleLen,
    TypeExpr,
    UnionType,
    VarRef,
    free_var_names,
)
from .errors import TypeErrorEntry, TypeErrorReport


def kindset(ty: TypeExpr) -> frozenset[str]:
    if isinstance(ty, PrimType):
        return frozenset({ty.kind})
    if isinstance(ty, TensorType):
        return frozenset({"tensor"})
    if isinstance(ty, SeqType):
        return frozenset({"seq"})
    if isinstance(ty, UnionType):
        return frozenset(a.kind for a in ty.arms())
    raise TypeError(ty)


_NUMERIC = frozenset({"int", "float"})
_ORDERABLE = _NUMERIC | {"dtype"}  # dtype orders by its integer code


@dataclass
class TypedRule:
    """A rule annotated with per-node types. Holds the original rule alive
    so identity-keyed annotations stay valid."""

    rule: Rule
    _types: dict[int, TypeExpr] = field(default_factory=dict, repr=False)
    warnings: list[TypeErrorEntry] = field(default_factory=list)

    def type_of(self, node: Expr) -> TypeExpr:
        return self._types[id(node)]

    @property
    def name(self) -> str:
        return self.rule.name

    @property
    def bindings(self) -> tuple[tuple[str, TypeExpr], ...]:
        return self.rule.bindings

    @property
    def body(self) -> Expr:
        return self.rule.body

    @property
    def arity(self) -> int:
        return len(self.rule.bindings)


class _Checker:
    def __init__(self, rule: Rule):
        self.rule = rule
        self.env: dict[str, TypeExpr] = dict(rule.bindings)
        self.errors: list[TypeErrorEntry] = []
        self.warnings: list[TypeErrorEntry] = []
        self.types: dict[int, TypeExpr] = {}

    def error(self, kind: str, message: str, node: Expr) -> None:
        self.errors.append(TypeErrorEntry(kind, message, node.span))

    def warn(self, kind: str, message: str, node: Expr) -> None:
        self.warnings.append(TypeErrorEntry(kind, message, node.span))

    def check(self, e: Expr) -> Optional[TypeExpr]:
        ty = self._infer(e)
        if ty is not None:
            self.types[id(e)] = ty
        return ty

    # Returns None when the node (or a subexpression) is ill-typed; parents
    # skip their own checks on None to avoid cascading reports.
    def _infer(self, e: Expr) -> Optional[TypeExpr]:
        if isinstance(e, Literal):
            v = e.value
            if isinstance(v, bool):
                return BOOL
            if isinstance(v, int):
                return INT
            if isinstance(v, Fraction):
                return FLOAT
            return PrimType("str")
        if isinstance(e, VarRef):
            ty = self.env.get(e.name)
            if ty is None:
                self.error("unbound-var", f"unbound variable {e.name!r}", e)
                return None
            return ty
        if isinstance(e, TensorFn):
            tty = self.check(e.target)
            ok = True
            if tty is not None and not isinstance(tty, TensorType):
                self.error(
                    "tensor-fn-on-nontensor",
                    f"{e.fn} applies to tensor variables, got {tty}",
                    e,
                )
                ok = False
            if e.index is not None:
                ity = self.check(e.index)
                if ity is not None and ity != INT:
                    self.error("index-not-int", f"shape index must be int, got {ity}", e.index)
                    ok = False
            return INT if ok else None
        if isinstance(e, TupleIndex):
            tty = self.check(e.target)
            ity = self.check(e.index)
            ok = True
            elem: Optional[TypeExpr] = None
            if tty is not None:
                if isinstance(tty, SeqType):
                    elem = tty.elem
                else:
                    self.error(
                        "tuple-access-on-nontuple",
                        f"indexing applies to list/tuple variables, got {tty}",
                        e,
                    )
                    ok = False
            if ity is not None and ity != INT:
                self.error("index-not-int", f"sequence index must be int, got {ity}", e.index)
                ok = False
            return elem if ok else None
        if isinstance(e, TupleLen):
            tty = self.check(e.target)
            if tty is not None and not isinstance(tty, SeqType):
                self.error(
                    "len-on-nontuple", f".len applies to list/tuple variables, got {tty}", e
                )
                return None
            return INT
        if isinstance(e, Arith):
            lty = self.check(e.lhs)
            rty = self.check(e.rhs)
            if lty is None or rty is None:
                return None
            lk, rk = kindset(lty), kindset(rty)
            if not (lk <= _NUMERIC and rk <= _NUMERIC):
                self.error(
                    "arith-nonnumeric",
                    f"arithmetic needs numeric operands, got {lty} {e.op} {rty}",
                    e,
                )
                return None
            return INT if lty == INT and rty == INT else FLOAT
        if isinstance(e, Cmp):
            lty = self.check(e.lhs)
            rty = self.check(e.rhs)
            if lty is None or rty is None:
                return None
            if not self._cmp_ok(e, lty, rty):
                return None
            return BOOL
        if isinstance(e, (And, Or)):
            lty = self.check(e.lhs)
            rty = self.check(e.rhs)
            ok = True
            for side, ty in ((e.lhs, lty), (e.rhs, rty)):
                if ty is not None and ty != BOOL:
                    self.error(
                        "logic-nonbool", f"logical operand must be bool, got {ty}", side
                    )
                    ok = False
            return BOOL if ok and lty is not None and rty is not None else None
        if isinstance(e, (ForAll, Exists)):
            ok = True
            for bound_expr in (e.lo, e.hi):
                bty = self.check(bound_expr)
                if bty is not None and bty != INT:
                    self.error(
                        "quantifier-bounds",
                        f"quantifier bounds must be int, got {bty}",
                        bound_expr,
                    )
                    ok = False
            if e.bound in self.env:
                self.error("shadowing", f"bound variable {e.bound!r} shadows a name", e)
                ok = False
                bty_saved = None
            else:
                bty_saved = object()
            self.env[e.bound] = INT
            body_ty = self.check(e.body)
            if bty_saved is not None:
                del self.env[e.bound]
            if body_ty is not None and body_ty != BOOL:
                self.error(
                    "quantifier-body", f"quantifier body must be bool, got {body_ty}", e.body
                )
                ok = False
            return BOOL if ok and body_ty is not None else None
        if isinstance(e, IfThen):
            cty = self.check(e.cond)
            if cty is not None and cty != BOOL:
                self.error("cond-nonbool", f"condition must be bool, got {cty}", e.cond)
            tty = self.check(e.then)
            if e.orelse is None:
                if tty is not None and tty != BOOL:
                    self.error(
                        "if-noelse-value",
                        "if without else is boolean-only; add an else branch",
                        e,
                    )
                    return None
                return BOOL if tty is not None and cty == BOOL else None
            ety = self.check(e.orelse)
            if tty is None or ety is None or cty != BOOL:
                return None
            joined = self._join(tty, ety)
            if joined is None:
                self.error(
                    "branch-mismatch", f"branches have incompatible types {tty} / {ety}", e
                )
            return joined
        raise TypeError(f"unknown expression node: {type(e).__name__}")

    def _cmp_ok(self, e: Cmp, lty: TypeExpr, rty: TypeExpr) -> bool:
        lk, rk = kindset(lty), kindset(rty)
        if "tensor" in lk or "tensor" in rk or "seq" in lk or "seq" in rk:
            self.error(
                "cmp-incompatible", f"cannot compare {lty} {e.op} {rty}", e
            )
            return False
        equality = e.op in ("=", "!=")
        str_literal = isinstance(e.lhs, Literal) and isinstance(e.lhs.value, str)
        str_literal = str_literal or (isinstance(e.rhs, Literal) and isinstance(e.rhs.value, str))
        if "str" in lk or "str" in rk:
            if not equality:
                self.error("string-cmp", "strings compare only with = and !=", e)
                return False
            if not ("str" in lk and "str" in rk):
                self.error("cmp-incompatible", f"cannot compare {lty} {e.op} {rty}", e)
                return False
            if str_literal and isinstance(e.lhs, Literal) and isinstance(e.rhs, Literal):
                self.error(
                    "string-cmp", "string literals compare against str variables only", e
                )
                return False
            return True
        if "bool" in lk or "bool" in rk:
            if lk == {"bool"} and rk == {"bool"} and equality:
                return True
            self.error("cmp-incompatible", f"cannot compare {lty} {e.op} {rty}", e)
            return False
        # numeric and dtype kinds remain; dtype compares by integer code
        if lk <= _ORDERABLE and rk <= _ORDERABLE:
            if not equality and ("dtype" in lk or "dtype" in rk):
                self.warn(
                    "dtype-ordering",
                    "ordering comparison on dtype values compares raw codes",
                    e,
                )
            return True
        self.error("cmp-incompatible", f"cannot compare {lty} {e.op} {rty}", e)
        return False

    @staticmethod
    def _join(a: TypeExpr, b: TypeExpr) -> Optional[TypeExpr]:
        if a == b:
            return a
        ka, kb = kindset(a), kindset(b)
        if ka <= _NUMERIC and kb <= _NUMERIC:
            return FLOAT
        return None


def type_check(rule: Rule) -> TypedRule:
    """Annotate every node with its type. Raises TypeErrorReport carrying
    every error found."""
    checker = _Checker(rule)
    body_ty = checker.check(rule.body)
    if body_ty is not None and body_ty != BOOL:
        checker.error("body-not-bool", f"rule body must be bool, got {body_ty}", rule.body)
    if checker.errors:
        raise TypeErrorReport(checker.errors, checker.warnings)
    return TypedRule(rule, checker.types, checker.warnings)


def free_variables(rule: Rule) -> list[tuple[str, TypeExpr]]:
    """Bound parameters actually used by the body, in binding order;
    quantifier-bound names excluded."""
    used = free_var_names(rule.body)
    return [(name, ty) for name, ty in rule.bindings if name in used]


def unused_bindings(rule: Rule) -> list[str]:
    used = free_var_names(rule.body)
    return [name for name, _ in rule.bindings if name not in used]
