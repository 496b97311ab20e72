"""Bounded constraint solving over symbolic input descriptors.

Typed rules applied to parameter tuples lower into quantifier-free formulas
over integer variables: one block per parameter (ndim, per-dim sizes, dtype
code, scaled value range for tensors; a single variable for scalars; length
plus element slots for sequences). Rationals are scaled to integers with a
fixed denominator so a single integer domain suffices.

The decision procedure is a deterministic backtracking search with interval
(bounds-consistency) propagation, which is complete for the conjunction /
disjunction trees of linear atoms produced by lowering. Identical inputs
always yield identical models; diversity comes from the caller's bucket and
blocking constraints, not from the solver.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Iterable, Optional, Sequence, Union

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
    VarRef,
    parse_type_text,
)
from .values import ApiSignature, DEFAULT_DTYPES, DtypeTable

RATIONAL_SCALE = 1024  # fixed denominator for range variables


# ---------------------------------------------------------------------------
# Bounds


@dataclass(frozen=True)
class Bounds:
    """Global constraints universal across APIs: dimension counts and sizes,
    scalar ranges, tensor byte budget, and the dtype/string domains."""

    max_ndim: int = 5
    dim_lo: int = 0
    dim_hi: int = 64
    int_lo: int = -(2**31)
    int_hi: int = 2**31 - 1
    float_abs: int = 10**6
    max_tensor_bytes: int = 2**20
    seq_cap: int = 6
    dtypes: DtypeTable = DEFAULT_DTYPES
    string_domains: tuple[tuple[str, tuple[str, ...]], ...] = ()

    def __post_init__(self):
        if self.max_ndim < 1:
            raise ValueError("max_ndim must be >= 1")
        if self.dim_lo < 0:
            raise ValueError("dimension sizes cannot be negative")

    def string_domain(self, param: str) -> Optional[tuple[str, ...]]:
        for name, dom in self.string_domains:
            if name == param:
                return dom
        return None

    @property
    def float_scaled_abs(self) -> int:
        return self.float_abs * RATIONAL_SCALE


# ---------------------------------------------------------------------------
# Formulas


@dataclass(frozen=True)
class LinExpr:
    """Sum of coeff*var terms plus a rational constant."""

    coeffs: tuple[tuple[str, Fraction], ...]
    const: Fraction = Fraction(0)

    @staticmethod
    def of_const(c: Union[int, Fraction]) -> "LinExpr":
        return LinExpr((), Fraction(c))

    @staticmethod
    def of_var(name: str, coeff: Union[int, Fraction] = 1) -> "LinExpr":
        return LinExpr(((name, Fraction(coeff)),))

    @property
    def is_const(self) -> bool:
        return not self.coeffs

    def __add__(self, other: "LinExpr") -> "LinExpr":
        merged = dict(self.coeffs)
        for var, c in other.coeffs:
            c2 = merged.get(var, Fraction(0)) + c
            if c2:
                merged[var] = c2
            else:
                merged.pop(var, None)
        return LinExpr(tuple(sorted(merged.items())), self.const + other.const)

    def __neg__(self) -> "LinExpr":
        return LinExpr(tuple((v, -c) for v, c in self.coeffs), -self.const)

    def __sub__(self, other: "LinExpr") -> "LinExpr":
        return self + (-other)

    def scale(self, k: Fraction) -> "LinExpr":
        if k == 0:
            return LinExpr.of_const(0)
        return LinExpr(tuple((v, c * k) for v, c in self.coeffs), self.const * k)


class Formula:
    pass


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


TRUE = TrueF()
FALSE = FalseF()


@dataclass(frozen=True)
class Atom(Formula):
    """expr OP 0 with OP in {<=, <, ==, !=} over integer-valued variables."""

    op: str
    expr: LinExpr

    def normalized(self) -> "IntAtom":
        denoms = [c.denominator for _, c in self.expr.coeffs] + [self.expr.const.denominator]
        m = math.lcm(*denoms) if denoms else 1
        coeffs = tuple((v, int(c * m)) for v, c in self.expr.coeffs)
        const = int(self.expr.const * m)
        op = self.op
        if op == "<":  # integers: e < 0 <=> e + 1 <= 0
            op, const = "<=", const + 1
        return IntAtom(op, coeffs, const)


@dataclass(frozen=True)
class ProdCap(Formula):
    """Product of nonnegative variables bounded above: prod(vars) <= bound."""

    vars: tuple[str, ...]
    bound: int


@dataclass(frozen=True)
class Conj(Formula):
    items: tuple[Formula, ...]


@dataclass(frozen=True)
class Disj(Formula):
    items: tuple[Formula, ...]


def conj(items: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for f in items:
        if isinstance(f, TrueF):
            continue
        if isinstance(f, FalseF):
            return FALSE
        if isinstance(f, Conj):
            flat.extend(f.items)
        else:
            flat.append(f)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return Conj(tuple(flat))


def disj(items: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for f in items:
        if isinstance(f, FalseF):
            continue
        if isinstance(f, TrueF):
            return TRUE
        if isinstance(f, Disj):
            flat.extend(f.items)
        else:
            flat.append(f)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Disj(tuple(flat))


def neg(f: Formula) -> Formula:
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    if isinstance(f, Atom):
        if f.op == "<=":
            return Atom("<", (-f.expr))
        if f.op == "<":
            return Atom("<=", (-f.expr))
        if f.op == "==":
            return Atom("!=", f.expr)
        return Atom("==", f.expr)
    if isinstance(f, Conj):
        return disj(neg(i) for i in f.items)
    if isinstance(f, Disj):
        return conj(neg(i) for i in f.items)
    raise ValueError(f"cannot negate {type(f).__name__}")


def atom_le(lhs: LinExpr, rhs: LinExpr) -> Formula:
    return Atom("<=", lhs - rhs)


def atom_eq(lhs: LinExpr, rhs: LinExpr) -> Formula:
    return Atom("==", lhs - rhs)


@dataclass(frozen=True)
class IntAtom:
    """Atom with integer coefficients, op in {<=, ==, !=}: sum + const OP 0."""

    op: str
    coeffs: tuple[tuple[str, int], ...]
    const: int


def eval_formula(f: Formula, model: dict[str, int]) -> bool:
    """Truth of a formula under a total integer assignment."""
    if isinstance(f, TrueF):
        return True
    if isinstance(f, FalseF):
        return False
    if isinstance(f, Atom):
        a = f.normalized()
        total = a.const + sum(c * model[v] for v, c in a.coeffs)
        if a.op == "<=":
            return total <= 0
        if a.op == "==":
            return total == 0
        return total != 0
    if isinstance(f, ProdCap):
        prod = 1
        for v in f.vars:
            prod *= model[v]
        return prod <= f.bound
    if isinstance(f, Conj):
        return all(eval_formula(i, model) for i in f.items)
    if isinstance(f, Disj):
        return any(eval_formula(i, model) for i in f.items)
    raise TypeError(type(f).__name__)


# ---------------------------------------------------------------------------
# Layout


class UnsupportedParamType(Exception):
    pass


@dataclass(frozen=True)
class VarSpec:
    name: str
    lo: int
    hi: int
    vclass: str  # "ndim" | "dim" | "dtype" | "range" | "int" | "float" | "bool" | "enum" | "len"
    param: str
    prop: str
    index: Optional[int] = None


@dataclass
class SymbolicLayout:
    sig: ApiSignature
    bounds: Bounds
    vars: list[VarSpec]
    base: Formula
    param_types: dict[str, TypeExpr]
    string_domains: dict[str, tuple[str, ...]]

    def __post_init__(self):
        self.by_name = {v.name: v for v in self.vars}

    def var_names(self) -> list[str]:
        return [v.name for v in self.vars]

    def tensor_block(self, param: str) -> dict[str, str]:
        b = self.bounds
        names = {"nd": f"{param}.nd", "d": f"{param}.d", "lo": f"{param}.lo", "hi": f"{param}.hi"}
        for i in range(b.max_ndim):
            names[f"s{i}"] = f"{param}.s[{i}]"
        return names


def build_layout(sig: ApiSignature, bounds: Bounds = Bounds()) -> SymbolicLayout:
    """Symbolic variables plus the base formula implementing the global
    bounds. Variable naming is deterministic: `<param>.<prop>[i]`."""
    vars_: list[VarSpec] = []
    base: list[Formula] = []
    param_types: dict[str, TypeExpr] = {}
    string_domains: dict[str, tuple[str, ...]] = {}
    b = bounds

    for p in sig.params:
        ty = parse_type_text(p.type_text)
        param_types[p.name] = ty
        if isinstance(ty, TensorType):
            nd = f"{p.name}.nd"
            vars_.append(VarSpec(nd, 0, b.max_ndim, "ndim", p.name, "nd"))
            svars = []
            for i in range(b.max_ndim):
                sv = f"{p.name}.s[{i}]"
                svars.append(sv)
                vars_.append(VarSpec(sv, b.dim_lo, b.dim_hi, "dim", p.name, "s", i))
                # slots at or beyond nd are pinned to 1 so products stay exact
                base.append(
                    disj(
                        [
                            Atom("<=", LinExpr.of_const(i + 1) - LinExpr.of_var(nd)),
                            Atom("==", LinExpr.of_var(sv) - LinExpr.of_const(1)),
                        ]
                    )
                )
            dvar = f"{p.name}.d"
            vars_.append(VarSpec(dvar, 0, len(b.dtypes) - 1, "dtype", p.name, "d"))
            lo_v, hi_v = f"{p.name}.lo", f"{p.name}.hi"
            vars_.append(VarSpec(lo_v, -b.float_scaled_abs, b.float_scaled_abs, "range", p.name, "lo"))
            vars_.append(VarSpec(hi_v, -b.float_scaled_abs, b.float_scaled_abs, "range", p.name, "hi"))
            base.append(Atom("<=", LinExpr.of_var(lo_v) - LinExpr.of_var(hi_v)))
            for entry in b.dtypes.entries:
                cap = b.max_tensor_bytes // entry.byte_width
                base.append(
                    disj(
                        [
                            Atom("!=", LinExpr.of_var(dvar) - LinExpr.of_const(entry.code)),
                            ProdCap(tuple(svars), cap),
                        ]
                    )
                )
        elif isinstance(ty, PrimType):
            v = f"{p.name}.v"
            if ty.kind == "int":
                vars_.append(VarSpec(v, b.int_lo, b.int_hi, "int", p.name, "v"))
            elif ty.kind == "float":
                vars_.append(
                    VarSpec(v, -b.float_scaled_abs, b.float_scaled_abs, "float", p.name, "v")
                )
            elif ty.kind == "bool":
                vars_.append(VarSpec(v, 0, 1, "bool", p.name, "v"))
            elif ty.kind == "dtype":
                vars_.append(VarSpec(v, 0, len(b.dtypes) - 1, "dtype", p.name, "v"))
            else:  # str: finite per-API enumeration
                dom = b.string_domain(p.name)
                if not dom:
                    raise UnsupportedParamType(
                        f"string parameter {p.name!r} needs an enumerated domain"
                    )
                string_domains[p.name] = dom
                vars_.append(VarSpec(v, 0, len(dom) - 1, "enum", p.name, "v"))
        elif isinstance(ty, SeqType):
            if not isinstance(ty.elem, PrimType) or ty.elem.kind == "str":
                raise UnsupportedParamType(
                    f"sequence parameter {p.name!r} of {ty} has no symbolic layout"
                )
            ln = f"{p.name}.len"
            vars_.append(VarSpec(ln, 0, b.seq_cap, "len", p.name, "len"))
            for i in range(b.seq_cap):
                ev = f"{p.name}.e[{i}]"
                if ty.elem.kind == "int":
                    vars_.append(VarSpec(ev, b.int_lo, b.int_hi, "int", p.name, "e", i))
                elif ty.elem.kind == "float":
                    vars_.append(
                        VarSpec(ev, -b.float_scaled_abs, b.float_scaled_abs, "float", p.name, "e", i)
                    )
                elif ty.elem.kind == "bool":
                    vars_.append(VarSpec(ev, 0, 1, "bool", p.name, "e", i))
                else:  # dtype elements
                    vars_.append(VarSpec(ev, 0, len(b.dtypes) - 1, "dtype", p.name, "e", i))
                base.append(
                    disj(
                        [
                            Atom("<=", LinExpr.of_const(i + 1) - LinExpr.of_var(ln)),
                            Atom("==", LinExpr.of_var(ev)),
                        ]
                    )
                )
        else:
            raise UnsupportedParamType(f"parameter {p.name!r} of type {ty} is unsupported")

    return SymbolicLayout(sig, bounds, vars_, conj(base), param_types, string_domains)


# ---------------------------------------------------------------------------
# Lowering


class UnsupportedKind(Enum):
    NONLINEAR_TERM = "NonlinearTerm"
    STRING_OP_UNSUPPORTED = "StringOpUnsupported"
    INDEX_UNBOUNDED = "IndexUnbounded"


class LoweringUnsupported(Exception):
    def __init__(self, kind: UnsupportedKind, message: str):
        self.kind = kind
        super().__init__(f"{kind.value}: {message}")


@dataclass
class LoweredRule:
    rule: TypedRule
    params: tuple[str, ...]
    formula: Formula
    needs_recheck: bool  # approximated min/max atoms must be re-checked after sampling
    notes: list[str] = field(default_factory=list)


_CONST_SPAN_CAP = 128


@dataclass(frozen=True)
class _Alt:
    """One case of a numeric expression: value `expr` under `conds`."""

    conds: tuple[Formula, ...]
    expr: LinExpr


class _Lowerer:
    def __init__(self, rule: TypedRule, params: Sequence[str], layout: SymbolicLayout):
        self.rule = rule
        self.layout = layout
        self.bounds = layout.bounds
        if len(params) != len(rule.bindings):
            raise ValueError("parameter tuple arity mismatch")
        self.var_param = {v: p for (v, _), p in zip(rule.bindings, params)}
        self.var_type = dict(rule.bindings)
        self.bound_env: dict[str, int] = {}
        self.needs_recheck = False
        self.notes: list[str] = []

    # -- interval analysis ---------------------------------------------------

    def _expr_range(self, e: LinExpr) -> tuple[Fraction, Fraction]:
        lo = hi = e.const
        for v, c in e.coeffs:
            spec = self.layout.by_name[v]
            if c >= 0:
                lo += c * spec.lo
                hi += c * spec.hi
            else:
                lo += c * spec.hi
                hi += c * spec.lo
        return lo, hi

    # -- numeric lowering ------------------------------------------------------

    def lower_num(self, e: Expr) -> list[_Alt]:
        if isinstance(e, Literal):
            if isinstance(e.value, bool) or isinstance(e.value, str):
                raise LoweringUnsupported(
                    UnsupportedKind.STRING_OP_UNSUPPORTED,
                    "non-numeric literal in numeric position",
                )
            return [_Alt((), LinExpr.of_const(e.value))]
        if isinstance(e, VarRef):
            if e.name in self.bound_env:
                return [_Alt((), LinExpr.of_const(self.bound_env[e.name]))]
            param = self.var_param[e.name]
            ty = self.var_type[e.name]
            if isinstance(ty, PrimType) and ty.kind == "int":
                return [_Alt((), LinExpr.of_var(f"{param}.v"))]
            if isinstance(ty, PrimType) and ty.kind == "float":
                return [_Alt((), LinExpr.of_var(f"{param}.v", Fraction(1, RATIONAL_SCALE)))]
            if isinstance(ty, PrimType) and ty.kind == "dtype":
                return [_Alt((), LinExpr.of_var(f"{param}.v"))]
            raise LoweringUnsupported(
                UnsupportedKind.NONLINEAR_TERM,
                f"variable {e.name!r} of type {ty} in numeric position",
            )
        if isinstance(e, TensorFn):
            param = self.var_param[e.target.name]
            names = self.layout.tensor_block(param)
            if e.fn == "ndim":
                return [_Alt((), LinExpr.of_var(names["nd"]))]
            if e.fn == "dtype_":
                return [_Alt((), LinExpr.of_var(names["d"]))]
            if e.fn in ("min", "max"):
                var = names["lo"] if e.fn == "min" else names["hi"]
                return [_Alt((), LinExpr.of_var(var, Fraction(1, RATIONAL_SCALE)))]
            assert e.index is not None
            return self._resolve_slots(
                self.lower_num(e.index),
                count=self.bounds.max_ndim,
                len_expr=LinExpr.of_var(names["nd"]),
                slot=lambda j: LinExpr.of_var(names[f"s{j}"]),
            )
        if isinstance(e, TupleIndex):
            param = self.var_param[e.target.name]
            return self._resolve_slots(
                self.lower_num(e.index),
                count=self.bounds.seq_cap,
                len_expr=LinExpr.of_var(f"{param}.len"),
                slot=lambda j: self._elem_expr(param, j),
            )
        if isinstance(e, TupleLen):
            param = self.var_param[e.target.name]
            return [_Alt((), LinExpr.of_var(f"{param}.len"))]
        if isinstance(e, Arith):
            lhs = self.lower_num(e.lhs)
            rhs = self.lower_num(e.rhs)
            out: list[_Alt] = []
            for la in lhs:
                for ra in rhs:
                    out.append(self._combine(e.op, la, ra, e))
            return out
        if isinstance(e, IfThen):
            if e.orelse is None:
                raise LoweringUnsupported(
                    UnsupportedKind.NONLINEAR_TERM, "value-position if without else"
                )
            cond = self.lower_bool(e.cond)
            ncond = neg(cond)
            out = []
            for alt in self.lower_num(e.then):
                out.append(_Alt((cond, *alt.conds), alt.expr))
            for alt in self.lower_num(e.orelse):
                out.append(_Alt((ncond, *alt.conds), alt.expr))
            return out
        raise LoweringUnsupported(
            UnsupportedKind.NONLINEAR_TERM, f"{type(e).__name__} in numeric position"
        )

    def _elem_expr(self, param: str, j: int) -> LinExpr:
        spec = self.layout.by_name[f"{param}.e[{j}]"]
        if spec.vclass == "float":
            return LinExpr.of_var(spec.name, Fraction(1, RATIONAL_SCALE))
        return LinExpr.of_var(spec.name)

    def _resolve_slots(self, index_alts, count, len_expr, slot) -> list[_Alt]:
        """Indexed access becomes a disjunction over feasible concrete slots;
        negative indices resolve right-relative, as in the evaluator."""
        out: list[_Alt] = []
        for alt in index_alts:
            idx = alt.expr
            if idx.is_const:
                k = idx.const
                if k.denominator != 1:
                    continue  # non-integral constant index can never resolve
                k = int(k)
                if 0 <= k < count:
                    guard = Atom("<=", LinExpr.of_const(k + 1) - len_expr)
                    out.append(_Alt((*alt.conds, guard), slot(k)))
                elif -count <= k < 0:
                    for j in range(count):
                        nd_eq = Atom("==", len_expr - LinExpr.of_const(j - k))
                        if 0 <= j - k <= count:
                            out.append(_Alt((*alt.conds, nd_eq), slot(j)))
                # |k| beyond count: no feasible slot; alternative drops out
                continue
            ilo, ihi = self._expr_range(idx)
            if ilo > count or ihi < -count:
                continue
            for j in range(count):
                pos = Atom("==", idx - LinExpr.of_const(j))
                active = Atom("<=", LinExpr.of_const(j + 1) - len_expr)
                out.append(_Alt((*alt.conds, pos, active), slot(j)))
                neg_guard = Atom("<=", idx + LinExpr.of_const(1))  # idx <= -1
                wrap = Atom("==", idx + len_expr - LinExpr.of_const(j))
                out.append(_Alt((*alt.conds, wrap, neg_guard, active), slot(j)))
        return out

    def _combine(self, op: str, la: _Alt, ra: _Alt, node: Arith) -> _Alt:
        conds = (*la.conds, *ra.conds)
        if op == "+":
            return _Alt(conds, la.expr + ra.expr)
        if op == "-":
            return _Alt(conds, la.expr - ra.expr)
        if op == "*":
            if ra.expr.is_const:
                return _Alt(conds, la.expr.scale(ra.expr.const))
            if la.expr.is_const:
                return _Alt(conds, ra.expr.scale(la.expr.const))
            raise LoweringUnsupported(
                UnsupportedKind.NONLINEAR_TERM, "product of two variable terms"
            )
        # division: only by a nonzero literal (multiply through)
        if not ra.expr.is_const or ra.expr.const == 0:
            raise LoweringUnsupported(
                UnsupportedKind.NONLINEAR_TERM, "division by a variable or zero"
            )
        return _Alt(conds, la.expr.scale(Fraction(1) / ra.expr.const))

    # -- boolean lowering ----------------------------------------------------

    def lower_bool(self, e: Expr) -> Formula:
        if isinstance(e, Literal):
            if isinstance(e.value, bool):
                return TRUE if e.value else FALSE
            raise LoweringUnsupported(
                UnsupportedKind.STRING_OP_UNSUPPORTED, "non-boolean literal in boolean position"
            )
        if isinstance(e, VarRef):
            ty = self.var_type.get(e.name)
            if isinstance(ty, PrimType) and ty.kind == "bool":
                param = self.var_param[e.name]
                return Atom("==", LinExpr.of_var(f"{param}.v") - LinExpr.of_const(1))
            raise LoweringUnsupported(
                UnsupportedKind.NONLINEAR_TERM, f"variable {e.name!r} in boolean position"
            )
        if isinstance(e, And):
            return conj([self.lower_bool(e.lhs), self.lower_bool(e.rhs)])
        if isinstance(e, Or):
            return disj([self.lower_bool(e.lhs), self.lower_bool(e.rhs)])
        if isinstance(e, IfThen):
            cond = self.lower_bool(e.cond)
            then = self.lower_bool(e.then)
            if e.orelse is None:
                return disj([neg(cond), then])
            orelse = self.lower_bool(e.orelse)
            return conj([disj([neg(cond), then]), disj([cond, orelse])])
        if isinstance(e, (ForAll, Exists)):
            return self._lower_quantifier(e)
        if isinstance(e, Cmp):
            return self._lower_cmp(e)
        raise LoweringUnsupported(
            UnsupportedKind.NONLINEAR_TERM, f"{type(e).__name__} in boolean position"
        )

    def _lower_quantifier(self, e: Union[ForAll, Exists]) -> Formula:
        lo_alts = self.lower_num(e.lo)
        hi_alts = self.lower_num(e.hi)
        if len(lo_alts) != 1 or len(hi_alts) != 1 or lo_alts[0].conds or hi_alts[0].conds:
            raise LoweringUnsupported(
                UnsupportedKind.INDEX_UNBOUNDED, "quantifier bounds with case splits"
            )
        lo_e, hi_e = lo_alts[0].expr, hi_alts[0].expr
        if lo_e.is_const and hi_e.is_const:
            if lo_e.const.denominator != 1 or hi_e.const.denominator != 1:
                raise LoweringUnsupported(
                    UnsupportedKind.INDEX_UNBOUNDED, "non-integral quantifier bounds"
                )
            lo_k, hi_k = int(lo_e.const), int(hi_e.const)
            if hi_k - lo_k + 1 > _CONST_SPAN_CAP:
                raise LoweringUnsupported(
                    UnsupportedKind.INDEX_UNBOUNDED,
                    f"constant quantifier span {hi_k - lo_k + 1} exceeds {_CONST_SPAN_CAP}",
                )
            window = range(lo_k, hi_k + 1)
            guards_needed = False
        else:
            lo_min, _ = self._expr_range(lo_e)
            _, hi_max = self._expr_range(hi_e)
            if lo_min < 0 or hi_max > self.bounds.max_ndim - 1:
                raise LoweringUnsupported(
                    UnsupportedKind.INDEX_UNBOUNDED,
                    "variable quantifier bounds outside the dimension window",
                )
            window = range(0, self.bounds.max_ndim)
            guards_needed = True
        parts: list[Formula] = []
        outer = self.bound_env.get(e.bound)
        # existentials expand largest witness first: the search prefers early
        # disjuncts, and degenerate witnesses (k = 0 products, 0-size dims)
        # make poor default models
        order = reversed(window) if isinstance(e, Exists) else window
        for j in order:
            self.bound_env[e.bound] = j
            body = self.lower_bool(e.body)
            if guards_needed:
                in_lo = atom_le(lo_e, LinExpr.of_const(j))  # lo <= j
                in_hi = atom_le(LinExpr.of_const(j), hi_e)  # j <= hi
                if isinstance(e, ForAll):
                    parts.append(disj([neg(in_lo), neg(in_hi), body]))
                else:
                    parts.append(conj([in_lo, in_hi, body]))
            else:
                parts.append(body)
        if outer is None:
            self.bound_env.pop(e.bound, None)
        else:
            self.bound_env[e.bound] = outer
        return conj(parts) if isinstance(e, ForAll) else disj(parts)

    def _lower_cmp(self, e: Cmp) -> Formula:
        if self._is_strish(e.lhs) or self._is_strish(e.rhs):
            return self._lower_str_cmp(e)
        if self._is_boolish(e.lhs) or self._is_boolish(e.rhs):
            lhs, rhs = self.lower_bool(e.lhs), self.lower_bool(e.rhs)
            both = conj([lhs, rhs])
            neither = conj([neg(lhs), neg(rhs)])
            same = disj([both, neither])
            if e.op == "=":
                return same
            if e.op == "!=":
                return neg(same)
            raise LoweringUnsupported(
                UnsupportedKind.NONLINEAR_TERM, "ordering comparison on booleans"
            )
        lhs_alts = self.lower_num(e.lhs)
        rhs_alts = self.lower_num(e.rhs)
        cases: list[Formula] = []
        for la in lhs_alts:
            for ra in rhs_alts:
                cases.append(self._atom_case(e.op, la, ra))
        return disj(cases)

    def _atom_case(self, op: str, la: _Alt, ra: _Alt) -> Formula:
        expr = la.expr - ra.expr
        if op == "=":
            atom, extra = self._classify(expr, "==")
        elif op == "!=":
            atom, extra = self._classify(expr, "!=")
        elif op == "<":
            atom, extra = self._classify(expr, "<")
        elif op == "<=":
            atom, extra = self._classify(expr, "<=")
        elif op == ">":
            atom, extra = self._classify(-expr, "<")
        else:  # >=
            atom, extra = self._classify(-expr, "<=")
        return conj([*la.conds, *ra.conds, atom, *extra])

    def _classify(self, expr: LinExpr, op: str) -> tuple[Formula, list[Formula]]:
        """Build the atom `expr OP 0` and account for min/max substitutions.

        Range variables stand in for sampled element extrema: lo underestimates
        the true min, hi overestimates the true max. An occurrence is exact in
        direction when its coefficient keeps the atom monotone; equality and
        disequality pin lo == hi (a constant tensor), and other directions are
        re-checked at concretization.
        """
        extras: list[Formula] = []
        touched: list[VarSpec] = [
            self.layout.by_name[v] for v, _ in expr.coeffs if self.layout.by_name[v].vclass == "range"
        ]
        if touched:
            if op in ("==", "!="):
                for spec in touched:
                    names = self.layout.tensor_block(spec.param)
                    extras.append(
                        Atom("==", LinExpr.of_var(names["lo"]) - LinExpr.of_var(names["hi"]))
                    )
                self.notes.append(f"{op} over min/max pins a constant range for soundness")
            else:
                for v, c in expr.coeffs:
                    spec = self.layout.by_name[v]
                    if spec.vclass != "range":
                        continue
                    is_min = spec.prop == "lo"
                    sound = (c <= 0) if is_min else (c >= 0)
                    if not sound:
                        self.needs_recheck = True
                        self.notes.append(
                            f"approximated {'min' if is_min else 'max'} bound on {spec.param}"
                        )
        return Atom(op, expr), extras

    def _is_strish(self, e: Expr) -> bool:
        if isinstance(e, Literal) and isinstance(e.value, str):
            return True
        if isinstance(e, VarRef):
            ty = self.var_type.get(e.name)
            return isinstance(ty, PrimType) and ty.kind == "str"
        return False

    def _is_boolish(self, e: Expr) -> bool:
        if isinstance(e, Literal) and isinstance(e.value, bool):
            return True
        if isinstance(e, VarRef):
            ty = self.var_type.get(e.name)
            if isinstance(ty, PrimType) and ty.kind == "bool":
                return True
        return isinstance(e, (And, Or, Cmp, ForAll, Exists, IfThen))

    def _lower_str_cmp(self, e: Cmp) -> Formula:
        if e.op not in ("=", "!="):
            raise LoweringUnsupported(
                UnsupportedKind.STRING_OP_UNSUPPORTED, "ordering comparison on strings"
            )

        def classify(side: Expr):
            if isinstance(side, Literal) and isinstance(side.value, str):
                return ("lit", side.value)
            if isinstance(side, VarRef):
                param = self.var_param.get(side.name)
                if param is not None and param in self.layout.string_domains:
                    return ("var", param)
            raise LoweringUnsupported(
                UnsupportedKind.STRING_OP_UNSUPPORTED, "unsupported string operand"
            )

        l_kind, l_val = classify(e.lhs)
        r_kind, r_val = classify(e.rhs)
        if l_kind == "lit" and r_kind == "lit":
            same = l_val == r_val
            want = same if e.op == "=" else not same
            return TRUE if want else FALSE
        if l_kind == "lit":
            l_kind, l_val, r_kind, r_val = r_kind, r_val, l_kind, l_val
        lvar = LinExpr.of_var(f"{l_val}.v")
        if r_kind == "lit":
            dom = self.layout.string_domains[l_val]  # type: ignore[index]
            if r_val not in dom:
                return FALSE if e.op == "=" else TRUE
            idx = dom.index(r_val)  # type: ignore[arg-type]
            op = "==" if e.op == "=" else "!="
            return Atom(op, lvar - LinExpr.of_const(idx))
        ldom = self.layout.string_domains[l_val]  # type: ignore[index]
        rdom = self.layout.string_domains[r_val]  # type: ignore[index]
        rvar = LinExpr.of_var(f"{r_val}.v")
        if ldom == rdom:
            op = "==" if e.op == "=" else "!="
            return Atom(op, lvar - rvar)
        pairs = [
            conj([Atom("==", lvar - LinExpr.of_const(i)), Atom("==", rvar - LinExpr.of_const(j))])
            for i, s in enumerate(ldom)
            for j, t in enumerate(rdom)
            if s == t
        ]
        eq = disj(pairs)
        return eq if e.op == "=" else neg(eq)


def lower_rule(
    rule: TypedRule, params: Sequence[str], layout: SymbolicLayout, bounds: Optional[Bounds] = None
) -> LoweredRule:
    """Lower a typed rule applied to a parameter tuple. Raises
    LoweringUnsupported for rules outside the linear bounded fragment; such
    rules stay evaluator-checkable but are excluded from generation."""
    lowerer = _Lowerer(rule, params, layout)
    formula = lowerer.lower_bool(rule.body)
    return LoweredRule(
        rule=rule,
        params=tuple(params),
        formula=formula,
        needs_recheck=lowerer.needs_recheck,
        notes=lowerer.notes,
    )


# ---------------------------------------------------------------------------
# Decision procedure


class SolveStatus(Enum):
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


@dataclass
class SolveResult:
    status: SolveStatus
    model: Optional[dict[str, int]] = None

    @property
    def is_sat(self) -> bool:
        return self.status is SolveStatus.SAT


class _Timeout(Exception):
    pass


class _Conflict(Exception):
    pass


def _floor_div(a: int, b: int) -> int:
    return a // b


def _ceil_div(a: int, b: int) -> int:
    return -((-a) // b)


# Converted-node tags. Formulas are converted once into trees with integer
# atoms at the leaves; the cache is keyed by object identity and keeps a
# reference so ids stay stable. Base and lowered-rule formulas are reused
# across thousands of solves, so this conversion dominates throughput.
_T_TRUE, _T_FALSE, _T_ATOM, _T_PROD, _T_CONJ, _T_DISJ = 0, 1, 2, 3, 4, 5

_CONVERT_CACHE: dict[int, tuple[Formula, tuple]] = {}


def _convert(f: Formula) -> tuple:
    cached = _CONVERT_CACHE.get(id(f))
    if cached is not None and cached[0] is f:
        return cached[1]
    if isinstance(f, TrueF):
        node: tuple = (_T_TRUE,)
    elif isinstance(f, FalseF):
        node = (_T_FALSE,)
    elif isinstance(f, Atom):
        a = f.normalized()
        node = (_T_ATOM, a.op, a.coeffs, a.const)
    elif isinstance(f, ProdCap):
        node = (_T_PROD, f.vars, f.bound)
    elif isinstance(f, Conj):
        node = (_T_CONJ, tuple(_convert(i) for i in f.items))
    elif isinstance(f, Disj):
        node = (_T_DISJ, tuple(_convert(i) for i in f.items))
    else:
        raise TypeError(type(f).__name__)
    _CONVERT_CACHE[id(f)] = (f, node)
    return node


class _State:
    __slots__ = ("domains", "holes", "atoms", "prods", "disjs")

    def __init__(self, domains, holes, atoms, prods, disjs):
        self.domains: dict[str, tuple[int, int]] = domains
        self.holes: dict[str, frozenset[int]] = holes
        self.atoms: list[tuple] = atoms  # (_T_ATOM, op, coeffs, const)
        self.prods: list[tuple] = prods  # (_T_PROD, vars, bound)
        self.disjs: list[tuple] = disjs  # (_T_DISJ, children)

    def clone(self) -> "_State":
        return _State(
            dict(self.domains),
            dict(self.holes),
            list(self.atoms),
            list(self.prods),
            list(self.disjs),
        )


class _Solver:
    def __init__(self, var_specs: Sequence[VarSpec], timeout_s: float):
        self.order = [v.name for v in var_specs]
        self.rank = {name: i for i, name in enumerate(self.order)}
        # rank and length variables shape every guard; fixing them first
        # collapses quantifier expansions and slot case-splits to units
        self.structural = [v.name for v in var_specs if v.vclass in ("ndim", "len")]
        self.deadline = time.monotonic() + timeout_s
        self.nodes = 0

    # -- state assembly ------------------------------------------------------

    def initial_state(self, var_specs: Sequence[VarSpec], formulas: Iterable[Formula]) -> _State:
        state = _State(
            {v.name: (v.lo, v.hi) for v in var_specs}, {}, [], [], []
        )
        for f in formulas:
            self._assert(state, _convert(f))
        return state

    def _assert(self, state: _State, node: tuple) -> None:
        tag = node[0]
        if tag == _T_TRUE:
            return
        if tag == _T_FALSE:
            raise _Conflict()
        if tag == _T_ATOM:
            state.atoms.append(node)
        elif tag == _T_PROD:
            state.prods.append(node)
        elif tag == _T_CONJ:
            for item in node[1]:
                self._assert(state, item)
        else:
            # interned conversion makes duplicates (symmetric invariants,
            # repeated encodings) identical objects; assert each once
            if not any(d is node for d in state.disjs):
                state.disjs.append(node)

    # -- propagation -----------------------------------------------------------

    @staticmethod
    def _shrink(state: _State, var: str, lo: int, hi: int) -> bool:
        cur_lo, cur_hi = state.domains[var]
        new_lo, new_hi = max(cur_lo, lo), min(cur_hi, hi)
        holes = state.holes.get(var)
        if holes:
            while new_lo <= new_hi and new_lo in holes:
                new_lo += 1
            while new_lo <= new_hi and new_hi in holes:
                new_hi -= 1
        if new_lo > new_hi:
            raise _Conflict()
        if (new_lo, new_hi) != (cur_lo, cur_hi):
            state.domains[var] = (new_lo, new_hi)
            return True
        return False

    def _exclude(self, state: _State, var: str, value: int) -> bool:
        lo, hi = state.domains[var]
        if value < lo or value > hi:
            return False
        if lo == hi:
            raise _Conflict()
        if value == lo:
            return self._shrink(state, var, lo + 1, hi)
        if value == hi:
            return self._shrink(state, var, lo, hi - 1)
        holes = state.holes.get(var, frozenset())
        if value in holes:
            return False
        state.holes[var] = holes | {value}
        return False

    def _atom_bounds(self, state: _State, node: tuple) -> tuple[int, int]:
        lo = hi = node[3]
        domains = state.domains
        for v, c in node[2]:
            dlo, dhi = domains[v]
            if c >= 0:
                lo += c * dlo
                hi += c * dhi
            else:
                lo += c * dhi
                hi += c * dlo
        return lo, hi

    def _propagate_atom(self, state: _State, node: tuple) -> tuple[bool, bool]:
        """Returns (changed, entailed)."""
        op, coeffs = node[1], node[2]
        lo, hi = self._atom_bounds(state, node)
        changed = False
        if op == "<=":
            if lo > 0:
                raise _Conflict()
            if hi <= 0:
                return changed, True
            for v, c in coeffs:
                dlo, dhi = state.domains[v]
                rest_lo = lo - (c * dlo if c >= 0 else c * dhi)
                bound = -rest_lo  # c*x <= bound
                if c > 0:
                    changed |= self._shrink(state, v, dlo, _floor_div(bound, c))
                else:
                    changed |= self._shrink(state, v, _ceil_div(bound, c), dhi)
            return changed, False
        if op == "==":
            if lo > 0 or hi < 0:
                raise _Conflict()
            if lo == 0 and hi == 0:
                return changed, True
            for v, c in coeffs:
                dlo, dhi = state.domains[v]
                term_lo = c * dlo if c >= 0 else c * dhi
                term_hi = c * dhi if c >= 0 else c * dlo
                t_lo, t_hi = term_hi - hi, term_lo - lo  # c*x in [t_lo, t_hi]
                if c > 0:
                    changed |= self._shrink(state, v, _ceil_div(t_lo, c), _floor_div(t_hi, c))
                else:
                    changed |= self._shrink(state, v, _ceil_div(t_hi, c), _floor_div(t_lo, c))
            return changed, False
        # "!="
        if lo > 0 or hi < 0:
            return changed, True
        unfixed = [(v, c) for v, c in coeffs if state.domains[v][0] != state.domains[v][1]]
        if not unfixed:
            if lo == 0:  # fully fixed and equal to zero
                raise _Conflict()
            return changed, True
        if len(unfixed) == 1:
            v, c = unfixed[0]
            fixed_sum = node[3] + sum(
                cc * state.domains[vv][0] for vv, cc in coeffs if vv != v
            )
            if fixed_sum % c == 0:
                changed |= self._exclude(state, v, -fixed_sum // c)
            return changed, True  # at most one forbidden value; hole recorded
        return changed, False

    def _propagate_prod(self, state: _State, node: tuple) -> tuple[bool, bool]:
        pvars, bound = node[1], node[2]
        changed = False
        lo_prod = 1
        hi_prod = 1
        for v in pvars:
            dlo, dhi = state.domains[v]
            lo_prod *= max(dlo, 0)
            hi_prod *= max(dhi, 0)
        if lo_prod > bound:
            raise _Conflict()
        if hi_prod <= bound:
            return changed, True
        for v in pvars:
            others = 1
            for w in pvars:
                if w != v:
                    others *= max(state.domains[w][0], 0)
            if others >= 1:
                dlo, dhi = state.domains[v]
                changed |= self._shrink(state, v, dlo, bound // others)
        return changed, False

    def _status(self, state: _State, node: tuple) -> Optional[bool]:
        """Entailment status of a converted node under current domains."""
        tag = node[0]
        if tag == _T_TRUE:
            return True
        if tag == _T_FALSE:
            return False
        if tag == _T_ATOM:
            op = node[1]
            lo, hi = self._atom_bounds(state, node)
            if op == "<=":
                if hi <= 0:
                    return True
                if lo > 0:
                    return False
            elif op == "==":
                if lo == 0 and hi == 0:
                    return True
                if lo > 0 or hi < 0:
                    return False
            else:
                if lo > 0 or hi < 0:
                    return True
                if lo == 0 and hi == 0:
                    return False
            return None
        if tag == _T_PROD:
            lo_prod = 1
            hi_prod = 1
            for v in node[1]:
                dlo, dhi = state.domains[v]
                lo_prod *= max(dlo, 0)
                hi_prod *= max(dhi, 0)
            if hi_prod <= node[2]:
                return True
            if lo_prod > node[2]:
                return False
            return None
        if tag == _T_CONJ:
            all_true = True
            for item in node[1]:
                s = self._status(state, item)
                if s is False:
                    return False
                if s is None:
                    all_true = False
            return True if all_true else None
        # disjunction
        any_unknown = False
        for item in node[1]:
            s = self._status(state, item)
            if s is True:
                return True
            if s is None:
                any_unknown = True
        return None if any_unknown else False

    def propagate(self, state: _State) -> None:
        while True:
            if time.monotonic() > self.deadline:
                raise _Timeout()
            changed = False
            remaining_atoms: list[tuple] = []
            for a in state.atoms:
                ch, entailed = self._propagate_atom(state, a)
                changed |= ch
                if not entailed:
                    remaining_atoms.append(a)
            state.atoms = remaining_atoms
            remaining_prods: list[tuple] = []
            for p in state.prods:
                ch, entailed = self._propagate_prod(state, p)
                changed |= ch
                if not entailed:
                    remaining_prods.append(p)
            state.prods = remaining_prods
            remaining_disjs: list[tuple] = []
            for d in state.disjs:
                live: list[tuple] = []
                satisfied = False
                for item in d[1]:
                    s = self._status(state, item)
                    if s is True:
                        satisfied = True
                        break
                    if s is None:
                        live.append(item)
                if satisfied:
                    changed = True
                    continue
                if not live:
                    raise _Conflict()
                if len(live) == 1:
                    self._assert(state, live[0])
                    changed = True
                elif len(live) != len(d[1]):
                    remaining_disjs.append((_T_DISJ, tuple(live)))
                    changed = True
                else:
                    remaining_disjs.append(d)
            state.disjs = remaining_disjs
            if not changed:
                return

    # -- search ------------------------------------------------------------

    def search(self, state: _State) -> Optional[dict[str, int]]:
        self.nodes += 1
        if self.nodes % 64 == 0 and time.monotonic() > self.deadline:
            raise _Timeout()
        try:
            self.propagate(state)
        except _Conflict:
            return None
        for var in self.structural:
            lo, hi = state.domains[var]
            if lo != hi:
                return self._branch_var(state, var)
        if state.disjs:
            # fail-first: branch on the disjunction with the fewest live
            # children (stable on ties), counting liveness under current
            # domains so recently-pruned disjuncts guide the split
            best_i, best_live, best_count = 0, None, None
            for i, d in enumerate(state.disjs):
                live = [item for item in d[1] if self._status(state, item) is not False]
                if best_count is None or len(live) < best_count:
                    best_i, best_live, best_count = i, live, len(live)
                    if best_count <= 2:
                        break
            d_live = best_live if best_live is not None else []
            rest = state.disjs[:best_i] + state.disjs[best_i + 1 :]
            for item in d_live:
                child = state.clone()
                child.disjs = list(rest)
                try:
                    self._assert(child, item)
                except _Conflict:
                    continue
                model = self.search(child)
                if model is not None:
                    return model
            return None
        pending = {
            v for a in state.atoms for v, _ in a[2] if state.domains[v][0] != state.domains[v][1]
        } | {v for p in state.prods for v in p[1] if state.domains[v][0] != state.domains[v][1]}
        if pending:
            # smallest domain first; rank breaks ties for determinism
            var = min(
                pending,
                key=lambda n: (state.domains[n][1] - state.domains[n][0], self.rank[n]),
            )
            return self._branch_var(state, var)
        # every remaining constraint is entailed; complete deterministically
        model: dict[str, int] = {}
        for name in self.order:
            lo, hi = state.domains[name]
            holes = state.holes.get(name, frozenset())
            value = lo
            while value in holes and value <= hi:
                value += 1
            if value > hi:
                return None
            model[name] = value
        return model

    def _branch_var(self, state: _State, var: str) -> Optional[dict[str, int]]:
        lo, hi = state.domains[var]
        holes = state.holes.get(var, frozenset())
        value = lo
        while value in holes and value <= hi:
            value += 1
        if value > hi:
            return None
        left = state.clone()
        try:
            self._shrink(left, var, value, value)
            model = self.search(left)
            if model is not None:
                return model
        except _Conflict:
            pass
        if value >= hi:
            return None
        right = state.clone()
        try:
            self._shrink(right, var, value + 1, hi)
        except _Conflict:
            return None
        return self.search(right)


def solve(
    layout: SymbolicLayout,
    extras: Iterable[Formula] = (),
    timeout_s: float = 5.0,
) -> SolveResult:
    """Decide base ∧ extras over the layout. Sat models are total and
    deterministic for identical inputs; a timeout yields Unknown."""
    solver = _Solver(layout.vars, timeout_s)
    try:
        state = solver.initial_state(layout.vars, [layout.base, *extras])
        model = solver.search(state)
    except _Conflict:
        return SolveResult(SolveStatus.UNSAT)
    except _Timeout:
        return SolveResult(SolveStatus.UNKNOWN)
    except RecursionError:
        return SolveResult(SolveStatus.UNKNOWN)
    if model is None:
        return SolveResult(SolveStatus.UNSAT)
    return SolveResult(SolveStatus.SAT, model)


def propagate_domains(
    layout: SymbolicLayout,
    extras: Iterable[Formula] = (),
    timeout_s: float = 5.0,
) -> Optional[dict[str, tuple[int, int]]]:
    """Bounds-consistent variable domains under base ∧ extras, without
    search. None when propagation alone detects a conflict. Samplers clip
    bucket choices to these domains so individual buckets never contradict
    the invariant set outright."""
    solver = _Solver(layout.vars, timeout_s)
    try:
        state = solver.initial_state(layout.vars, [layout.base, *extras])
        solver.propagate(state)
    except (_Conflict, _Timeout):
        return None
    return dict(state.domains)


# ---------------------------------------------------------------------------
# SMT-LIB dump (debug aid; advisory, not a stability contract)


def to_smtlib(layout: SymbolicLayout, extras: Iterable[Formula] = ()) -> str:
    lines = ["(set-logic QF_NIA)"]
    for v in layout.vars:
        safe = v.name.replace("[", ".").replace("]", "")
        lines.append(f"(declare-const {safe} Int)")
        lines.append(f"(assert (and (>= {safe} {v.lo}) (<= {safe} {v.hi})))")

    def sx(f: Formula) -> str:
        if isinstance(f, TrueF):
            return "true"
        if isinstance(f, FalseF):
            return "false"
        if isinstance(f, Atom):
            a = f.normalized()
            terms = [f"(* {c} {v.replace('[', '.').replace(']', '')})" for v, c in a.coeffs]
            if a.const:
                terms.append(str(a.const))
            body = terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})" if terms else "0"
            if a.op == "<=":
                return f"(<= {body} 0)"
            if a.op == "==":
                return f"(= {body} 0)"
            return f"(not (= {body} 0))"
        if isinstance(f, ProdCap):
            names = [v.replace("[", ".").replace("]", "") for v in f.vars]
            return f"(<= (* {' '.join(names)}) {f.bound})"
        if isinstance(f, Conj):
            return f"(and {' '.join(sx(i) for i in f.items)})"
        if isinstance(f, Disj):
            return f"(or {' '.join(sx(i) for i in f.items)})"
        raise TypeError(type(f).__name__)

    for f in [layout.base, *extras]:
        lines.append(f"(assert {sx(f)})")
    lines.append("(check-sat)")
    return "\n".join(lines)
