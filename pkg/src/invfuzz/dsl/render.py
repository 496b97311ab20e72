"""Canonical rendering of rules.

parse_rule(render_rule(r)) yields a structurally identical rule. Spacing is
fixed and parentheses are emitted only where precedence demands them.
"""

from __future__ import annotations

from fractions import Fraction

from .ast import (
    And,
    Arith,
    Cmp,
    Exists,
    Expr,
    ForAll,
    IfThen,
    Literal,
    Or,
    Rule,
    TensorFn,
    TupleIndex,
    TupleLen,
    TypeExpr,
    VarRef,
)

# Precedence levels; higher binds tighter. Quantifiers/conditionals restart
# at the lowest level and swallow everything to their right, so they need
# parentheses anywhere except the tail of an enclosing expression.
_LEVEL_OR = 1
_LEVEL_AND = 2
_LEVEL_CMP = 3
_LEVEL_ADD = 4
_LEVEL_MUL = 5
_LEVEL_ATOM = 6


def render_number(value: int | Fraction) -> str:
    if isinstance(value, int):
        return str(value)
    # Decimal literals always have denominators of the form 2^a * 5^b, so a
    # finite decimal expansion exists.
    num, den = value.numerator, value.denominator
    k = 0
    scaled = num
    d = den
    while d % 2 == 0:
        d //= 2
        k += 1
        scaled *= 5
    while d % 5 == 0:
        d //= 5
        k += 1
        scaled *= 2
    if d != 1:
        raise ValueError(f"rational {value} has no finite decimal form")
    digits = str(abs(scaled)).rjust(k + 1, "0")
    sign = "-" if scaled < 0 else ""
    whole, frac = digits[:-k] or "0", digits[-k:]
    frac = frac.rstrip("0") or "0"
    return f"{sign}{whole}.{frac}"


def render_type(ty: TypeExpr) -> str:
    return str(ty)


def _needs_parens(level: int, parent_level: int) -> bool:
    return level < parent_level


def _render(e: Expr, parent_level: int, tail: bool) -> str:
    """Render e assuming the surrounding context binds at parent_level.

    `tail` is true when e extends to the end of the enclosing expression,
    which lets quantifier/conditional bodies go unparenthesized.
    """
    if isinstance(e, Literal):
        v = e.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, str):
            escaped = v.replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        return render_number(v)
    if isinstance(e, VarRef):
        return e.name
    if isinstance(e, TensorFn):
        if e.index is None:
            return f"{e.fn}({e.target.name})"
        return f"{e.fn}({e.target.name}, {_render(e.index, _LEVEL_OR, True)})"
    if isinstance(e, TupleIndex):
        return f"{e.target.name}[{_render(e.index, _LEVEL_OR, True)}]"
    if isinstance(e, TupleLen):
        return f"{e.target.name}.len"
    if isinstance(e, (ForAll, Exists)):
        kw = "forall" if isinstance(e, ForAll) else "exists"
        lo = _render(e.lo, _LEVEL_OR, True)
        hi = _render(e.hi, _LEVEL_OR, True)
        body = _render(e.body, _LEVEL_OR, True)
        text = f"{kw} {e.bound} in [{lo}, {hi}] : {body}"
        return text if tail and parent_level <= _LEVEL_OR else f"({text})"
    if isinstance(e, IfThen):
        cond = _render(e.cond, _LEVEL_OR, False)
        then_tail = e.orelse is None
        then = _render(e.then, _LEVEL_OR, then_tail)
        if e.orelse is None:
            text = f"if {cond} then {then}"
        else:
            text = f"if {cond} then {then} else {_render(e.orelse, _LEVEL_OR, True)}"
        return text if tail and parent_level <= _LEVEL_OR else f"({text})"
    if isinstance(e, Or):
        lhs = _render(e.lhs, _LEVEL_OR, False)
        rhs = _render(e.rhs, _LEVEL_OR + 1, tail)  # left-assoc: rhs needs one level up
        text = f"{lhs} or {rhs}"
        return f"({text})" if _needs_parens(_LEVEL_OR, parent_level) else text
    if isinstance(e, And):
        lhs = _render(e.lhs, _LEVEL_AND, False)
        rhs = _render(e.rhs, _LEVEL_AND + 1, tail)
        text = f"{lhs} and {rhs}"
        return f"({text})" if _needs_parens(_LEVEL_AND, parent_level) else text
    if isinstance(e, Cmp):
        lhs = _render(e.lhs, _LEVEL_CMP + 1, False)
        rhs = _render(e.rhs, _LEVEL_CMP + 1, tail)
        text = f"{lhs} {e.op} {rhs}"
        return f"({text})" if _needs_parens(_LEVEL_CMP, parent_level) else text
    if isinstance(e, Arith):
        if e.op in ("+", "-"):
            level, rhs_level = _LEVEL_ADD, _LEVEL_ADD + 1
        else:
            level, rhs_level = _LEVEL_MUL, _LEVEL_MUL + 1
        lhs = _render(e.lhs, level, False)
        rhs = _render(e.rhs, rhs_level, tail)
        text = f"{lhs} {e.op} {rhs}"
        return f"({text})" if _needs_parens(level, parent_level) else text
    raise TypeError(f"unknown expression node: {type(e).__name__}")


def render_expr(e: Expr) -> str:
    return _render(e, _LEVEL_OR, True)


def render_rule(rule: Rule) -> str:
    bindings = ", ".join(f"{name}: {render_type(ty)}" for name, ty in rule.bindings)
    return f"{{{bindings}}} |= {render_expr(rule.body)}"


def render_ruleset_record(rule: Rule) -> str:
    lines = []
    if rule.name:
        lines.append(f"# name: {rule.name}")
    if rule.description:
        lines.append(f"# desc: {rule.description}")
    lines.append(render_rule(rule))
    return "\n".join(lines)
