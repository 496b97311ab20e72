"""Rule language: concrete syntax, AST, rendering, and type checking."""

from .ast import (
    And,
    Arith,
    BOOL,
    Cmp,
    DTYPE,
    EMPTY_SPAN,
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
    SourceSpan,
    STR,
    TENSOR,
    TENSOR_FNS,
    TensorFn,
    TensorType,
    TupleIndex,
    TupleLen,
    TypeExpr,
    UnionType,
    VarRef,
    free_var_names,
    walk,
)
from .errors import BindingError, ParseError, TypeErrorEntry, TypeErrorReport
from .parser import parse_expr, parse_rule, parse_ruleset, parse_type_text
from .render import render_expr, render_rule, render_ruleset_record, render_type
from .typecheck import TypedRule, free_variables, type_check, unused_bindings

__all__ = [
    "And", "Arith", "BOOL", "BindingError", "Cmp", "DTYPE", "EMPTY_SPAN",
    "Exists", "Expr", "FLOAT", "ForAll", "IfThen", "INT", "Literal", "Or",
    "ParseError", "PrimType", "Rule", "SeqType", "SourceSpan", "STR",
    "TENSOR", "TENSOR_FNS", "TensorFn", "TensorType", "TupleIndex",
    "TupleLen", "TypeErrorEntry", "TypeErrorReport", "TypeExpr", "TypedRule",
    "UnionType", "VarRef", "free_var_names", "free_variables", "parse_expr",
    "parse_rule", "parse_ruleset", "parse_type_text", "render_expr", "render_rule",
    "render_ruleset_record", "render_type", "type_check", "unused_bindings",
    "walk",
]
