"""Recursive-descent parser for the rule language.

Concrete syntax, one rule per line:

    {v_1: tensor, v_2: int} |= (-1 * ndim(v_1) <= v_2) and (v_2 <= ndim(v_1) - 1)

Precedence, loosest to tightest: `or`, `and`, comparison, additive,
multiplicative. Quantifier and conditional bodies extend maximally to the
right. Union types (`int|str`) are legal only inside bindings.
"""

from __future__ import annotations

from .ast import (
    And,
    Arith,
    BOOL,
    Cmp,
    DTYPE,
    Exists,
    Expr,
    FLOAT,
    ForAll,
    INT,
    IfThen,
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
    TupleIndex,
    TupleLen,
    TypeExpr,
    UnionType,
    VarRef,
    free_var_names,
)
from .errors import BindingError, ParseError
from .lexer import Token, tokenize

_PRIM_BY_NAME = {"int": INT, "float": FLOAT, "bool": BOOL, "dtype": DTYPE, "str": STR}

_CMP_TOKENS = ("=", "!=", "<", "<=", ">", ">=")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0
        self.param_names: set[str] = set()
        self.bound_stack: list[str] = []

    # -- token helpers -----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str | None = None) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            want = what or f"'{kind}'"
            raise ParseError(
                f"expected {want}, found {tok.text or 'end of input'!r}", tok.span, self.text
            )
        return self.next()

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def at_keyword(self, word: str) -> bool:
        return self.peek().kind == "keyword" and self.peek().text == word

    def eat_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            tok = self.peek()
            raise ParseError(
                f"expected '{word}', found {tok.text or 'end of input'!r}", tok.span, self.text
            )
        return self.next()

    # -- bindings and types ------------------------------------------------

    def parse_rule(self) -> Rule:
        self.expect("{")
        bindings: list[tuple[str, TypeExpr]] = []
        while True:
            name_tok = self.expect("ident", "a variable name")
            if any(name_tok.text == n for n, _ in bindings):
                raise BindingError(f"duplicate binding for {name_tok.text!r}", name_tok.span)
            self.expect(":")
            ty = self.parse_type()
            bindings.append((name_tok.text, ty))
            if self.at(","):
                self.next()
                continue
            break
        self.expect("}")
        self.expect("|=")
        self.param_names = {n for n, _ in bindings}
        body = self.parse_expr()
        eof = self.peek()
        if eof.kind != "eof":
            raise ParseError(f"trailing input {eof.text!r}", eof.span, self.text)
        free = free_var_names(body)
        unbound = sorted(free - self.param_names)
        if unbound:
            raise BindingError(f"free variable(s) not bound: {', '.join(unbound)}", body.span)
        return Rule(name="", description="", bindings=tuple(bindings), body=body)

    def parse_type(self) -> TypeExpr:
        first = self._parse_simple_type()
        if self.at("|"):
            bar = self.next()
            second = self._parse_simple_type()
            for arm in (first, second):
                if not isinstance(arm, PrimType):
                    raise ParseError("union arms must be primitive types", bar.span, self.text)
            if self.at("|"):
                raise ParseError(
                    "a union joins exactly two primitive types", self.peek().span, self.text
                )
            return UnionType(first, second)
        return first

    def _parse_simple_type(self) -> TypeExpr:
        tok = self.peek()
        if tok.kind == "keyword" and tok.text in _PRIM_BY_NAME:
            self.next()
            return _PRIM_BY_NAME[tok.text]
        if tok.kind == "keyword" and tok.text == "tensor":
            self.next()
            return TENSOR
        if tok.kind == "keyword" and tok.text in ("list", "tuple"):
            self.next()
            self.expect("(")
            elem = self.parse_type()
            close = self.expect(")")
            if isinstance(elem, (SeqType, UnionType)):
                raise ParseError(
                    "sequence element must be a primitive or tensor", close.span, self.text
                )
            return SeqType(tok.text, elem)
        raise ParseError(f"expected a type, found {tok.text!r}", tok.span, self.text)

    # -- expressions ---------------------------------------------------------

    def parse_expr(self) -> Expr:
        return self.parse_or()

    def parse_or(self) -> Expr:
        lhs = self.parse_and()
        while self.at_keyword("or"):
            self.next()
            rhs = self.parse_and()
            lhs = Or(lhs, rhs, span=SourceSpan(lhs.span.start, rhs.span.end))
        return lhs

    def parse_and(self) -> Expr:
        lhs = self.parse_cmp()
        while self.at_keyword("and"):
            self.next()
            rhs = self.parse_cmp()
            lhs = And(lhs, rhs, span=SourceSpan(lhs.span.start, rhs.span.end))
        return lhs

    def parse_cmp(self) -> Expr:
        lhs = self.parse_add()
        if self.peek().kind in _CMP_TOKENS:
            op = self.next()
            rhs = self.parse_add()
            if self.peek().kind in _CMP_TOKENS:
                raise ParseError("comparisons do not chain", self.peek().span, self.text)
            return Cmp(op.kind, lhs, rhs, span=SourceSpan(lhs.span.start, rhs.span.end))
        return lhs

    def parse_add(self) -> Expr:
        lhs = self.parse_mul()
        while self.at("+") or self.at("-"):
            op = self.next()
            rhs = self.parse_mul()
            lhs = Arith(op.kind, lhs, rhs, span=SourceSpan(lhs.span.start, rhs.span.end))
        return lhs

    def parse_mul(self) -> Expr:
        lhs = self.parse_unary()
        while self.at("*") or self.at("/"):
            op = self.next()
            rhs = self.parse_unary()
            lhs = Arith(op.kind, lhs, rhs, span=SourceSpan(lhs.span.start, rhs.span.end))
        return lhs

    def parse_unary(self) -> Expr:
        if self.at("-"):
            minus = self.next()
            num = self.peek()
            if num.kind != "number":
                raise ParseError(
                    "'-' applies to numeric literals only; write 0 - e or -1 * e",
                    minus.span,
                    self.text,
                )
            self.next()
            value = num.value
            neg = -value  # type: ignore[operator]
            return Literal(neg, span=SourceSpan(minus.span.start, num.span.end))
        return self.parse_atom()

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            return Literal(tok.value, span=tok.span)  # type: ignore[arg-type]
        if tok.kind == "string":
            self.next()
            return Literal(tok.value, span=tok.span)  # type: ignore[arg-type]
        if tok.kind == "keyword" and tok.text in ("true", "false"):
            self.next()
            return Literal(tok.text == "true", span=tok.span)
        if tok.kind == "(":
            self.next()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.kind == "keyword" and tok.text in ("forall", "exists"):
            return self.parse_quantifier()
        if tok.kind == "keyword" and tok.text == "if":
            return self.parse_conditional()
        if tok.kind == "ident" and tok.text in TENSOR_FNS and self.peek(1).kind == "(":
            return self.parse_tensor_fn()
        if tok.kind == "ident":
            self.next()
            ref = VarRef(tok.text, span=tok.span)
            if self.at("["):
                self.next()
                index = self.parse_expr()
                close = self.expect("]")
                return TupleIndex(ref, index, span=SourceSpan(tok.span.start, close.span.end))
            if self.at(".") and self.peek(1).kind == "ident" and self.peek(1).text == "len":
                self.next()
                dot_len = self.next()
                return TupleLen(ref, span=SourceSpan(tok.span.start, dot_len.span.end))
            return ref
        raise ParseError(
            f"expected an expression, found {tok.text or 'end of input'!r}", tok.span, self.text
        )

    def parse_tensor_fn(self) -> Expr:
        fn_tok = self.next()
        self.expect("(")
        target_tok = self.expect("ident", "a variable")
        target = VarRef(target_tok.text, span=target_tok.span)
        index: Expr | None = None
        if self.at(","):
            self.next()
            index = self.parse_expr()
        close = self.expect(")")
        if fn_tok.text == "shape" and index is None:
            raise ParseError("shape requires an index argument", close.span, self.text)
        if fn_tok.text != "shape" and index is not None:
            raise ParseError(
                f"{fn_tok.text} takes no index argument", index.span, self.text
            )
        return TensorFn(
            fn_tok.text, target, index, span=SourceSpan(fn_tok.span.start, close.span.end)
        )

    def parse_quantifier(self) -> Expr:
        kw = self.next()
        var_tok = self.expect("ident", "a bound variable name")
        if var_tok.text in self.param_names or var_tok.text in self.bound_stack:
            raise BindingError(
                f"quantifier variable {var_tok.text!r} shadows an existing name", var_tok.span
            )
        self.eat_keyword("in")
        self.expect("[")
        lo = self.parse_expr()
        self.expect(",")
        hi = self.parse_expr()
        self.expect("]")
        self.expect(":")
        self.bound_stack.append(var_tok.text)
        try:
            body = self.parse_expr()
        finally:
            self.bound_stack.pop()
        ctor = ForAll if kw.text == "forall" else Exists
        return ctor(var_tok.text, lo, hi, body, span=SourceSpan(kw.span.start, body.span.end))

    def parse_conditional(self) -> Expr:
        kw = self.next()
        cond = self.parse_expr()
        self.eat_keyword("then")
        then = self.parse_expr()
        orelse: Expr | None = None
        if self.at_keyword("else"):
            self.next()
            orelse = self.parse_expr()
        end = orelse.span.end if orelse is not None else then.span.end
        return IfThen(cond, then, orelse, span=SourceSpan(kw.span.start, end))


def parse_rule(text: str, name: str = "", description: str = "") -> Rule:
    """Parse one rule. Raises ParseError or BindingError."""
    rule = _Parser(text).parse_rule()
    if name or description:
        rule = Rule(name=name, description=description, bindings=rule.bindings, body=rule.body)
    return rule


def parse_type_text(text: str) -> TypeExpr:
    """Parse a declared parameter type, e.g. "tensor" or "int|float"."""
    p = _Parser(text)
    ty = p.parse_type()
    if p.peek().kind != "eof":
        raise ParseError(f"trailing input {p.peek().text!r}", p.peek().span, text)
    return ty


def parse_expr(text: str, param_names: set[str] | None = None) -> Expr:
    """Parse a bare expression (testing hook)."""
    p = _Parser(text)
    p.param_names = set(param_names or ())
    expr = p.parse_expr()
    if p.peek().kind != "eof":
        raise ParseError(f"trailing input {p.peek().text!r}", p.peek().span, text)
    return expr


def parse_ruleset(text: str, source_name: str = "<ruleset>") -> tuple[list[Rule], list[str]]:
    """Parse a ruleset file: records of `# name:` / `# desc:` / rule line,
    separated by blank lines. Returns (rules, error strings); a bad record
    does not abort the rest of the file.
    """
    rules: list[Rule] = []
    errors: list[str] = []
    name: str | None = None
    desc: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            if name is not None or desc is not None:
                errors.append(f"{source_name}:{lineno}:1: record missing its rule line")
            name = desc = None
            continue
        if line.startswith("#"):
            comment = line[1:].strip()
            if comment.startswith("name:"):
                name = comment[len("name:") :].strip()
            elif comment.startswith("desc:"):
                desc = comment[len("desc:") :].strip()
            continue
        try:
            rule = parse_rule(line, name=name or "", description=desc or "")
            rules.append(rule)
        except (ParseError, BindingError) as exc:
            if isinstance(exc, ParseError):
                errors.append(f"{source_name}:{lineno}:{exc.col}: {exc.args[0].split(': ', 1)[-1]}")
            else:
                errors.append(f"{source_name}:{lineno}:1: {exc}")
        name = desc = None
    if name is not None or desc is not None:
        errors.append(f"{source_name}:{len(text.splitlines()) + 1}:1: record missing its rule line")
    return rules, errors
