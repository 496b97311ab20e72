"""Parser, renderer, and type checker."""

import pytest

from invfuzz.dsl import (
    And,
    BindingError,
    Cmp,
    Literal,
    ParseError,
    TensorFn,
    TypeErrorReport,
    VarRef,
    free_variables,
    parse_rule,
    parse_ruleset,
    parse_type_text,
    render_rule,
    type_check,
    unused_bindings,
)

DIM_RULE = "{v_1: tensor, v_2: int} |= (-1 * ndim(v_1) <= v_2) and (v_2 <= ndim(v_1) - 1)"

RULE15 = (
    "{v_1: tensor, v_2: tensor} |= if ndim(v_1) = ndim(v_2) then "
    "(forall i in [0, ndim(v_1) - 1] : shape(v_1, i) = shape(v_2, i) or "
    "shape(v_1, i) = 1 or shape(v_2, i) = 1) else if ndim(v_1) > ndim(v_2) then "
    "(forall i in [0, ndim(v_2) - 1] : shape(v_1, ndim(v_1) - ndim(v_2) + i) = shape(v_2, i) or "
    "shape(v_1, ndim(v_1) - ndim(v_2) + i) = 1 or shape(v_2, i) = 1) else "
    "(forall i in [0, ndim(v_1) - 1] : shape(v_2, ndim(v_2) - ndim(v_1) + i) = shape(v_1, i) or "
    "shape(v_2, ndim(v_2) - ndim(v_1) + i) = 1 or shape(v_1, i) = 1)"
)


class TestParse:
    def test_dim_rule_structure(self):
        rule = parse_rule(DIM_RULE)
        assert len(rule.bindings) == 2
        assert isinstance(rule.body, And)

    def test_smallest_rule(self):
        rule = parse_rule("{v_1: tensor} |= true")
        assert rule.body == Literal(True)

    def test_shape_requires_index(self):
        with pytest.raises(ParseError, match="index argument"):
            parse_rule("{v_1: tensor} |= shape(v_1)")

    def test_ndim_rejects_index(self):
        with pytest.raises(ParseError, match="no index"):
            parse_rule("{v_1: tensor} |= ndim(v_1, 0) = 1")

    def test_unbound_variable(self):
        with pytest.raises(BindingError, match="not bound"):
            parse_rule("{v_1: tensor} |= ndim(v_2) = 1")

    def test_duplicate_binding(self):
        with pytest.raises(BindingError, match="duplicate"):
            parse_rule("{v_1: tensor, v_1: int} |= true")

    def test_quantifier_shadowing(self):
        with pytest.raises(BindingError, match="shadows"):
            parse_rule("{i: tensor} |= forall i in [0, 1] : true")
        with pytest.raises(BindingError, match="shadows"):
            parse_rule(
                "{v_1: tensor} |= forall i in [0, 1] : exists i in [0, 1] : true"
            )

    def test_chained_comparison_rejected(self):
        with pytest.raises(ParseError, match="chain"):
            parse_rule("{v_1: int} |= 0 <= v_1 <= 5")

    def test_union_only_two_primitive_arms(self):
        assert str(parse_type_text("int|str")) == "int|str"
        with pytest.raises(ParseError):
            parse_type_text("int|str|bool")
        with pytest.raises(ParseError):
            parse_type_text("tensor|int")

    def test_nested_sequences_rejected(self):
        with pytest.raises(ParseError):
            parse_type_text("list(list(int))")
        assert str(parse_type_text("list(tensor)")) == "list(tensor)"

    def test_parse_error_span_is_in_bounds(self):
        bad = [
            "{v_1: tensor} |= shape(v_1)",
            "{v_1: tensor |= true",
            "{v_1: tensor} |= 1 +",
            "{v_1: tensor} |= (ndim(v_1)",
            "{v_1: tensor} |= ndim(v_1) = = 1",
            "}{",
        ]
        for text in bad:
            with pytest.raises((ParseError, BindingError)) as err:
                parse_rule(text)
            if isinstance(err.value, ParseError):
                assert 0 <= err.value.span.start <= len(text)
                assert err.value.span.end <= len(text) + 1


class TestRender:
    @pytest.mark.parametrize(
        "text",
        [
            DIM_RULE,
            RULE15,
            "{v_1: tensor} |= true",
            "{v_1: tensor, v_2: tensor} |= forall i in [0, ndim(v_1) - 1] : shape(v_1, i) = shape(v_2, i)",
            "{v_1: int|float} |= (0 <= v_1) and (v_1 <= 64)",
            "{v_1: list(int), v_2: tensor} |= v_1.len = ndim(v_2)",
            "{v_1: tuple(int)} |= if v_1.len >= 1 then v_1[0] >= 0",
            "{v_1: str} |= v_1 = \"same\" or v_1 = \"valid\"",
            "{v_1: tensor} |= min(v_1) >= -1.5 and max(v_1) <= 2.25",
            "{v_1: int} |= v_1 / 2 = 3",
            "{v_1: tensor} |= if ndim(v_1) = 1 then min(v_1) >= 0 else max(v_1) <= 0",
            "{v_1: tensor} |= exists i in [0, ndim(v_1) - 1] : shape(v_1, i) = 0",
        ],
    )
    def test_roundtrip(self, text):
        rule = parse_rule(text)
        rendered = render_rule(rule)
        assert parse_rule(rendered) == rule
        # rendering is canonical: a second round trip is a fixed point
        assert render_rule(parse_rule(rendered)) == rendered

    def test_no_else_is_preserved(self):
        rule = parse_rule("{v_1: int} |= if v_1 > 0 then v_1 < 5")
        assert "else" not in render_rule(rule)

    def test_forall_style(self):
        rule = parse_rule(
            "{v_1: tensor, v_2: tensor} |= forall i in [0, ndim(v_1) - 1] : shape(v_1, i) = shape(v_2, i)"
        )
        assert (
            render_rule(rule)
            == "{v_1: tensor, v_2: tensor} |= forall i in [0, ndim(v_1) - 1] : shape(v_1, i) = shape(v_2, i)"
        )


class TestTypeCheck:
    def test_ndim_is_int(self):
        rule = parse_rule("{v_1: tensor} |= ndim(v_1) = 1")
        typed = type_check(rule)
        fn = rule.body.lhs
        assert isinstance(fn, TensorFn)
        assert str(typed.type_of(fn)) == "int"

    def test_len_is_int(self):
        rule = parse_rule("{v_3: list(int)} |= v_3.len = 2")
        typed = type_check(rule)
        assert str(typed.type_of(rule.body.lhs)) == "int"

    def test_dtype_ordering_warns(self):
        rule = parse_rule("{v_1: dtype} |= v_1 <= 1")
        typed = type_check(rule)
        assert any(w.kind == "dtype-ordering" for w in typed.warnings)

    NEGATIVE = [
        # at least one violation per typing rule, plus the standard forms
        ("{v_1: tensor} |= v_1 + 1 = 2", "arith-nonnumeric"),  # T-PrimAccess premise
        ("{v_1: int} |= v_1[0] = 1", "tuple-access-on-nontuple"),  # T-TupleAccess
        ("{v_1: list(int)} |= v_1[1.5] = 1", "index-not-int"),  # T-TupleAccess index
        ("{v_1: tensor} |= v_1.len = 1", "len-on-nontuple"),  # T-TupleLen
        ("{v_2: int} |= ndim(v_2) = 1", "tensor-fn-on-nontensor"),  # T-FuncCall-0
        ('{v_1: tensor} |= shape(v_1, "a") = 1', "index-not-int"),  # T-FuncCall-1
        ("{v_1: int} |= v_1 and true", "logic-nonbool"),
        ("{v_1: tensor, v_2: tensor} |= v_1 = v_2", "cmp-incompatible"),
        ("{v_1: tensor} |= forall i in [0, 1.5] : shape(v_1, i) = 1", "quantifier-bounds"),
        ("{v_1: tensor} |= forall i in [0, 1] : i", "quantifier-body"),
        ("{v_1: int} |= (if v_1 > 0 then 1) = 1", "if-noelse-value"),
        ("{v_1: int} |= if v_1 then true", "cond-nonbool"),
        ("{v_1: tensor} |= (if ndim(v_1) > 0 then 1 else true) = 1", "branch-mismatch"),
        ('{v_1: str} |= v_1 < "a"', "string-cmp"),
        ("{v_1: bool} |= v_1 + 1 = 2", "arith-nonnumeric"),
        ("{v_1: int} |= v_1 + 1", "body-not-bool"),
    ]

    @pytest.mark.parametrize("text,kind", NEGATIVE)
    def test_negative_suite(self, text, kind):
        rule = parse_rule(text)
        with pytest.raises(TypeErrorReport) as err:
            type_check(rule)
        assert kind in err.value.kinds()

    def test_collects_all_errors(self):
        rule = parse_rule("{v_1: int, v_2: int} |= ndim(v_1) = 1 and ndim(v_2) = 2")
        with pytest.raises(TypeErrorReport) as err:
            type_check(rule)
        assert len(err.value.entries) == 2


class TestFreeVariables:
    def test_binding_order_preserved(self):
        rule = parse_rule(DIM_RULE)
        assert [n for n, _ in free_variables(rule)] == ["v_1", "v_2"]

    def test_single_binding(self):
        rule = parse_rule("{v_1: tensor} |= true")
        # `true` uses no variables; v_1 is unused but still bound
        assert free_variables(rule) == []
        assert unused_bindings(rule) == ["v_1"]

    def test_quantifier_bound_excluded(self):
        rule = parse_rule(RULE15)
        assert [n for n, _ in free_variables(rule)] == ["v_1", "v_2"]


class TestRulesetFormat:
    def test_records_parse(self):
        text = (
            "# name: one\n# desc: first\n{v_1: tensor} |= ndim(v_1) >= 0\n\n"
            "# name: two\n# desc: second\n{v_1: int} |= v_1 >= 0\n"
        )
        rules, errors = parse_ruleset(text)
        assert [r.name for r in rules] == ["one", "two"]
        assert errors == []

    def test_partial_load_reports_location(self):
        text = (
            "# name: good\n# desc: fine\n{v_1: tensor} |= ndim(v_1) >= 0\n\n"
            "# name: bad\n# desc: broken\n{v_1: tensor} |= shape(v_1)\n"
        )
        rules, errors = parse_ruleset(text, "rules.txt")
        assert len(rules) == 1 and len(errors) == 1
        assert errors[0].startswith("rules.txt:7:")

    def test_empty_file(self):
        rules, errors = parse_ruleset("")
        assert rules == [] and errors == []
