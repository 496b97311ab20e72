"""Reference evaluation semantics."""

import itertools
import random

import pytest

from invfuzz.dsl import parse_expr, parse_rule, type_check
from invfuzz.evaluator import (
    CheckStatus,
    EvalError,
    EvalErrorKind,
    check_rule,
    eval_expr,
)
from invfuzz.values import BoolV, FloatV, IntV, ListV, TensorV

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


def tensor(*shape):
    return TensorV(tuple(shape), 0, 0.0, 1.0)


def brute_force_broadcastable(s1, s2):
    """Independent right-aligned pairwise dim test."""
    a, b = s1[::-1], s2[::-1]
    for i in range(max(len(a), len(b))):
        x = a[i] if i < len(a) else None
        y = b[i] if i < len(b) else None
        if x is None or y is None:
            continue
        if x != y and x != 1 and y != 1:
            return False
    return True


class TestEvalExpr:
    def test_dim_rule_substitution(self):
        rule = type_check(parse_rule(DIM_RULE))
        b = {"v_1": TensorV((2, 3, 4), 0, 0, 1), "v_2": IntV(-3)}
        assert check_rule(rule, b).status is CheckStatus.HOLDS
        b["v_2"] = IntV(3)
        assert check_rule(rule, b).status is CheckStatus.FAILS

    def test_empty_forall_is_vacuously_true(self):
        assert eval_expr(parse_expr("forall i in [0, -1] : false"), {}) == BoolV(True)

    def test_empty_exists_is_false(self):
        assert eval_expr(parse_expr("exists i in [0, -1] : true"), {}) == BoolV(False)

    def test_rule15_on_paper_shapes(self):
        rule = type_check(parse_rule(RULE15))
        b = {"v_1": tensor(5, 3, 4, 1), "v_2": tensor(3, 1, 1)}
        assert check_rule(rule, b).status is CheckStatus.HOLDS

    def test_rule15_mismatch_fails(self):
        rule = type_check(parse_rule(RULE15))
        b = {"v_1": tensor(3, 4), "v_2": tensor(2, 4)}
        assert check_rule(rule, b).status is CheckStatus.FAILS

    def test_rational_arithmetic_is_exact(self):
        # 0.1 + 0.2 = 0.3 fails in floats, holds in exact decimals
        assert eval_expr(parse_expr("0.1 + 0.2 = 0.3"), {}) == BoolV(True)

    def test_division_by_zero(self):
        with pytest.raises(EvalError) as err:
            eval_expr(parse_expr("1 / 0 = 1"), {})
        assert err.value.kind is EvalErrorKind.DIVISION_BY_ZERO

    def test_non_integral_index(self):
        e = parse_expr("shape(v_1, 3 / 2) = 1", {"v_1"})
        with pytest.raises(EvalError) as err:
            eval_expr(e, {"v_1": tensor(2, 2)})
        assert err.value.kind is EvalErrorKind.NON_INTEGRAL_INDEX

    def test_integral_division_index_ok(self):
        e = parse_expr("shape(v_1, 2 / 2) = 5", {"v_1"})
        assert eval_expr(e, {"v_1": tensor(4, 5)}) == BoolV(True)

    def test_range_too_large(self):
        with pytest.raises(EvalError) as err:
            eval_expr(parse_expr("forall i in [0, 100000] : true"), {})
        assert err.value.kind is EvalErrorKind.RANGE_TOO_LARGE

    def test_if_without_else_in_bool_position(self):
        assert eval_expr(parse_expr("if false then false"), {}) == BoolV(True)
        assert eval_expr(parse_expr("if true then false"), {}) == BoolV(False)

    def test_branch_select_does_not_evaluate_other_branch(self):
        # the untaken branch would raise IndexOutOfRange if evaluated
        e = parse_expr("if ndim(v_1) >= 3 then shape(v_1, 2) >= 0 else true", {"v_1"})
        assert eval_expr(e, {"v_1": tensor(2)}) == BoolV(True)

    def test_sequence_access(self):
        e = parse_expr("v_1[1] = 5 and v_1.len = 3 and v_1[-1] = 7", {"v_1"})
        b = {"v_1": ListV((IntV(1), IntV(5), IntV(7)))}
        assert eval_expr(e, b) == BoolV(True)


class TestCheckRule:
    def test_holds_on_trivial(self):
        rule = type_check(parse_rule("{v_1: tensor} |= true"))
        assert check_rule(rule, {"v_1": tensor(7)}).status is CheckStatus.HOLDS

    def test_error_is_distinct_from_fails(self):
        rule = type_check(parse_rule("{v_1: tensor} |= shape(v_1, 5) >= 1"))
        result = check_rule(rule, {"v_1": tensor(1, 2, 3)})
        assert result.status is CheckStatus.ERRORS
        assert result.error.kind is EvalErrorKind.INDEX_OUT_OF_RANGE

    def test_binding_conformance(self):
        rule = type_check(parse_rule("{v_1: tensor} |= ndim(v_1) >= 0"))
        result = check_rule(rule, {"v_1": IntV(3)})
        assert result.status is CheckStatus.ERRORS

    def test_union_binding_matches_one_arm(self):
        rule = type_check(parse_rule("{v_1: int|float} |= v_1 >= 0"))
        assert check_rule(rule, {"v_1": IntV(1)}).status is CheckStatus.HOLDS
        assert check_rule(rule, {"v_1": FloatV(0.5)}).status is CheckStatus.HOLDS
        assert check_rule(rule, {"v_1": BoolV(True)}).status is CheckStatus.ERRORS


class TestQuantifierEquivalence:
    def test_forall_matches_explicit_fold(self):
        rng = random.Random(7)
        body = parse_expr("shape(v_1, i) >= 1", {"v_1", "i"})
        for _ in range(50):
            nd = rng.randint(0, 4)
            shape = tuple(rng.randint(0, 3) for _ in range(nd))
            t = tensor(*shape)
            lo, hi = 0, nd - 1
            quantified = parse_expr(
                f"forall i in [{lo}, {hi}] : shape(v_1, i) >= 1", {"v_1"}
            )
            got = eval_expr(quantified, {"v_1": t}) == BoolV(True)
            expected = all(s >= 1 for s in shape)  # independent loop
            assert got == expected

    def test_exists_matches_explicit_fold(self):
        rng = random.Random(11)
        for _ in range(50):
            nd = rng.randint(1, 4)
            shape = tuple(rng.randint(0, 3) for _ in range(nd))
            quantified = parse_expr(
                f"exists i in [0, {nd - 1}] : shape(v_1, i) = 0", {"v_1"}
            )
            got = eval_expr(quantified, {"v_1": tensor(*shape)}) == BoolV(True)
            assert got == any(s == 0 for s in shape)

    def test_de_morgan_for_comparison_bodies(self):
        # exists i: shape = 0  <=>  not forall i: shape != 0
        rng = random.Random(13)
        for _ in range(100):
            nd = rng.randint(1, 4)
            shape = tuple(rng.randint(0, 3) for _ in range(nd))
            t = tensor(*shape)
            ex = parse_expr(f"exists i in [0, {nd - 1}] : shape(v_1, i) = 0", {"v_1"})
            fa = parse_expr(f"forall i in [0, {nd - 1}] : shape(v_1, i) != 0", {"v_1"})
            assert (eval_expr(ex, {"v_1": t}) == BoolV(True)) == (
                eval_expr(fa, {"v_1": t}) == BoolV(False)
            )

    def test_determinism(self):
        rule = type_check(parse_rule(RULE15))
        b = {"v_1": tensor(4, 1, 3), "v_2": tensor(1, 3)}
        results = {check_rule(rule, b).status for _ in range(10)}
        assert len(results) == 1


class TestBroadcastOracle:
    def test_exhaustive_agreement_with_brute_force(self):
        rule = type_check(parse_rule(RULE15))
        shapes = [
            s for nd in (1, 2, 3) for s in itertools.product((1, 2, 3), repeat=nd)
        ]
        assert len(shapes) ** 2 >= 1500
        for s1 in shapes:
            for s2 in shapes:
                result = check_rule(rule, {"v_1": tensor(*s1), "v_2": tensor(*s2)})
                assert result.status in (CheckStatus.HOLDS, CheckStatus.FAILS)
                assert (result.status is CheckStatus.HOLDS) == brute_force_broadcastable(
                    s1, s2
                ), (s1, s2)
