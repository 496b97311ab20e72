"""Rule sources: files, enumerator, mutators, error DB, and the LLM loop."""

import time

import numpy as np
import pytest

from invfuzz.dsl import render_rule, type_check
from invfuzz.executor import InProcessExecutor, get_target, seed_inputs
from invfuzz.sources import (
    ErrorDb,
    FeedbackKind,
    LlmLimits,
    ScriptedTransport,
    collect_errors,
    enumerate_rules,
    generate_rules_llm,
    load_ruleset_text,
    make_mutators,
    normalize_error,
    prompt_assets,
    random_invalid_input,
    split_rule_records,
)
from invfuzz.values import decode_input, encode_input

GOOD_RULE = (
    "# name: dim_ok\n# desc: dim indexes input\n"
    "{v_1: tensor, v_2: int} |= (-1 * ndim(v_1) <= v_2) and (v_2 <= ndim(v_1) - 1)"
)


class TestRulesetLoading:
    def test_shipped_broadcast_file_has_both_encodings(self):
        from importlib import resources

        text = resources.files("invfuzz.assets.rulesets").joinpath("broadcast.rules").read_text()
        loaded = load_ruleset_text(text, "broadcast.rules")
        names = {r.name for r in loaded.rules}
        assert {"gt_broadcastable", "alt_broadcastable"} <= names
        assert loaded.errors == []

    def test_partial_load(self):
        text = (
            GOOD_RULE
            + "\n\n# name: broken\n# desc: bad arity\n{v_1: tensor} |= shape(v_1)\n"
            + "\n# name: unused\n# desc: spare binding\n{v_1: tensor, v_2: int} |= ndim(v_1) >= 0\n"
        )
        loaded = load_ruleset_text(text, "mix.rules")
        assert [r.name for r in loaded.rules] == ["dim_ok"]
        assert len(loaded.errors) == 2

    def test_empty_text(self):
        loaded = load_ruleset_text("", "empty.rules")
        assert loaded.rules == [] and loaded.errors == []

    def test_few_shot_examples_cover_types(self):
        loaded = load_ruleset_text(prompt_assets()["examples"], "few_shot.rules")
        assert loaded.errors == []
        types = {str(t) for r in loaded.rules for _, t in r.bindings}
        assert {"tensor", "int", "float", "bool", "dtype", "str",
                "list(int)", "tuple(int)", "int|float"} <= types


class TestEnumerator:
    def test_requested_count_distinct_and_typed(self):
        sig = get_target("ref.narrow").signature
        rules = enumerate_rules(sig, max_depth=3, count=50, seed=4)
        texts = {render_rule(r.rule) for r in rules}
        assert len(rules) == 50 and len(texts) == 50
        for r in rules:
            type_check(r.rule)  # must not raise

    def test_depth_one_is_atomic(self):
        sig = get_target("ref.argmax").signature
        rules = enumerate_rules(sig, max_depth=1, count=20, seed=4)
        from invfuzz.dsl import And, Exists, ForAll, IfThen, Or, walk

        for r in rules:
            body = r.rule.body
            # depth 1 bodies may guard a shape access but never nest logic
            assert not any(isinstance(n, (And, Or, ForAll, Exists)) for n in walk(body) if n is not body) or isinstance(body, IfThen)

    def test_deterministic(self):
        sig = get_target("ref.lcm").signature
        a = [render_rule(r.rule) for r in enumerate_rules(sig, 3, 30, seed=9)]
        b = [render_rule(r.rule) for r in enumerate_rules(sig, 3, 30, seed=9)]
        assert a == b

    def test_lowerable_by_construction(self):
        from invfuzz.learner import enumerate_candidates
        from invfuzz.solver import Bounds, build_layout, lower_rule

        target = get_target("ref.add_broadcast")
        layout = build_layout(target.signature, Bounds())
        for rule in enumerate_rules(target.signature, 3, 40, seed=21):
            tuples, _ = enumerate_candidates(rule, target.signature)
            for params in tuples[:2]:
                lowered = lower_rule(rule, params, layout)
                assert not lowered.needs_recheck


class TestMutators:
    def setup_method(self):
        self.api = "ref.narrow"
        self.target = get_target(self.api)
        self.seeds = seed_inputs(self.api, 8, np.random.default_rng(1))
        self.mutators = make_mutators(self.target.signature)

    def test_all_nine_present(self):
        assert [n for n, _ in self.mutators] == [
            "drop-optional-param", "tensor-empty", "elements-zero", "int-negate",
            "int-extreme", "dtype-swap", "rank-plus", "rank-minus", "kind-confusion",
        ]

    def test_mutants_stay_document_well_formed(self):
        for seed in self.seeds:
            for name, mutate in self.mutators:
                mutant = mutate(seed)
                assert decode_input(encode_input(mutant)) == mutant, name

    def test_mutators_are_pure(self):
        seed = self.seeds[0]
        doc_before = encode_input(seed)
        for _, mutate in self.mutators:
            mutate(seed)
        assert encode_input(seed) == doc_before

    def test_specific_effects(self):
        seed = self.seeds[0]
        by_name = dict(self.mutators)
        assert by_name["int-negate"](seed).arg("dim").value == -seed.arg("dim").value
        assert by_name["int-extreme"](seed).arg("start").value == 2**31 - 1
        assert by_name["rank-plus"](seed).arg("input").ndim == seed.arg("input").ndim + 1
        assert by_name["rank-minus"](seed).arg("input").ndim == seed.arg("input").ndim - 1
        assert by_name["tensor-empty"](seed).arg("input").numel == 0
        zeroed = by_name["elements-zero"](seed).arg("input")
        assert np.all(zeroed.elements == 0.0)
        confused = by_name["kind-confusion"](seed)
        assert confused.arg("input").kind == "int"
        assert confused.arg("dim").kind == "tensor"

    def test_drop_optional(self):
        target = get_target("ref.add_broadcast")
        seeds = seed_inputs("ref.add_broadcast", 20, np.random.default_rng(3))
        drop = dict(make_mutators(target.signature))["drop-optional-param"]
        with_alpha = next(s for s in seeds if s.arg("alpha").kind == "float")
        assert drop(with_alpha).arg("alpha").kind == "none"


class TestErrorCollection:
    def test_normalization_dedupes(self):
        db = ErrorDb()
        assert db.add("a.f", "size of tensor a (3) must match b (2)")
        assert not db.add("a.f", "size  of tensor a (7) must match b (9)")
        assert len(db.messages("a.f")) == 1

    def test_normalize(self):
        assert normalize_error("Dim 3 out of  Range 10") == "dim N out of range N"

    def test_collect_captures_shape_mismatch_vocabulary(self):
        api = "ref.add_broadcast"
        target = get_target(api)
        seeds = seed_inputs(api, 10, np.random.default_rng(4))
        db, crashes = collect_errors(
            api, seeds, make_mutators(target.signature), InProcessExecutor(),
            target.signature, random_budget_s=0.3,
        )
        assert any("sizes must be equal or 1" in m for m in db.messages(api))
        assert crashes == []  # this target has no crash defect

    def test_crashes_are_findings_not_messages(self):
        api = "ref.channel_shuffle"
        target = get_target(api)
        seeds = seed_inputs(api, 10, np.random.default_rng(4))
        db, crashes = collect_errors(
            api, seeds, make_mutators(target.signature), InProcessExecutor(),
            target.signature, random_budget_s=0.3,
        )
        assert crashes  # int-extreme pushes groups far above the channel dim
        assert not any("floating point" in m for m in db.messages(api))

    def test_roundtrip_file(self, tmp_path):
        db = ErrorDb()
        db.add("a.f", "boom 1")
        db.add("a.g", "bang 2")
        path = tmp_path / "errors.json"
        db.save(path)
        again = ErrorDb.load(path)
        assert again.to_doc() == db.to_doc()

    def test_random_invalid_inputs_are_wellformed(self):
        sig = get_target("ref.narrow").signature
        rng = np.random.default_rng(8)
        for _ in range(30):
            inp = random_invalid_input(sig, rng)
            assert decode_input(encode_input(inp)) == inp


class TestLlmLoop:
    def test_record_splitting_ignores_prose(self):
        text = "Here are rules:\n\n" + GOOD_RULE + "\n\nhope that helps!"
        records = split_rule_records(text)
        assert len(records) == 1 and records[0][0] == "dim_ok"

    def test_five_feedback_kinds_in_sequence(self):
        responses = [
            "just prose, no records",
            "# name: r1\n# desc: unused binding\n{v_1: tensor, v_2: int} |= ndim(v_1) >= 0",
            GOOD_RULE,
            GOOD_RULE,
            "# name: broken\n# desc: arity\n{v_1: tensor} |= shape(v_1)",
        ]
        result = generate_rules_llm(
            "ref.narrow", "doc", [], ScriptedTransport(responses), LlmLimits()
        )
        assert [f.kind for f in result.feedback_log] == [
            FeedbackKind.FORMAT_ERROR,
            FeedbackKind.REDUNDANT_BINDINGS,
            FeedbackKind.SUCCESS,
            FeedbackKind.DUPLICATE_RULE,
            FeedbackKind.PARSING_ERROR,
        ]
        assert len(result.rules) == 1

    def test_feedback_is_injected_into_next_prompt(self):
        transport = ScriptedTransport(["gibberish", GOOD_RULE])
        generate_rules_llm("ref.narrow", "doc", [], transport, LlmLimits())
        assert "format_error" in transport.prompts[1]

    def test_failure_bound_stops_loop(self):
        transport = ScriptedTransport(["nope"] * 500)
        result = generate_rules_llm(
            "ref.narrow", "doc", [], transport, LlmLimits(failures=100, timeout_s=60)
        )
        assert result.failures == 100
        assert result.turns == 100

    def test_timeout_stops_loop(self):
        transport = ScriptedTransport(["nope"] * 1000, delay_s=0.02)
        t0 = time.monotonic()
        result = generate_rules_llm(
            "ref.narrow", "doc", [], transport, LlmLimits(failures=10**6, timeout_s=0.2)
        )
        assert time.monotonic() - t0 < 2.0
        assert result.turns < 1000

    def test_multi_rule_turns_accepted(self):
        multi = (
            "# name: a\n# desc: rank at least one\n{v_1: tensor} |= ndim(v_1) >= 1\n\n"
            "# name: b\n# desc: rank at most four\n{v_1: tensor} |= ndim(v_1) <= 4\n\n"
            "# name: c\n# desc: positive dim\n{v_1: int} |= v_1 >= 0"
        )
        result = generate_rules_llm("ref.narrow", "doc", [], ScriptedTransport([multi]), LlmLimits())
        assert [r.name for r in result.rules] == ["a", "b", "c"]

    def test_throughput_with_multi_rule_stub(self):
        blocks = []
        for i in range(5):
            blocks.append(
                f"# name: gen_{i}\n# desc: bound {i}\n{{v_1: tensor}} |= ndim(v_1) <= {i}"
            )
        transport = ScriptedTransport(["\n\n".join(blocks)] * 10)
        result = generate_rules_llm("ref.narrow", "doc", [], transport, LlmLimits())
        # only the first turn is novel; later turns are duplicates
        assert len(result.rules) == 5
        assert result.turns == 10
