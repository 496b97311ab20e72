"""Invariant mining and validity-ratio refinement."""

import numpy as np
import pytest

from invfuzz.absgen import BucketTable
from invfuzz.dsl import parse_rule, type_check
from invfuzz.executor import InProcessExecutor, get_target, load_target_ruleset, seed_inputs
from invfuzz.learner import (
    EmptySeedSet,
    LearnConfig,
    LearnReport,
    enumerate_candidates,
    learn_and_refine,
    learn_invariants,
    refine,
)
from invfuzz.solver import Bounds, build_layout
from invfuzz.values import ApiParam, ApiSignature


def typed(text, name=""):
    return type_check(parse_rule(text, name=name or "t"))


class TestEnumerateCandidates:
    def test_two_tensor_rule_two_params(self):
        sig = ApiSignature("a.f", (ApiParam("input", "tensor"), ApiParam("other", "tensor")))
        rule = typed("{v_1: tensor, v_2: tensor} |= dtype_(v_1) = dtype_(v_2)")
        tuples, capped = enumerate_candidates(rule, sig)
        assert tuples == [("input", "other"), ("other", "input")]
        assert not capped

    def test_single_compatible_param(self):
        sig = ApiSignature("a.f", (ApiParam("input", "tensor"), ApiParam("alpha", "float")))
        rule = typed("{v_1: tensor} |= ndim(v_1) >= 0")
        tuples, _ = enumerate_candidates(rule, sig)
        assert tuples == [("input",)]

    def test_no_compatible_assignment(self):
        sig = ApiSignature("a.f", (ApiParam("x", "tensor"), ApiParam("y", "float")))
        rule = typed("{v_1: tensor, v_2: int} |= ndim(v_1) >= v_2")
        tuples, _ = enumerate_candidates(rule, sig)
        assert tuples == []

    def test_distinct_parameters_only(self):
        sig = ApiSignature("a.f", (ApiParam("x", "tensor"),))
        rule = typed("{v_1: tensor, v_2: tensor} |= ndim(v_1) = ndim(v_2)")
        tuples, _ = enumerate_candidates(rule, sig)
        assert tuples == []

    def test_union_binding_accepts_narrower_param(self):
        sig = ApiSignature("a.f", (ApiParam("n", "int"),))
        rule = typed("{v_1: int|float} |= v_1 >= 0")
        tuples, _ = enumerate_candidates(rule, sig)
        assert tuples == [("n",)]

    def test_cap_on_wide_signatures(self):
        params = tuple(ApiParam(f"p{i}", "int") for i in range(9))
        sig = ApiSignature("a.wide", params)
        rule = typed(
            "{v_1: int, v_2: int, v_3: int, v_4: int} |= v_1 + v_2 + v_3 + v_4 >= 0"
        )
        tuples, capped = enumerate_candidates(rule, sig)
        assert capped and len(tuples) == 512


class TestMining:
    def setup_method(self):
        self.api = "ref.argmax"
        self.target = get_target(self.api)
        self.seeds = seed_inputs(self.api, 60, np.random.default_rng(2))

    def test_needs_seeds(self):
        with pytest.raises(EmptySeedSet):
            learn_invariants([typed("{v_1: tensor} |= true")], [], self.target.signature)

    def test_counterexample_recorded(self):
        # the seed pool contains 3-D tensors, so ndim = 2 cannot hold
        report = LearnReport(api=self.api)
        rule = typed("{v_1: tensor} |= ndim(v_1) = 2")
        invs = learn_invariants([rule], self.seeds, self.target.signature, report)
        assert invs == []
        assert len(report.dropped_not_invariant) == 1
        inv, counterexample = report.dropped_not_invariant[0]
        assert counterexample.arg("input").ndim != 2

    def test_eval_error_recorded_separately(self):
        report = LearnReport(api=self.api)
        rule = typed("{v_1: tensor} |= shape(v_1, 3) >= 1")
        invs = learn_invariants([rule], self.seeds, self.target.signature, report)
        assert invs == []
        assert len(report.dropped_eval_error) == 1
        assert "IndexOutOfRange" in report.dropped_eval_error[0][1]

    def test_kept_invariants_hold_on_every_seed(self):
        from invfuzz.evaluator import CheckStatus, check_rule

        rules = list(load_target_ruleset(self.api).values())
        invs = learn_invariants(rules, self.seeds, self.target.signature)
        assert invs
        for inv in invs:
            for seed in self.seeds:
                lookup = seed.as_dict()
                binding = {
                    v: lookup[p] for (v, _), p in zip(inv.rule.bindings, inv.params)
                }
                assert check_rule(inv.rule, binding).status is CheckStatus.HOLDS

    def test_monotone_in_seeds(self):
        rules = [
            typed("{v_1: tensor} |= ndim(v_1) >= 1"),
            typed("{v_1: tensor} |= ndim(v_1) >= 3"),
            typed("{v_1: int} |= v_1 >= 0"),
        ]
        smaller = learn_invariants(rules, self.seeds[:10], self.target.signature)
        larger = learn_invariants(rules, self.seeds, self.target.signature)
        smaller_set = {(i.rule.name, i.params) for i in smaller}
        larger_set = {(i.rule.name, i.params) for i in larger}
        assert larger_set <= smaller_set


class TestRefinement:
    def run_refine(self, api, seed=7, extra_rules=()):
        target = get_target(api)
        layout = build_layout(target.signature, Bounds())
        rules = list(load_target_ruleset(api).values()) + list(extra_rules)
        seeds = seed_inputs(api, 117, np.random.default_rng(seed))
        return learn_and_refine(
            rules, seeds, layout, BucketTable(), InProcessExecutor(),
            LearnConfig(trials=30, seed=seed),
        )

    def test_duplicate_broadcast_encodings_reduce_to_one(self):
        report = self.run_refine("ref.add_broadcast")
        broadcast = [
            i for i in report.kept
            if i.rule.name in ("gt_broadcastable", "alt_broadcastable")
        ]
        assert len(broadcast) == 1
        dropped_names = {i.rule.name for i in report.dropped_redundant}
        assert {"gt_broadcastable", "alt_broadcastable"} & dropped_names

    def test_tautology_is_discarded(self):
        taut = typed("{v_1: tensor} |= ndim(v_1) >= 0", name="taut")
        report = self.run_refine("ref.argmax", extra_rules=[taut])
        assert all(i.rule.name != "taut" for i in report.kept)

    def test_validity_preserved_within_one_trial(self):
        report = self.run_refine("ref.add_broadcast")
        assert report.v_final >= report.v_orig - 1 / 30

    def test_partition_is_complete(self):
        report = self.run_refine("ref.narrow")
        partition = (
            len(report.kept)
            + len(report.dropped_redundant)
            + len(report.dropped_not_invariant)
            + len(report.dropped_eval_error)
        )
        assert partition == report.candidates_total

    def test_deterministic_report(self):
        a = self.run_refine("ref.matmul2d", seed=3).to_doc()
        b = self.run_refine("ref.matmul2d", seed=3).to_doc()
        assert a == b

    def test_refine_on_empty_set(self):
        target = get_target("ref.argmax")
        layout = build_layout(target.signature, Bounds())
        report = refine([], layout, BucketTable(), InProcessExecutor(), LearnConfig(seed=1))
        assert report.kept == [] and report.v_orig >= 0
