"""Abstract input generation: buckets, blocking, corpus persistence."""

import json

import pytest

from invfuzz.absgen import (
    AbstractInput,
    BaseUnsat,
    BucketTable,
    CorruptCorpus,
    GenConfig,
    corpus_load,
    corpus_save,
    generate_abstract_inputs,
    sample_models,
)
from invfuzz.dsl import parse_rule, type_check
from invfuzz.executor import InProcessExecutor, get_target
from invfuzz.solver import Bounds, build_layout, eval_formula, lower_rule
from invfuzz.values import ApiParam, ApiSignature


def argmax_setup(rule_texts=()):
    target = get_target("ref.argmax")
    layout = build_layout(target.signature, Bounds())
    lowered = [
        lower_rule(type_check(parse_rule(t)), params, layout) for t, params in rule_texts
    ]
    return layout, lowered


DIM_RULE = "{v_1: tensor, v_2: int} |= (-1 * ndim(v_1) <= v_2) and (v_2 <= ndim(v_1) - 1)"


class TestBucketTable:
    def test_int_partition_covers_domain(self):
        t = BucketTable()
        assert t.check_partition(t.ints, -(2**31), 2**31 - 1)

    def test_dim_partition(self):
        t = BucketTable()
        assert t.check_partition(t.dims, 0, 64)

    def test_float_partition(self):
        t = BucketTable()
        assert t.check_partition(t.floats, -1024 * 10**6, 1024 * 10**6)

    def test_bool_partition(self):
        t = BucketTable()
        assert t.check_partition(t.bools, 0, 1)

    def test_boundary_singletons_present(self):
        t = BucketTable()
        assert {(b.lo, b.hi) for b in t.ints} >= {(-1, -1), (0, 0), (1, 1)}

    def test_clipping_to_variable_domain(self):
        layout, _ = argmax_setup()
        spec = layout.by_name["input.s[0]"]
        for b in BucketTable().for_var(spec):
            assert spec.lo <= b.lo <= b.hi <= spec.hi

    def test_enumerations_bucket_per_value(self):
        layout, _ = argmax_setup()
        spec = layout.by_name["input.d"]
        assert [(b.lo, b.hi) for b in BucketTable().for_var(spec)] == [
            (c, c) for c in range(6)
        ]


class TestGeneration:
    def gen(self, count=50, seed=7, executor="in-process", rule_texts=None):
        texts = rule_texts if rule_texts is not None else [(DIM_RULE, ("input", "dim"))]
        layout, lowered = argmax_setup(texts)
        cfg = GenConfig(target_count=count, seed=seed, timeout_s=60)
        ex = InProcessExecutor() if executor == "in-process" else None
        corpus, stats = generate_abstract_inputs(lowered, layout, BucketTable(), ex, cfg)
        return layout, lowered, corpus, stats

    def test_models_satisfy_invariants(self):
        _, lowered, corpus, _ = self.gen(count=30)
        for abs_input in corpus:
            for lw in lowered:
                assert eval_formula(lw.formula, abs_input.model)

    def test_models_pairwise_distinct(self):
        _, _, corpus, _ = self.gen(count=50)
        keys = {a.key() for a in corpus}
        assert len(keys) == len(corpus) == 50

    def test_single_ndim_invariant_varies_rest(self):
        texts = [("{v_1: tensor} |= ndim(v_1) = 1", ("input",))]
        _, _, corpus, _ = self.gen(count=25, rule_texts=texts)
        assert all(a.model["input.nd"] == 1 for a in corpus)
        assert len({a.model["input.s[0]"] for a in corpus}) >= 3
        assert len({a.model["input.d"] for a in corpus}) >= 2

    def test_blocking_moves_consecutive_values(self):
        _, _, corpus, _ = self.gen(count=50)
        for prev, cur in zip(corpus, corpus[1:]):
            for var in cur.provenance["blocked_vars"]:
                assert cur.model[var] != prev.model[var], var

    def test_bucket_coverage_of_free_dim(self):
        _, _, corpus, _ = self.gen(count=50)
        table = BucketTable()
        hit = {table.bucket_of("dims", a.model["input.s[0]"]) for a in corpus}
        assert len(hit) >= 3

    def test_reproducible(self):
        _, _, c1, _ = self.gen(count=20, seed=13)
        _, _, c2, _ = self.gen(count=20, seed=13)
        assert [a.model for a in c1] == [a.model for a in c2]
        assert [a.provenance for a in c1] == [a.provenance for a in c2]

    def test_base_unsat_reports_core(self):
        texts = [
            ("{v_1: tensor} |= ndim(v_1) = 1", ("input",)),
            ("{v_1: tensor} |= ndim(v_1) = 2", ("input",)),
        ]
        layout, lowered = argmax_setup(texts)
        with pytest.raises(BaseUnsat) as err:
            generate_abstract_inputs(
                lowered, layout, BucketTable(), None, GenConfig(target_count=5)
            )
        assert len(err.value.core) >= 1

    def test_validity_gate_excludes_crashing_models(self):
        target = get_target("ref.channel_shuffle")
        layout = build_layout(target.signature, Bounds())
        texts = [
            ("{v_1: tensor} |= ndim(v_1) >= 3", ("input",)),
            ("{v_1: int} |= v_1 >= 1", ("groups",)),
            (
                "{v_1: tensor, v_2: int} |= exists k in [0, 64] : shape(v_1, 1) = k * v_2",
                ("input", "groups"),
            ),
        ]
        lowered = [
            lower_rule(type_check(parse_rule(t)), params, layout) for t, params in texts
        ]
        cfg = GenConfig(target_count=30, seed=3, timeout_s=60)
        gated, _ = generate_abstract_inputs(lowered, layout, BucketTable(), InProcessExecutor(), cfg)
        # gated corpus never contains the seeded crash region groups > shape[1]
        assert all(
            a.model["groups.v"] <= a.model["input.s[1]"] for a in gated
        )
        ungated, _ = generate_abstract_inputs(lowered, layout, BucketTable(), None, cfg)
        assert any(a.model["groups.v"] > a.model["input.s[1]"] for a in ungated)

    def test_sample_models_counts(self):
        layout, lowered = argmax_setup([(DIM_RULE, ("input", "dim"))])
        models = sample_models(lowered, layout, BucketTable(), 30, 5)
        assert len(models) == 30
        assert models == sample_models(lowered, layout, BucketTable(), 30, 5)


class TestCorpusFiles:
    def corpus(self, n=10):
        return [
            AbstractInput({"x": i, "y": i * 2}, {"iteration": i, "bucket_choices": {}, "blocked_vars": []})
            for i in range(n)
        ]

    def test_save_load_roundtrip(self, tmp_path):
        path = tmp_path / "c.jsonl"
        corpus = self.corpus()
        corpus_save(corpus, path)
        assert corpus_load(path) == corpus

    def test_truncated_final_line(self, tmp_path):
        path = tmp_path / "c.jsonl"
        corpus_save(self.corpus(10), path)
        text = path.read_text().splitlines()
        text[-1] = text[-1][: len(text[-1]) // 2]
        path.write_text("\n".join(text) + "\n")
        with pytest.raises(CorruptCorpus) as err:
            corpus_load(path)
        assert err.value.line == 10
        assert len(err.value.recovered) == 9

    def test_empty_file(self, tmp_path):
        path = tmp_path / "c.jsonl"
        path.write_text("")
        assert corpus_load(path) == []

    def test_append_safe_format(self, tmp_path):
        path = tmp_path / "c.jsonl"
        corpus_save(self.corpus(3), path)
        with path.open("a") as fh:
            fh.write(json.dumps({"model": {"x": 99, "y": 0}, "provenance": {}}) + "\n")
        assert len(corpus_load(path)) == 4
