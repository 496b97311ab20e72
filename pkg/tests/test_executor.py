"""Reference targets, wire protocol, and the subprocess harness."""

import json
import signal
import subprocess
import time

import numpy as np
import pytest

from invfuzz.evaluator import CheckStatus, check_rule
from invfuzz.executor import (
    InProcessExecutor,
    ProtocolError,
    Status,
    SubprocessExecutor,
    UnknownApi,
    get_target,
    ground_truth,
    list_reference_targets,
    probe_inputs,
    reference_worker_cmd,
    seed_inputs,
    validity_predicate,
)
from invfuzz.values import ApiInput, IntV, TensorV


def tensor(*shape, dtype=0, elements=None):
    if elements is not None:
        elements = np.asarray(elements, dtype=np.float64)
        lo, hi = float(elements.min()), float(elements.max())
        return TensorV(tuple(shape), dtype, lo, hi, elements)
    return TensorV(tuple(shape), dtype, 0.0, 1.0)


class TestCatalog:
    def test_at_least_six_targets(self):
        targets = list_reference_targets()
        names = [t.name for t in targets]
        assert len(names) >= 6
        assert {"ref.add_broadcast", "ref.narrow", "ref.argmax",
                "ref.channel_shuffle", "ref.matmul2d", "ref.lcm"} <= set(names)

    def test_catalog_sorted_and_stable(self):
        a = [t.name for t in list_reference_targets()]
        b = [t.name for t in list_reference_targets()]
        assert a == b == sorted(a)

    def test_narrow_signature(self):
        sig = get_target("ref.narrow").signature
        assert [(p.name, p.type_text) for p in sig.params] == [
            ("input", "tensor"), ("dim", "int"), ("start", "int"), ("length", "int"),
        ]

    def test_docs_mention_every_parameter(self):
        for target in list_reference_targets():
            for p in target.signature.params:
                assert p.name in target.doc, (target.name, p.name)

    def test_error_vocabulary_nonempty(self):
        for target in list_reference_targets():
            assert target.error_vocab

    def test_unknown_api(self):
        with pytest.raises(UnknownApi):
            get_target("ref.nope")


class TestRun:
    def setup_method(self):
        self.ex = InProcessExecutor()

    def test_broadcastable_pair_ok(self):
        res = self.ex.run_input(
            ApiInput("ref.add_broadcast",
                     (("input", tensor(5, 3, 4, 1)), ("other", tensor(3, 1, 1)))),
        )
        assert res.status is Status.OK

    def test_incompatible_pair_error(self):
        res = self.ex.run_input(
            ApiInput("ref.add_broadcast", (("input", tensor(3, 4)), ("other", tensor(2, 4)))),
        )
        assert res.status is Status.ERROR
        assert "sizes must be equal or 1" in res.error_message

    def test_channel_shuffle_crash(self):
        res = self.ex.run_input(
            ApiInput("ref.channel_shuffle", (("input", tensor(1, 3, 4)), ("groups", IntV(7)))),
        )
        assert res.status is Status.CRASH
        assert res.signal == int(signal.SIGFPE)

    def test_branch_counters_deterministic(self):
        inp = ApiInput("ref.narrow", (
            ("input", tensor(3, 4, elements=np.arange(12))),
            ("dim", IntV(-1)), ("start", IntV(1)), ("length", IntV(2)),
        ))
        a = self.ex.run_input(inp, want_outputs=True)
        b = self.ex.run_input(inp, want_outputs=True)
        assert a.covered_branches == b.covered_branches
        assert "narrow.b_dim_neg" in a.covered_branches

    def test_narrow_semantics(self):
        inp = ApiInput("ref.narrow", (
            ("input", tensor(4, elements=[0.0, 1.0, 2.0, 3.0])),
            ("dim", IntV(0)), ("start", IntV(1)), ("length", IntV(2)),
        ))
        res = self.ex.run_input(inp, want_outputs=True)
        assert res.ok
        assert res.outputs[0].elements.tolist() == [1.0, 2.0]

    def test_argmax_semantics(self):
        inp = ApiInput("ref.argmax", (
            ("input", tensor(2, 3, elements=[0, 5, 1, 9, 2, 3])),
            ("dim", IntV(1)),
        ))
        res = self.ex.run_input(inp, want_outputs=True)
        assert res.outputs[0].elements.tolist() == [1.0, 0.0]

    def test_wall_time_recorded(self):
        res = self.ex.run_input(
            ApiInput("ref.argmax", (("input", tensor(2)), ("dim", IntV(0)))),
        )
        assert res.wall_time_us >= 0


class TestGroundTruthCoherence:
    @pytest.mark.parametrize("api", [t.name for t in list_reference_targets()])
    def test_validity_predicate_matches_gt_conjunction(self, api):
        """Exhaustive small-bounds check: predicate truth equals the
        conjunction of ground-truth constraints on every probe input."""
        gt = ground_truth(api)
        count = 0
        for inp in probe_inputs(api):
            count += 1
            lookup = inp.as_dict()
            conj = True
            for rule, params in gt:
                binding = {v: lookup.get(p) for (v, _), p in zip(rule.bindings, params)}
                if check_rule(rule, binding).status is not CheckStatus.HOLDS:
                    conj = False
                    break
            assert conj == validity_predicate(api, inp), encode_args(inp)
        assert count >= 100


def encode_args(inp):
    from invfuzz.values import encode_input

    return json.dumps(encode_input(inp))


class TestSeeds:
    @pytest.mark.parametrize("api", [t.name for t in list_reference_targets()])
    def test_seed_count_and_validity(self, api):
        ex = InProcessExecutor()
        seeds = seed_inputs(api, 117, np.random.default_rng(42))
        assert len(seeds) == 117
        for s in seeds:
            assert ex.run_input(s).status is Status.OK

    def test_diversity_floor(self):
        seeds = seed_inputs("ref.add_broadcast", 117, np.random.default_rng(1))
        ndims = {s.arg("input").ndim for s in seeds}
        dtypes = {s.arg("input").dtype for s in seeds}
        assert len(ndims) >= 3 and len(dtypes) >= 2

    def test_channel_shuffle_seeds_divisible(self):
        seeds = seed_inputs("ref.channel_shuffle", 60, np.random.default_rng(2))
        for s in seeds:
            assert s.arg("input").shape[1] % s.arg("groups").value == 0

    def test_single_seed(self):
        assert len(seed_inputs("ref.lcm", 1, np.random.default_rng(0))) == 1


class TestSubprocessHarness:
    def test_handshake_and_roundtrip(self):
        with SubprocessExecutor(reference_worker_cmd()) as ex:
            assert len(ex.catalog) >= 6
            res = ex.run_input(
                ApiInput("ref.argmax", (("input", tensor(3, elements=[1, 9, 2])), ("dim", IntV(0)))),
                want_outputs=True,
            )
            assert res.ok and res.outputs[0].elements.tolist() == [1.0]

    def test_real_crash_containment_and_respawn(self):
        with SubprocessExecutor(reference_worker_cmd()) as ex:
            crash = ex.run_input(
                ApiInput("ref.channel_shuffle", (("input", tensor(1, 3, 4)), ("groups", IntV(7)))),
            )
            assert crash.status is Status.CRASH
            assert crash.signal == int(signal.SIGFPE)
            again = ex.run_input(
                ApiInput("ref.argmax", (("input", tensor(2)), ("dim", IntV(0)))),
            )
            assert again.ok  # one result per request, even across child death

    def test_ids_strictly_increase(self):
        with SubprocessExecutor(reference_worker_cmd()) as ex:
            ids = [
                ex.run_input(
                    ApiInput("ref.argmax", (("input", tensor(2)), ("dim", IntV(0))))
                ).id
                for _ in range(3)
            ]
            assert ids == sorted(set(ids))

    def test_timeout_synthesized(self):
        # a worker that never answers: the harness must report Timeout
        cmd = ["python3", "-c",
               "import sys,time,json;"
               "print(json.dumps({'type':'hello','version':'1','apis':[]}),flush=True);"
               "sys.stdin.readline(); time.sleep(60)"]
        with SubprocessExecutor(cmd, call_timeout_s=0.5) as ex:
            res = ex.run_input(
                ApiInput("ref.argmax", (("input", tensor(2)), ("dim", IntV(0)))),
            )
            assert res.status is Status.TIMEOUT

    def test_malformed_child_frame_raises_protocol_error(self):
        cmd = ["python3", "-c",
               "import sys,json;"
               "print(json.dumps({'type':'hello','version':'1','apis':[]}),flush=True);"
               "sys.stdin.readline(); print('not json', flush=True)"]
        with SubprocessExecutor(cmd, call_timeout_s=2) as ex:
            with pytest.raises(ProtocolError):
                ex.run_input(
                    ApiInput("ref.argmax", (("input", tensor(2)), ("dim", IntV(0)))),
                )

    def test_worker_skips_malformed_request_lines(self):
        proc = subprocess.Popen(
            reference_worker_cmd(), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True,
        )
        try:
            hello = json.loads(proc.stdout.readline())
            assert hello["version"] == "1"
            proc.stdin.write("this is not a frame\n")
            proc.stdin.write(json.dumps({
                "id": 1, "api": "ref.argmax", "backend": "cpu",
                "args": {"input": {"kind": "tensor", "shape": [2], "dtype": "float32",
                                    "lo": 0, "hi": 1},
                         "dim": {"kind": "int", "value": 0}},
            }) + "\n")
            proc.stdin.flush()
            res = json.loads(proc.stdout.readline())
            assert res["id"] == 1 and res["status"] == "ok"
        finally:
            proc.kill()
            proc.wait()

    def test_unknown_api_is_error_response(self):
        with SubprocessExecutor(reference_worker_cmd()) as ex:
            res = ex.run_input(
                ApiInput("ref.missing", (("input", tensor(2)),)),
            )
            assert res.status is Status.ERROR
            assert "unknown API" in res.error_message
