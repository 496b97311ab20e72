"""The online phase: concretize abstract inputs, execute targets on every
backend, apply the crash oracle then the differential oracle, and report
deduplicated findings with reproduction seeds.

Concretization builds each tensor from its model descriptors (ndim, shape,
dtype, value range) and samples elements uniformly from the range; integer
dtypes sample integers, bool tensors sample {0, 1}, complex tensors stay
range-only. Rules whose lowering approximated a min/max bound are re-checked
on the sampled elements, resampling up to 8 times.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .absgen import AbstractInput, Corpus
from .evaluator import CheckStatus, check_rule
from .solver import RATIONAL_SCALE, LoweredRule, SymbolicLayout
from .values import (
    ApiInput,
    BoolV,
    ConcreteValue,
    DtypeV,
    FloatV,
    IntV,
    ListV,
    StrV,
    TensorV,
    TupleV,
    encode_input,
)

RECHECK_ATTEMPTS = 8


class ConcretizeFailure(Exception):
    """Approximated min/max constraints still unsatisfied after resampling."""


class ByteBudgetExceeded(Exception):
    """Defense in depth; unreachable when layout invariants hold."""


class EmptyCorpus(Exception):
    pass


class FindingKind(Enum):
    CRASH = "crash"
    NAN = "nan"
    OVERFLOW = "overflow"
    INCONSISTENT = "inconsistent"


@dataclass
class FuzzConfig:
    budget_s: float = 180.0
    seed: int = 0
    tolerance: float = 0.01  # absolute, elementwise
    backends: tuple[str, ...] = ("cpu", "gpu")
    max_inputs: Optional[int] = None  # count-bounded runs for reproducibility

    def __post_init__(self):
        if self.budget_s <= 0:
            raise ValueError("budget must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")


@dataclass
class Finding:
    kind: FindingKind
    api: str
    input: ApiInput
    backends: tuple[str, ...]
    evidence: str
    seed: int  # element seed; with the model below it replays byte-identically
    model: dict[str, int]
    count: int = 1

    def dedup_key(self) -> tuple:
        normalized = re.sub(r"\d+", "N", self.evidence)
        return (self.kind.value, self.api, hashlib.sha256(normalized.encode()).hexdigest()[:16])

    def to_doc(self) -> dict:
        return {
            "kind": self.kind.value,
            "api": self.api,
            "input": encode_input(self.input),
            "backends": list(self.backends),
            "evidence": self.evidence,
            "seed": self.seed,
            "model": self.model,
            "count": self.count,
        }


@dataclass
class FuzzReport:
    api: str
    seed: int
    generated: int = 0
    valid: int = 0
    invalid: int = 0
    crashed: int = 0
    concretize_failures: int = 0
    findings: list[Finding] = field(default_factory=list)
    coverage: list[str] = field(default_factory=list)
    elapsed_s: float = 0.0
    concretize_total_s: float = 0.0

    @property
    def validity_ratio(self) -> float:
        return self.valid / self.generated if self.generated else 0.0

    @property
    def throughput(self) -> float:
        return self.generated / self.elapsed_s if self.elapsed_s > 0 else 0.0

    @property
    def concretize_mean_ms(self) -> float:
        return 1000.0 * self.concretize_total_s / self.generated if self.generated else 0.0

    def to_doc(self) -> dict:
        return {
            "api": self.api,
            "seed": self.seed,
            "generated": self.generated,
            "valid": self.valid,
            "invalid": self.invalid,
            "crashed": self.crashed,
            "concretize_failures": self.concretize_failures,
            "validity_ratio": self.validity_ratio,
            "findings": [f.to_doc() for f in self.findings],
            "coverage": self.coverage,
            "timing": {
                "elapsed_s": self.elapsed_s,
                "throughput_per_s": self.throughput,
                "concretize_mean_ms": self.concretize_mean_ms,
            },
        }


# ---------------------------------------------------------------------------
# Concretization


def _sample_elements(
    rng: np.random.Generator, kind: str, numel: int, lo: float, hi: float
) -> Optional[np.ndarray]:
    if kind == "complex":
        return None  # complex tensors carry ranges only
    if kind == "float":
        return rng.uniform(lo, hi, size=numel)
    if kind == "bool":
        cands = [v for v in (0.0, 1.0) if lo <= v <= hi]
        if cands:
            return rng.choice(np.asarray(cands), size=numel)
        return np.clip(np.round(rng.uniform(lo, hi, size=numel)), lo, hi)
    # integer kinds
    lo_i, hi_i = math.ceil(lo), math.floor(hi)
    if lo_i <= hi_i:
        return rng.integers(lo_i, hi_i + 1, size=numel).astype(np.float64)
    return np.clip(np.round(rng.uniform(lo, hi, size=numel)), lo, hi)


def _tensor_from_model(
    model: dict[str, int], layout: SymbolicLayout, param: str, rng: np.random.Generator
) -> TensorV:
    names = layout.tensor_block(param)
    nd = model[names["nd"]]
    shape = tuple(model[names[f"s{i}"]] for i in range(nd))
    code = model[names["d"]]
    lo = model[names["lo"]] / RATIONAL_SCALE
    hi = model[names["hi"]] / RATIONAL_SCALE
    entry = layout.bounds.dtypes.by_code(code)
    numel = int(np.prod(shape)) if shape else 1
    if numel * entry.byte_width > layout.bounds.max_tensor_bytes:
        raise ByteBudgetExceeded(f"{param}: {numel} x {entry.byte_width} bytes")
    elements = _sample_elements(rng, entry.kind, numel, lo, hi)
    return TensorV(shape, code, lo, hi, elements)


def _scalar_from_model(
    model: dict[str, int], layout: SymbolicLayout, param: str
) -> ConcreteValue:
    spec = layout.by_name[f"{param}.v"]
    raw = model[spec.name]
    if spec.vclass == "int":
        return IntV(raw)
    if spec.vclass == "float":
        return FloatV(raw / RATIONAL_SCALE)
    if spec.vclass == "bool":
        return BoolV(bool(raw))
    if spec.vclass == "dtype":
        return DtypeV(raw)
    return StrV(layout.string_domains[param][raw])


def _seq_from_model(
    model: dict[str, int], layout: SymbolicLayout, param: str, ctor: str, elem_kind: str
) -> ConcreteValue:
    length = model[f"{param}.len"]
    items: list[ConcreteValue] = []
    for i in range(length):
        raw = model[f"{param}.e[{i}]"]
        if elem_kind == "int":
            items.append(IntV(raw))
        elif elem_kind == "float":
            items.append(FloatV(raw / RATIONAL_SCALE))
        elif elem_kind == "bool":
            items.append(BoolV(bool(raw)))
        else:
            items.append(DtypeV(raw))
    return ListV(tuple(items)) if ctor == "list" else TupleV(tuple(items))


def concretize(
    abs_input: AbstractInput,
    layout: SymbolicLayout,
    element_seed: int,
    rechecks: Sequence[LoweredRule] = (),
) -> ApiInput:
    """Construct a concrete input from a total model. Deterministic for a
    given (model, element_seed, rechecks) triple, including the resample
    loop, so findings replay byte-identically."""
    from .dsl import PrimType, SeqType, TensorType  # cheap, avoids top-level clutter

    model = abs_input.model
    rng = np.random.default_rng(element_seed)
    for attempt in range(RECHECK_ATTEMPTS):
        args: list[tuple[str, ConcreteValue]] = []
        for p in layout.sig.params:
            ty = layout.param_types[p.name]
            if isinstance(ty, TensorType):
                args.append((p.name, _tensor_from_model(model, layout, p.name, rng)))
            elif isinstance(ty, PrimType):
                args.append((p.name, _scalar_from_model(model, layout, p.name)))
            elif isinstance(ty, SeqType):
                args.append(
                    (p.name, _seq_from_model(model, layout, p.name, ty.ctor, ty.elem.kind))
                )
            else:
                raise ByteBudgetExceeded(f"unsupported parameter type {ty}")
        inp = ApiInput(layout.sig.api, tuple(args))
        if not rechecks:
            return inp
        binding_ok = True
        lookup = inp.as_dict()
        for lw in rechecks:
            binding = {
                var: lookup[param] for (var, _), param in zip(lw.rule.bindings, lw.params)
            }
            if check_rule(lw.rule, binding).status is not CheckStatus.HOLDS:
                binding_ok = False
                break
        if binding_ok:
            return inp
    raise ConcretizeFailure(
        f"approximated constraints unsatisfied after {RECHECK_ATTEMPTS} resamples"
    )


# ---------------------------------------------------------------------------
# Differential oracle


@dataclass
class Verdict:
    agree: bool
    kind: Optional[FindingKind] = None
    evidence: str = ""


def _out_arrays(outputs: list[ConcreteValue]) -> list[Optional[np.ndarray]]:
    return [
        v.elements.reshape(v.shape) if isinstance(v, TensorV) and v.elements is not None else None
        for v in outputs
    ]


def compare_outputs(
    a: list[ConcreteValue], b: list[ConcreteValue], tolerance: float
) -> Verdict:
    """The three differential categories: NaN when exactly one side yields
    NaN, Overflow when exactly one side overflows to infinity, Inconsistent
    for shape mismatches or numeric drift beyond the tolerance. Non-numeric
    outputs compare exactly."""
    if len(a) != len(b):
        return Verdict(False, FindingKind.INCONSISTENT, f"output arity {len(a)} vs {len(b)}")
    for va, vb in zip(a, b):
        if isinstance(va, TensorV) and isinstance(vb, TensorV):
            if va.shape != vb.shape:
                return Verdict(
                    False,
                    FindingKind.INCONSISTENT,
                    f"output shapes differ: {list(va.shape)} vs {list(vb.shape)}",
                )
            ea = va.elements.reshape(-1) if va.elements is not None else None
            eb = vb.elements.reshape(-1) if vb.elements is not None else None
            if ea is None or eb is None:
                if (va.dtype, va.lo, va.hi) != (vb.dtype, vb.lo, vb.hi):
                    return Verdict(
                        False, FindingKind.INCONSISTENT, "output summaries differ"
                    )
                continue
            nan_a, nan_b = int(np.isnan(ea).sum()), int(np.isnan(eb).sum())
            if (nan_a > 0) != (nan_b > 0):
                return Verdict(
                    False,
                    FindingKind.NAN,
                    f"NaN on one backend only ({nan_a} vs {nan_b} NaNs)",
                )
            inf_a, inf_b = int(np.isinf(ea).sum()), int(np.isinf(eb).sum())
            if (inf_a > 0) != (inf_b > 0):
                return Verdict(
                    False,
                    FindingKind.OVERFLOW,
                    f"arithmetic overflow on one backend only ({inf_a} vs {inf_b} infs)",
                )
            mask = np.isfinite(ea) & np.isfinite(eb)
            if mask.any():
                diff = float(np.max(np.abs(ea[mask] - eb[mask])))
                if diff > tolerance:
                    return Verdict(
                        False, FindingKind.INCONSISTENT, f"max abs diff {diff:g} > {tolerance:g}"
                    )
        elif va != vb:
            return Verdict(False, FindingKind.INCONSISTENT, f"outputs differ: {va!r} vs {vb!r}")
    return Verdict(True)


class BackendUnavailable(Exception):
    pass


def run_differential(
    api: str,
    inp: ApiInput,
    executor,
    backends: Sequence[str] = ("cpu", "gpu"),
    tolerance: float = 0.01,
) -> Verdict:
    """Execute on every backend and compare. Status divergence (one backend
    accepts, another rejects) counts as Inconsistent."""
    if len(backends) < 2:
        raise BackendUnavailable("differential oracle needs at least two backends")
    results = [executor.run_input(inp, backend=b, want_outputs=True) for b in backends]
    first = results[0]
    for res, backend in zip(results[1:], backends[1:]):
        if first.ok != res.ok:
            return Verdict(
                False,
                FindingKind.INCONSISTENT,
                f"status mismatch: {backends[0]}={first.status.value} "
                f"{backend}={res.status.value} ({first.error_message or res.error_message})",
            )
        if first.ok and res.ok:
            v = compare_outputs(first.outputs or [], res.outputs or [], tolerance)
            if not v.agree:
                return v
    return Verdict(True)


# ---------------------------------------------------------------------------
# Fuzz loop


@dataclass
class FuzzSession:
    """Everything one fuzz run needs; replaying a finding reuses the exact
    concretization path."""

    layout: SymbolicLayout
    executor: object
    rechecks: tuple[LoweredRule, ...] = ()

    def concretize_one(self, model: dict[str, int], element_seed: int) -> ApiInput:
        return concretize(AbstractInput(model), self.layout, element_seed, self.rechecks)

    def execute(self, inp: ApiInput, backends: Sequence[str]):
        results = []
        for b in backends:
            res = self.executor.run_input(inp, backend=b, want_outputs=True)
            results.append((b, res))
            if res.status.value == "crash":
                break  # crash oracle precedence: no differential on this input
        return results

    def fuzz(self, corpus: Corpus, cfg: FuzzConfig) -> FuzzReport:
        if not corpus:
            raise EmptyCorpus(f"no abstract inputs for {self.layout.sig.api}")
        rng = random.Random(cfg.seed)
        report = FuzzReport(api=self.layout.sig.api, seed=cfg.seed)
        by_key: dict[tuple, Finding] = {}
        coverage: set[str] = set()
        started = time.perf_counter()
        deadline = started + cfg.budget_s
        while time.perf_counter() < deadline:
            if cfg.max_inputs is not None and report.generated >= cfg.max_inputs:
                break
            abs_input = corpus[rng.randrange(len(corpus))]
            element_seed = rng.getrandbits(32)
            t0 = time.perf_counter()
            try:
                inp = self.concretize_one(abs_input.model, element_seed)
            except ConcretizeFailure:
                report.concretize_failures += 1
                continue
            report.concretize_total_s += time.perf_counter() - t0
            report.generated += 1
            results = self.execute(inp, cfg.backends)
            for _, res in results:
                coverage.update(res.covered_branches)
            crash = next((r for _, r in results if r.status.value == "crash"), None)
            if crash is not None:
                report.crashed += 1
                finding = Finding(
                    kind=FindingKind.CRASH,
                    api=self.layout.sig.api,
                    input=inp,
                    backends=tuple(b for b, _ in results),
                    evidence=f"signal {crash.signal}: {crash.error_message}",
                    seed=element_seed,
                    model=dict(abs_input.model),
                )
                self._record(by_key, finding)
                continue
            primary = results[0][1]
            if primary.ok:
                report.valid += 1
            else:
                report.invalid += 1
            if len(results) >= 2:
                verdict = self._compare_results(results, cfg.tolerance)
                if verdict is not None:
                    finding = Finding(
                        kind=verdict.kind,
                        api=self.layout.sig.api,
                        input=inp,
                        backends=tuple(b for b, _ in results),
                        evidence=verdict.evidence,
                        seed=element_seed,
                        model=dict(abs_input.model),
                    )
                    self._record(by_key, finding)
        report.findings = list(by_key.values())
        report.coverage = sorted(coverage)
        report.elapsed_s = time.perf_counter() - started
        return report

    @staticmethod
    def _compare_results(results, tolerance: float) -> Optional[Verdict]:
        (b0, r0) = results[0]
        for b, r in results[1:]:
            if r0.ok != r.ok:
                return Verdict(
                    False,
                    FindingKind.INCONSISTENT,
                    f"status mismatch: {b0}={r0.status.value} {b}={r.status.value} "
                    f"({r0.error_message or r.error_message})",
                )
            if r0.ok and r.ok:
                v = compare_outputs(r0.outputs or [], r.outputs or [], tolerance)
                if not v.agree:
                    return v
        return None

    @staticmethod
    def _record(by_key: dict, finding: Finding) -> None:
        key = finding.dedup_key()
        if key in by_key:
            by_key[key].count += 1
        else:
            by_key[key] = finding

    def replay(self, finding: Finding, backends: Sequence[str] = ("cpu", "gpu"),
               tolerance: float = 0.01) -> tuple[ApiInput, Optional[FindingKind], str]:
        """Regenerate the finding's concrete input from its model and seed
        and re-run the oracles. Byte-identical to the original by
        construction."""
        inp = self.concretize_one(finding.model, finding.seed)
        results = self.execute(inp, backends)
        crash = next((r for _, r in results if r.status.value == "crash"), None)
        if crash is not None:
            return inp, FindingKind.CRASH, f"signal {crash.signal}: {crash.error_message}"
        verdict = self._compare_results(results, tolerance)
        if verdict is not None:
            return inp, verdict.kind, verdict.evidence
        return inp, None, ""


# ---------------------------------------------------------------------------
# Findings persistence: findings/<library>/<api>/<kind>-<hash>.json


def save_findings(findings: Sequence[Finding], root: Path | str, library: str) -> list[Path]:
    paths = []
    for f in findings:
        short = f.api.split(".", 1)[-1]
        directory = Path(root) / library / short
        directory.mkdir(parents=True, exist_ok=True)
        digest = f.dedup_key()[2][:12]
        path = directory / f"{f.kind.value}-{digest}.json"
        path.write_text(json.dumps(f.to_doc(), indent=2, sort_keys=True), encoding="utf-8")
        paths.append(path)
    return paths


def load_finding(path: Path | str) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
