"""Invariant mining and validity-ratio refinement.

Mining keeps exactly the (rule, parameter-tuple) candidates that hold on
every valid seed input; a candidate that fails or errors on any seed is
recorded with its counterexample. Refinement then measures the validity
ratio of solver-generated inputs under the full invariant set and removes,
one at a time, every invariant whose removal does not lower that ratio.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .absgen import BucketTable, sample_models
from .dsl import PrimType, SeqType, TensorType, TypedRule, TypeExpr, UnionType
from .evaluator import CheckStatus, check_rule
from .fuzzer import AbstractInput, ConcretizeFailure, concretize
from .solver import (
    LoweredRule,
    LoweringUnsupported,
    SolveStatus,
    SymbolicLayout,
    lower_rule,
    solve,
)
from .values import ApiInput, ApiSignature

CANDIDATE_CAP = 512


@dataclass(frozen=True)
class Invariant:
    """A rule bound to an ordered tuple of distinct API parameters that held
    on every seed."""

    rule: TypedRule
    params: tuple[str, ...]

    def label(self) -> str:
        return f"{self.rule.name or '<anon>'}({', '.join(self.params)})"


@dataclass
class LearnConfig:
    trials: int = 30  # T: concretized inputs per validity-ratio estimate
    seed: int = 0
    min_seed_inputs: int = 20
    sampling_ratio: float = 0.3
    solve_timeout_s: float = 5.0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")


class EmptySeedSet(Exception):
    pass


class SolverUnsat(Exception):
    def __init__(self, core: list[str]):
        self.core = core
        super().__init__(f"invariant set unsatisfiable; core: {core}")


@dataclass
class LearnReport:
    """Partition of every type-matched candidate, plus ratio bookkeeping."""

    api: str
    kept: list[Invariant] = field(default_factory=list)
    dropped_redundant: list[Invariant] = field(default_factory=list)
    dropped_not_invariant: list[tuple[Invariant, ApiInput]] = field(default_factory=list)
    dropped_eval_error: list[tuple[Invariant, str]] = field(default_factory=list)
    v_orig: float = 0.0
    v_final: float = 0.0
    lowering_excluded: list[tuple[Invariant, str]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    candidates_total: int = 0

    def to_doc(self) -> dict:
        from .dsl import render_rule

        def inv_doc(inv: Invariant) -> dict:
            return {
                "name": inv.rule.name,
                "rule": render_rule(inv.rule.rule),
                "description": inv.rule.rule.description,
                "params": list(inv.params),
            }

        return {
            "api": self.api,
            "kept": [inv_doc(i) for i in self.kept],
            "dropped_redundant": [inv_doc(i) for i in self.dropped_redundant],
            "dropped_not_invariant": [
                {"invariant": inv_doc(i), "counterexample": _input_doc(x)}
                for i, x in self.dropped_not_invariant
            ],
            "dropped_eval_error": [
                {"invariant": inv_doc(i), "error": e} for i, e in self.dropped_eval_error
            ],
            "lowering_excluded": [
                {"invariant": inv_doc(i), "reason": r} for i, r in self.lowering_excluded
            ],
            "v_orig": self.v_orig,
            "v_final": self.v_final,
            "flags": self.flags,
            "candidates_total": self.candidates_total,
        }


def _input_doc(inp: ApiInput) -> dict:
    from .values import encode_input

    return encode_input(inp)


# ---------------------------------------------------------------------------
# Candidate enumeration


def _kinds(ty: TypeExpr) -> frozenset[str]:
    if isinstance(ty, PrimType):
        return frozenset({ty.kind})
    if isinstance(ty, UnionType):
        return frozenset(a.kind for a in ty.arms())
    return frozenset({"?"})


def type_compatible(binding: TypeExpr, param: TypeExpr) -> bool:
    """Every value the parameter can carry must conform to the binding, so
    a candidate never errors on kind grounds alone."""
    if binding == param:
        return True
    if isinstance(binding, TensorType) or isinstance(param, TensorType):
        return isinstance(binding, TensorType) and isinstance(param, TensorType)
    if isinstance(binding, SeqType) or isinstance(param, SeqType):
        return (
            isinstance(binding, SeqType)
            and isinstance(param, SeqType)
            and binding.ctor == param.ctor
            and type_compatible(binding.elem, param.elem)
        )
    return _kinds(param) <= _kinds(binding)


def enumerate_candidates(
    rule: TypedRule, sig: ApiSignature
) -> tuple[list[tuple[str, ...]], bool]:
    """All ordered tuples of distinct, type-compatible parameters in
    signature order. Returns (tuples, capped). Rules with 4+ variables over
    wide signatures are capped at a deterministic prefix."""
    per_binding: list[list[str]] = []
    param_types = {p.name: p.type_text for p in sig.params}
    from .dsl import parse_type_text

    parsed = {name: parse_type_text(t) for name, t in param_types.items()}
    for _, b_ty in rule.bindings:
        compatible = [p.name for p in sig.params if type_compatible(b_ty, parsed[p.name])]
        per_binding.append(compatible)
    k = len(rule.bindings)
    max_compat = max((len(c) for c in per_binding), default=0)
    cap = CANDIDATE_CAP if (k >= 4 and max_compat > 8) else None
    out: list[tuple[str, ...]] = []
    for combo in itertools.product(*per_binding):
        if len(set(combo)) != len(combo):
            continue
        out.append(combo)
        if cap is not None and len(out) >= cap:
            return out, True
    return out, False


# ---------------------------------------------------------------------------
# Mining (holds-on-all-seeds)


def learn_invariants(
    rules: Sequence[TypedRule],
    seeds: Sequence[ApiInput],
    sig: ApiSignature,
    report: Optional[LearnReport] = None,
) -> list[Invariant]:
    """Candidates that hold on every seed. Fails and evaluation errors both
    disqualify (an erroring rule cannot be relied on for generation); the
    partition lands in the report when one is supplied."""
    if not seeds:
        raise EmptySeedSet(f"no seed inputs for {sig.api}")
    if report is None:
        report = LearnReport(api=sig.api)
    invariants: list[Invariant] = []
    for rule in rules:
        tuples, capped = enumerate_candidates(rule, sig)
        if capped:
            report.flags.append(f"candidates for {rule.name!r} capped at {CANDIDATE_CAP}")
        for params in tuples:
            report.candidates_total += 1
            inv = Invariant(rule, params)
            verdict = None
            for seed_input in seeds:
                lookup = seed_input.as_dict()
                binding = {
                    var: lookup.get(param) for (var, _), param in zip(rule.bindings, params)
                }
                result = check_rule(rule, binding)
                if result.status is CheckStatus.FAILS:
                    verdict = ("fails", seed_input)
                    break
                if result.status is CheckStatus.ERRORS:
                    verdict = ("errors", str(result.error))
                    break
            if verdict is None:
                invariants.append(inv)
            elif verdict[0] == "fails":
                report.dropped_not_invariant.append((inv, verdict[1]))
            else:
                report.dropped_eval_error.append((inv, verdict[1]))
    return invariants


# ---------------------------------------------------------------------------
# Refinement (leave-one-out validity ratio)


def _derived_seed(base: int, index: int) -> int:
    return (base * 1_000_003 + index * 7919 + 17) % (2**31)


def measure_validity(
    lowered: Sequence[LoweredRule],
    layout: SymbolicLayout,
    buckets: BucketTable,
    executor,
    trials: int,
    seed: int,
    sampling_ratio: float,
    solve_timeout_s: float,
) -> float:
    """Fraction of `trials` concretized solver inputs the executor accepts.
    Iterations that fail to produce a model count as invalid."""
    models = sample_models(
        list(lowered), layout, buckets, trials, seed,
        sampling_ratio=sampling_ratio, solve_timeout_s=solve_timeout_s,
    )
    rechecks = [lw for lw in lowered if lw.needs_recheck]
    valid = 0
    for index, model in enumerate(models):
        try:
            inp = concretize(
                AbstractInput(model), layout, _derived_seed(seed, index), rechecks
            )
        except ConcretizeFailure:
            continue
        if executor.run_input(inp, backend="cpu").ok:
            valid += 1
    return valid / trials


def refine(
    invariants: Sequence[Invariant],
    layout: SymbolicLayout,
    buckets: BucketTable,
    executor,
    cfg: LearnConfig,
    report: Optional[LearnReport] = None,
) -> LearnReport:
    """Leave-one-out refinement: an invariant is kept exactly when removing
    it (together with the accumulated redundant set) raises no validity, in
    deterministic input order. A zero baseline ratio keeps the full set
    unchanged and flags the API rather than discarding everything."""
    if report is None:
        report = LearnReport(api=layout.sig.api)
    lowered_pairs: list[tuple[Invariant, LoweredRule]] = []
    for inv in invariants:
        try:
            lowered_pairs.append((inv, lower_rule(inv.rule, inv.params, layout)))
        except LoweringUnsupported as exc:
            report.lowering_excluded.append((inv, str(exc)))
            report.kept.append(inv)  # still an invariant; just not solvable

    all_lowered = [lw for _, lw in lowered_pairs]
    sat = solve(layout, [lw.formula for lw in all_lowered], timeout_s=cfg.solve_timeout_s)
    if sat.status is SolveStatus.UNSAT:
        from .absgen import _deletion_core

        raise SolverUnsat(_deletion_core(layout, all_lowered, cfg.solve_timeout_s))

    # Ratio estimates are memoized by the deduplicated converted-formula set:
    # removing one copy of a duplicated encoding leaves the effective formula
    # set unchanged, so its estimate is the baseline itself (an exact tie).
    from .solver import _convert

    memo: dict[frozenset[int], float] = {}

    def ratio(subset: Sequence[LoweredRule], seed: int) -> float:
        key = frozenset(id(_convert(lw.formula)) for lw in subset)
        if key in memo:
            return memo[key]
        value = measure_validity(
            subset, layout, buckets, executor, cfg.trials, seed,
            cfg.sampling_ratio, cfg.solve_timeout_s,
        )
        memo[key] = value
        return value

    report.v_orig = ratio(all_lowered, cfg.seed)
    if report.v_orig == 0.0:
        report.flags.append(
            "baseline validity is zero; refinement skipped and the full set kept"
        )
        report.kept.extend(inv for inv, _ in lowered_pairs)
        report.v_final = report.v_orig
        return report

    # One shared seed for the baseline and every leave-one-out estimate:
    # sampling decisions draw from the same stream regardless of the formula
    # set, so removing a genuinely redundant invariant reproduces the same
    # models and ties exactly instead of fluctuating around v_orig.
    redundant: list[Invariant] = []
    final_pairs: list[tuple[Invariant, LoweredRule]] = []
    removed_lowered: set[int] = set()
    for index, (inv, lw) in enumerate(lowered_pairs):
        test_set = [
            low
            for j, (_, low) in enumerate(lowered_pairs)
            if j != index and j not in removed_lowered
        ]
        v_test = ratio(test_set, cfg.seed)
        if v_test < report.v_orig:
            final_pairs.append((inv, lw))
        else:
            redundant.append(inv)
            removed_lowered.add(index)
    report.kept.extend(inv for inv, _ in final_pairs)
    report.dropped_redundant.extend(redundant)
    report.v_final = ratio([lw for _, lw in final_pairs], cfg.seed)
    return report


def learn_and_refine(
    rules: Sequence[TypedRule],
    seeds: Sequence[ApiInput],
    layout: SymbolicLayout,
    buckets: BucketTable,
    executor,
    cfg: LearnConfig,
) -> LearnReport:
    """The full offline pipeline stage: mine invariants from seeds, then
    prune by leave-one-out validity ratio."""
    report = LearnReport(api=layout.sig.api)
    if len(seeds) < cfg.min_seed_inputs:
        report.flags.append(
            f"only {len(seeds)} seeds (< {cfg.min_seed_inputs}); learning anyway"
        )
    invariants = learn_invariants(rules, seeds, layout.sig, report)
    return refine(invariants, layout, buckets, executor, cfg, report)
