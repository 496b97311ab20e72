"""Abstract input generation: build a corpus of solver models satisfying all
lowered invariants, diversified by value blocking and domain bucketing.

Each iteration samples a subset of layout variables; sampled variables get
one blocking disequality against their most recently recorded value plus a
range constraint from a sampled bucket. Solutions are concretized and
executed once, and only models the executor reports valid are recorded. The
corpus is a set: duplicate models are never recorded twice.
"""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .solver import (
    Atom,
    Formula,
    LinExpr,
    LoweredRule,
    SolveStatus,
    SymbolicLayout,
    VarSpec,
    disj,
    eval_formula,
    propagate_domains,
    solve,
)

INT31 = 2**31


@dataclass(frozen=True)
class BucketRange:
    lo: int
    hi: int


_INT_BUCKETS = (
    BucketRange(-INT31, -65),
    BucketRange(-64, -2),
    BucketRange(-1, -1),
    BucketRange(0, 0),
    BucketRange(1, 1),
    BucketRange(2, 8),
    BucketRange(9, 64),
    BucketRange(65, INT31 - 1),
)

_DIM_BUCKETS = (
    BucketRange(0, 0),
    BucketRange(1, 1),
    BucketRange(2, 4),
    BucketRange(5, 16),
    BucketRange(17, 64),
)


def _float_buckets(scale: int = 1024, max_exp: int = 6) -> tuple[BucketRange, ...]:
    """Sign times magnitude decades over the scaled-rational domain."""
    pos: list[BucketRange] = [BucketRange(1, scale)]
    for k in range(max_exp - 1):
        pos.append(BucketRange(scale * 10**k + 1, scale * 10 ** (k + 1)))
    pos.append(BucketRange(scale * 10 ** (max_exp - 1) + 1, scale * 10**max_exp))
    negs = [BucketRange(-b.hi, -b.lo) for b in reversed(pos)]
    return tuple(negs) + (BucketRange(0, 0),) + tuple(pos)


@dataclass(frozen=True)
class BucketTable:
    """Disjoint inclusive ranges covering each bounded variable domain."""

    ints: tuple[BucketRange, ...] = _INT_BUCKETS
    dims: tuple[BucketRange, ...] = _DIM_BUCKETS
    floats: tuple[BucketRange, ...] = _float_buckets()
    bools: tuple[BucketRange, ...] = (BucketRange(0, 0), BucketRange(1, 1))

    def for_var(self, spec: VarSpec) -> list[BucketRange]:
        """Buckets clipped to the variable's domain; enumerations bucket per
        value. Empty intersections are dropped."""
        if spec.vclass in ("dtype", "enum", "ndim", "len"):
            # tiny domains bucket per value: rank and length coverage must be
            # exact for leave-one-out refinement to see missing constraints
            return [BucketRange(c, c) for c in range(spec.lo, spec.hi + 1)]
        if spec.vclass == "dim":
            table = self.dims
        elif spec.vclass == "int":
            table = self.ints
        elif spec.vclass in ("float", "range"):
            table = self.floats
        else:
            table = self.bools
        out = []
        for b in table:
            lo, hi = max(b.lo, spec.lo), min(b.hi, spec.hi)
            if lo <= hi:
                out.append(BucketRange(lo, hi))
        return out

    def check_partition(self, table: tuple[BucketRange, ...], lo: int, hi: int) -> bool:
        """Ranges are disjoint, nonempty, and cover [lo, hi]."""
        cur = lo
        for b in sorted(table, key=lambda r: r.lo):
            if b.lo > b.hi or b.lo != cur:
                return False
            cur = b.hi + 1
        return cur == hi + 1

    def bucket_of(self, table_name: str, value: int) -> int:
        table = getattr(self, table_name)
        for i, b in enumerate(table):
            if b.lo <= value <= b.hi:
                return i
        return -1


@dataclass(frozen=True)
class AbstractInput:
    """A total assignment to the layout's symbolic variables, plus how the
    generation loop arrived at it."""

    model: dict[str, int]
    provenance: dict = field(default_factory=dict)

    def key(self) -> tuple:
        return tuple(sorted(self.model.items()))


Corpus = list[AbstractInput]


@dataclass
class GenConfig:
    sampling_ratio: float = 0.3
    target_count: int = 50
    timeout_s: float = 60.0  # desk-scale default; production runs configure more
    seed: int = 0
    solve_timeout_s: float = 5.0

    def __post_init__(self):
        if not 0 < self.sampling_ratio <= 1:
            raise ValueError("sampling ratio must be in (0, 1]")
        if self.target_count < 1:
            raise ValueError("target corpus size must be >= 1")


@dataclass
class GenStats:
    iterations: int = 0
    unsat: int = 0
    unknown: int = 0
    rejected: int = 0  # executor-reported invalid concretizations
    duplicates: int = 0
    bucket_retries: int = 0


class BaseUnsat(Exception):
    """The invariant set itself is unsatisfiable. Carries a deletion-based
    core of rule names when one exists."""

    def __init__(self, core: list[str]):
        self.core = core
        super().__init__(f"invariant set unsatisfiable; core: {core or 'base bounds'}")


class CorruptCorpus(Exception):
    def __init__(self, line: int, recovered: Corpus):
        self.line = line
        self.recovered = recovered
        super().__init__(f"corrupt corpus record at line {line}; {len(recovered)} recovered")


def _deletion_core(layout: SymbolicLayout, lowered: list[LoweredRule], timeout_s: float) -> list[str]:
    keep = list(lowered)
    i = 0
    while i < len(keep):
        trial = keep[:i] + keep[i + 1 :]
        res = solve(layout, [lw.formula for lw in trial], timeout_s=timeout_s)
        if res.status is SolveStatus.UNSAT:
            keep = trial
        else:
            i += 1
    return [lw.rule.name or ",".join(lw.params) for lw in keep]


def _blocking_atom(layout: SymbolicLayout, var: str, value: int) -> Formula:
    """Disequality against a previously assigned value. Shape-slot and
    sequence-element variables beyond the active length are pinned to a
    sentinel, so their blocking is conditional on being active; otherwise a
    stale pin value would forbid every low-rank model."""
    diseq = Atom("!=", LinExpr.of_var(var) - LinExpr.of_const(value))
    spec = layout.by_name[var]
    if spec.prop == "s":
        nd = LinExpr.of_var(f"{spec.param}.nd")
        inactive = Atom("<=", nd - LinExpr.of_const(spec.index))  # nd <= i
        return disj([inactive, diseq])
    if spec.prop == "e":
        ln = LinExpr.of_var(f"{spec.param}.len")
        inactive = Atom("<=", ln - LinExpr.of_const(spec.index))
        return disj([inactive, diseq])
    return diseq


def _bucket_atoms(var: str, b: BucketRange) -> list[Formula]:
    return [
        Atom("<=", LinExpr.of_const(b.lo) - LinExpr.of_var(var)),
        Atom("<=", LinExpr.of_var(var) - LinExpr.of_const(b.hi)),
    ]


def _iterate(
    layout: SymbolicLayout,
    formulas: list[Formula],
    buckets: BucketTable,
    store: dict[str, list[int]],
    cursors: dict[str, int],
    rng: random.Random,
    sampling_ratio: float,
    solve_timeout_s: float,
    stats: GenStats,
    domain_hint: Optional[dict[str, tuple[int, int]]] = None,
) -> tuple[Optional[dict[str, int]], list[str], dict[str, tuple[int, int]]]:
    """One diversified solve: sample variables, add blocking and bucket
    constraints, relaxing over-constrained iterations stepwise."""
    names = layout.var_names()
    k = max(1, math.ceil(sampling_ratio * len(names)))
    sampled = rng.sample(names, k)
    blocking_pairs: list[tuple[str, int]] = []
    blocking_extras: list[Formula] = []
    bucket_extras: list[Formula] = []
    bucket_choices: dict[str, tuple[int, int]] = {}
    for v in sampled:
        prior = store.get(v)
        if prior:
            # block the most recent recorded value so consecutive recorded
            # models always move every sampled variable
            blocking_extras.append(_blocking_atom(layout, v, prior[-1]))
            blocking_pairs.append((v, prior[-1]))
        choices = buckets.for_var(layout.by_name[v])
        if domain_hint is not None and v in domain_hint:
            # clip to the invariant-implied domain so a chosen bucket never
            # contradicts the formula set on its own
            dlo, dhi = domain_hint[v]
            choices = [
                BucketRange(max(b.lo, dlo), min(b.hi, dhi))
                for b in choices
                if max(b.lo, dlo) <= min(b.hi, dhi)
            ]
        if choices:
            # round-robin through a variable's buckets: every bucket is
            # exercised within a bounded number of samples, which uniform
            # draws cannot promise at desk-scale trial counts
            cursor = cursors.get(v, 0)
            b = choices[cursor % len(choices)]
            cursors[v] = cursor + 1
            bucket_choices[v] = (b.lo, b.hi)
            bucket_extras.extend(_bucket_atoms(v, b))
    # Bucket and blocking atoms are soft: a variable pinned by the invariant
    # set makes its blocking disequality permanently unsatisfiable, and
    # bucket choices can conflict jointly. Try everything first; on conflict
    # drop blocking if it alone conflicts, then re-admit buckets greedily one
    # variable at a time so an unrelated conflict never voids the rest.
    def moved(model: dict[str, int]) -> list[str]:
        return [v for v, prior in blocking_pairs if model[v] != prior]

    res = solve(layout, formulas + blocking_extras + bucket_extras, timeout_s=solve_timeout_s)
    if res.status is SolveStatus.SAT:
        return res.model, moved(res.model), bucket_choices
    if res.status is SolveStatus.UNKNOWN:
        stats.unknown += 1
        return None, [], bucket_choices
    stats.bucket_retries += 1
    base_extras = blocking_extras
    best = solve(layout, formulas + base_extras, timeout_s=solve_timeout_s)
    if not best.is_sat:
        base_extras = []
        blocking_pairs = []
        best = solve(layout, formulas, timeout_s=solve_timeout_s)
        if not best.is_sat:
            stats.unsat += 1
            return None, [], {}
    accepted: list[Formula] = []
    accepted_choices: dict[str, tuple[int, int]] = {}
    for v, (lo, hi) in bucket_choices.items():
        trial = accepted + _bucket_atoms(v, BucketRange(lo, hi))
        res = solve(layout, formulas + base_extras + trial, timeout_s=solve_timeout_s)
        if res.is_sat:
            accepted = trial
            accepted_choices[v] = (lo, hi)
            best = res
    return best.model, moved(best.model), accepted_choices


def _record_store(store: dict[str, list[int]], model: dict[str, int]) -> None:
    for v, value in model.items():
        values = store.setdefault(v, [])
        if value in values:
            values.remove(value)
        values.append(value)


def generate_abstract_inputs(
    lowered: list[LoweredRule],
    layout: SymbolicLayout,
    buckets: BucketTable,
    executor,
    cfg: GenConfig,
) -> tuple[Corpus, GenStats]:
    """Loop until the timeout or the target corpus size: diversified solve,
    concretize once, execute, and record the model only when the executor
    reports the input valid. Pass executor=None to skip the validity gate
    (every satisfying model is recorded). Raises BaseUnsat when the
    invariants are contradictory."""
    formulas = [lw.formula for lw in lowered]
    first = solve(layout, formulas, timeout_s=cfg.solve_timeout_s)
    if first.status is SolveStatus.UNSAT:
        raise BaseUnsat(_deletion_core(layout, lowered, cfg.solve_timeout_s))

    store: dict[str, list[int]] = {}
    cursors: dict[str, int] = {}
    corpus: Corpus = []
    seen: set[tuple] = set()
    stats = GenStats()
    rng = random.Random(cfg.seed)
    deadline = time.monotonic() + cfg.timeout_s
    rechecks = [lw for lw in lowered if lw.needs_recheck]
    domain_hint = propagate_domains(layout, formulas, cfg.solve_timeout_s)

    if executor is not None:
        from .fuzzer import ConcretizeFailure, concretize  # local import: fuzzer imports this module

    while len(corpus) < cfg.target_count and time.monotonic() < deadline:
        stats.iterations += 1
        model, blocked, bucket_choices = _iterate(
            layout, formulas, buckets, store, cursors, rng, cfg.sampling_ratio,
            cfg.solve_timeout_s, stats, domain_hint,
        )
        if model is None:
            continue
        for lw in lowered:
            if not eval_formula(lw.formula, model):
                raise AssertionError(
                    f"solver model violates lowered rule {lw.rule.name!r}"
                )
        if executor is not None:
            element_seed = rng.getrandbits(32)
            try:
                inp = concretize(
                    AbstractInput(model), layout, element_seed, rechecks=rechecks
                )
            except ConcretizeFailure:
                stats.rejected += 1
                continue
            result = executor.run_input(inp, backend="cpu")
            if not result.ok:
                stats.rejected += 1
                continue
        abs_input = AbstractInput(
            model,
            provenance={
                "iteration": stats.iterations,
                "bucket_choices": {k: list(v) for k, v in bucket_choices.items()},
                "blocked_vars": blocked,
            },
        )
        key = abs_input.key()
        if key in seen:
            # set semantics: the values are already in the store, and
            # reordering them would break most-recent blocking against the
            # last *recorded* model
            stats.duplicates += 1
            continue
        seen.add(key)
        corpus.append(abs_input)
        _record_store(store, model)
    return corpus, stats


def sample_models(
    lowered: list[LoweredRule],
    layout: SymbolicLayout,
    buckets: BucketTable,
    count: int,
    seed: int,
    sampling_ratio: float = 0.3,
    solve_timeout_s: float = 5.0,
    max_attempts: Optional[int] = None,
) -> list[dict[str, int]]:
    """Fixed-count diversified sampling without the validity gate or corpus
    dedup; the refinement loop uses this to estimate validity ratios."""
    formulas = [lw.formula for lw in lowered]
    store: dict[str, list[int]] = {}
    cursors: dict[str, int] = {}
    stats = GenStats()
    rng = random.Random(seed)
    out: list[dict[str, int]] = []
    attempts = 0
    cap = max_attempts if max_attempts is not None else 4 * count
    domain_hint = propagate_domains(layout, formulas, solve_timeout_s)
    while len(out) < count and attempts < cap:
        attempts += 1
        model, _, _ = _iterate(
            layout, formulas, buckets, store, cursors, rng, sampling_ratio,
            solve_timeout_s, stats, domain_hint,
        )
        if model is None:
            continue
        out.append(model)
        _record_store(store, model)
    return out


# ---------------------------------------------------------------------------
# Corpus persistence: one model per line, append-safe


def corpus_save(corpus: Corpus, path: Path | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for abs_input in corpus:
            fh.write(
                json.dumps({"model": abs_input.model, "provenance": abs_input.provenance})
                + "\n"
            )


def corpus_load(path: Path | str) -> Corpus:
    """Load a line-delimited corpus. A damaged record raises CorruptCorpus
    carrying its line number and every model recovered before it."""
    out: Corpus = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                model = {str(k): int(v) for k, v in doc["model"].items()}
                out.append(AbstractInput(model, doc.get("provenance", {})))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError):
                raise CorruptCorpus(lineno, out)
    return out
