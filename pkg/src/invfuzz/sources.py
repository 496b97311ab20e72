"""Candidate rule sources: ruleset files, a deterministic grammar-driven
enumerator, and an LLM chat client with the five-kind feedback loop, plus
the seed-mutation pipeline that builds the per-API error-message database.

Every rule leaving this module parses, type-checks, and binds every
declared variable.
"""

from __future__ import annotations

import json
import os
import random
import re
import time
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .dsl import (
    And,
    Arith,
    BindingError,
    Cmp,
    Exists,
    Expr,
    ForAll,
    IfThen,
    Literal,
    Or,
    ParseError,
    Rule,
    TensorFn,
    TypedRule,
    TypeErrorReport,
    VarRef,
    parse_rule,
    parse_ruleset,
    parse_type_text,
    render_rule,
    type_check,
    unused_bindings,
)
from .values import (
    ApiInput,
    ApiSignature,
    BoolV,
    ConcreteValue,
    DEFAULT_DTYPES,
    DtypeV,
    FloatV,
    IntV,
    TensorV,
)

INT_EXTREME = 2**31 - 1


# ---------------------------------------------------------------------------
# Ruleset files


@dataclass
class RulesetLoad:
    rules: list[TypedRule]
    errors: list[str]


def load_ruleset(path: Path | str) -> RulesetLoad:
    """Parse and type-check a ruleset file. Bad records are reported with
    file:line locations; good records still load."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return load_ruleset_text(text, str(path))


def load_ruleset_text(text: str, source_name: str = "<ruleset>") -> RulesetLoad:
    rules, errors = parse_ruleset(text, source_name)
    typed: list[TypedRule] = []
    for rule in rules:
        unused = unused_bindings(rule)
        if unused:
            errors.append(
                f"{source_name}: rule {rule.name or render_rule(rule)!r} has unused "
                f"binding(s) {', '.join(unused)}"
            )
            continue
        try:
            typed.append(type_check(rule))
        except TypeErrorReport as report:
            errors.append(f"{source_name}: rule {rule.name!r}: {report}")
    return RulesetLoad(typed, errors)


# ---------------------------------------------------------------------------
# Grammar-driven enumerator


_CMP_FOR_INT = ("=", "!=", "<", "<=", ">", ">=")
_SMALL_CONSTS = (-2, -1, 0, 1, 2, 3, 4, 8, 64)


class _RuleGen:
    """Samples well-typed, solver-lowerable rules over the signature's
    parameter types. min/max atoms only use directions the lowering handles
    exactly, so generated rules never need concretize-time rechecks."""

    def __init__(self, sig: ApiSignature, rng: random.Random, max_depth: int):
        self.rng = rng
        self.max_depth = max_depth
        kinds: list[str] = []
        for p in sig.params:
            ty = parse_type_text(p.type_text)
            text = str(ty)
            if text not in kinds and text in ("tensor", "int", "float", "bool"):
                kinds.append(text)
        self.kinds = kinds or ["tensor"]

    def bindings(self) -> list[tuple[str, str]]:
        n_vars = self.rng.choice((1, 1, 2, 2, 2))
        chosen = [self.rng.choice(self.kinds) for _ in range(n_vars)]
        return [(f"v_{i + 1}", k) for i, k in enumerate(chosen)]

    def generate(self) -> Optional[Rule]:
        binds = self.bindings()
        body = self.boolexpr(binds, self.max_depth)
        if body is None:
            return None
        type_texts = tuple((n, parse_type_text(k)) for n, k in binds)
        rule = Rule(name="", description="", bindings=type_texts, body=body)
        from .dsl import free_var_names

        if free_var_names(body) != {n for n, _ in binds}:
            return None  # every binding must be used
        return rule

    # expression builders ----------------------------------------------------

    def boolexpr(self, binds, depth: int) -> Optional[Expr]:
        choices = ["atom"]
        if depth > 1:
            choices += ["and", "or", "quant", "ifthen"]
        kind = self.rng.choice(choices)
        if kind == "atom":
            return self.atom(binds)
        if kind in ("and", "or"):
            lhs = self.boolexpr(binds, depth - 1)
            rhs = self.boolexpr(binds, depth - 1)
            if lhs is None or rhs is None:
                return None
            return And(lhs, rhs) if kind == "and" else Or(lhs, rhs)
        tensors = [n for n, k in binds if k == "tensor"]
        if not tensors:
            return self.atom(binds)
        if kind == "quant":
            return self.quantifier(binds, tensors)
        cond_t = self.rng.choice(tensors)
        cond = Cmp(
            self.rng.choice(("=", ">=", "<=")),
            TensorFn("ndim", VarRef(cond_t)),
            Literal(self.rng.randint(0, 4)),
        )
        then = self.atom(binds)
        if then is None:
            return None
        if self.rng.random() < 0.5:
            orelse = self.atom(binds)
            return IfThen(cond, then, orelse)
        return IfThen(cond, then)

    def quantifier(self, binds, tensors) -> Optional[Expr]:
        t = self.rng.choice(tensors)
        bound = "i"
        hi = Arith("-", TensorFn("ndim", VarRef(t)), Literal(1))
        body: Expr
        other_tensors = [n for n in tensors if n != t]
        if other_tensors and self.rng.random() < 0.5:
            o = self.rng.choice(other_tensors)
            body = Or(
                Cmp("=", TensorFn("shape", VarRef(t), VarRef(bound)),
                    TensorFn("shape", VarRef(o), VarRef(bound))),
                Cmp("=", TensorFn("shape", VarRef(t), VarRef(bound)), Literal(1)),
            )
            # guard against rank mismatch errors on the other tensor
            guard = Cmp("=", TensorFn("ndim", VarRef(t)), TensorFn("ndim", VarRef(o)))
            ctor = ForAll if self.rng.random() < 0.7 else Exists
            return IfThen(guard, ctor(bound, Literal(0), hi, body))
        body = Cmp(
            self.rng.choice((">=", "<=", "=")),
            TensorFn("shape", VarRef(t), VarRef(bound)),
            Literal(self.rng.choice((0, 1, 2, 4))),
        )
        ctor = ForAll if self.rng.random() < 0.7 else Exists
        return ctor(bound, Literal(0), hi, body)

    def atom(self, binds) -> Optional[Expr]:
        name, kind = self.rng.choice(binds)
        if kind == "tensor":
            return self.tensor_atom(name, binds)
        if kind == "bool":
            other = VarRef(name)
            return other if self.rng.random() < 0.5 else Cmp("=", other, Literal(True))
        const = Literal(self.rng.choice(_SMALL_CONSTS))
        ref: Expr = VarRef(name)
        if self.rng.random() < 0.3:
            ref = Arith(self.rng.choice(("+", "-")), ref, Literal(self.rng.randint(1, 4)))
        return Cmp(self.rng.choice(_CMP_FOR_INT), ref, const)

    def tensor_atom(self, name: str, binds) -> Optional[Expr]:
        rng = self.rng
        v = VarRef(name)
        roll = rng.random()
        others = [n for n, k in binds if k == "tensor" and n != name]
        if roll < 0.25:
            return Cmp(rng.choice(_CMP_FOR_INT), TensorFn("ndim", v),
                       Literal(rng.randint(0, 5)))
        if roll < 0.45:
            idx = rng.choice((0, 1, -1))
            guarded = Cmp(rng.choice((">=", "<=", "=")),
                          TensorFn("shape", v, Literal(idx)),
                          Literal(rng.choice((0, 1, 2, 4, 8))))
            # shape(v, i) errors on low-rank tensors; guard by rank
            need = abs(idx) if idx < 0 else idx + 1
            return IfThen(Cmp(">=", TensorFn("ndim", v), Literal(need)), guarded)
        if roll < 0.6:
            return Cmp(rng.choice(("=", "!=", "<=")), TensorFn("dtype_", v),
                       Literal(rng.randint(0, 5)))
        if roll < 0.75 and others:
            o = rng.choice(others)
            prop = rng.choice(("ndim", "dtype_"))
            return Cmp(rng.choice(("=", "<=")), TensorFn(prop, v), TensorFn(prop, VarRef(o)))
        # range atoms in exact-lowering directions only
        c = Literal(rng.choice((-8, -1, 0, 1, 8)))
        if rng.random() < 0.5:
            return Cmp(rng.choice((">=", ">")), TensorFn("min", v), c)
        return Cmp(rng.choice(("<=", "<")), TensorFn("max", v), c)


def enumerate_rules(
    sig: ApiSignature, max_depth: int = 3, count: int = 50, seed: int = 0
) -> list[TypedRule]:
    """Deterministic sampler over the rule grammar: well-typed by
    construction, deduplicated by canonical rendering."""
    rng = random.Random(seed)
    gen = _RuleGen(sig, rng, max_depth)
    out: list[TypedRule] = []
    seen: set[str] = set()
    attempts = 0
    while len(out) < count and attempts < count * 60:
        attempts += 1
        rule = gen.generate()
        if rule is None:
            continue
        text = render_rule(rule)
        if text in seen:
            continue
        named = Rule(
            name=f"enum_{len(out):04d}",
            description="enumerated candidate",
            bindings=rule.bindings,
            body=rule.body,
        )
        try:
            typed = type_check(named)
        except TypeErrorReport:
            continue
        seen.add(text)
        out.append(typed)
    return out


# ---------------------------------------------------------------------------
# Mutators


Mutator = Callable[[ApiInput], ApiInput]


def _map_args(inp: ApiInput, fn: Callable[[str, ConcreteValue], ConcreteValue]) -> ApiInput:
    return ApiInput(inp.api, tuple((k, fn(k, v)) for k, v in inp.args))


def _resize_tensor(t: TensorV, shape: tuple[int, ...]) -> TensorV:
    numel = int(np.prod(shape)) if shape else 1
    elements = None
    if t.elements is not None:
        elements = np.resize(t.elements, numel) if numel else np.empty(0)
    return TensorV(shape, t.dtype, t.lo, t.hi, elements)


def make_mutators(sig: ApiSignature) -> list[tuple[str, Mutator]]:
    """The nine seed mutators, each a pure ApiInput -> ApiInput function.
    Outputs stay document-well-formed even when semantically invalid."""

    optional = {p.name for p in sig.params if not p.required}

    def drop_optional(inp: ApiInput) -> ApiInput:
        return ApiInput(inp.api, tuple((k, v) for k, v in inp.args if k not in optional))

    def empty_tensor(inp: ApiInput) -> ApiInput:
        def fn(_k, v):
            if isinstance(v, TensorV):
                shape = (0,) + v.shape[1:] if v.shape else (0,)
                return _resize_tensor(v, shape)
            return v

        return _map_args(inp, fn)

    def zero_elements(inp: ApiInput) -> ApiInput:
        def fn(_k, v):
            if isinstance(v, TensorV) and v.elements is not None:
                return TensorV(
                    v.shape, v.dtype, min(v.lo, 0.0), max(v.hi, 0.0),
                    np.zeros_like(v.elements),
                )
            return v

        return _map_args(inp, fn)

    def int_negate(inp: ApiInput) -> ApiInput:
        return _map_args(inp, lambda _k, v: IntV(-v.value) if isinstance(v, IntV) else v)

    def int_extreme(inp: ApiInput) -> ApiInput:
        return _map_args(inp, lambda _k, v: IntV(INT_EXTREME) if isinstance(v, IntV) else v)

    def dtype_swap(inp: ApiInput) -> ApiInput:
        n = len(DEFAULT_DTYPES)

        def fn(_k, v):
            if isinstance(v, TensorV):
                return TensorV(v.shape, (v.dtype + 1) % n, v.lo, v.hi, v.elements)
            if isinstance(v, DtypeV):
                return DtypeV((v.code + 1) % n)
            return v

        return _map_args(inp, fn)

    def rank_plus(inp: ApiInput) -> ApiInput:
        def fn(_k, v):
            if isinstance(v, TensorV):
                return _resize_tensor(v, (2,) + v.shape)
            return v

        return _map_args(inp, fn)

    def rank_minus(inp: ApiInput) -> ApiInput:
        def fn(_k, v):
            if isinstance(v, TensorV) and v.ndim >= 1:
                return _resize_tensor(v, v.shape[1:])
            return v

        return _map_args(inp, fn)

    def kind_confusion(inp: ApiInput) -> ApiInput:
        def fn(_k, v):
            if isinstance(v, TensorV):
                return IntV(0)
            if isinstance(v, (IntV, FloatV)):
                return TensorV((1,), 0, 0.0, 0.0, np.zeros(1))
            return v

        return _map_args(inp, fn)

    return [
        ("drop-optional-param", drop_optional),
        ("tensor-empty", empty_tensor),
        ("elements-zero", zero_elements),
        ("int-negate", int_negate),
        ("int-extreme", int_extreme),
        ("dtype-swap", dtype_swap),
        ("rank-plus", rank_plus),
        ("rank-minus", rank_minus),
        ("kind-confusion", kind_confusion),
    ]


# ---------------------------------------------------------------------------
# Error database


def normalize_error(message: str) -> str:
    text = re.sub(r"\d+", "N", message)
    return re.sub(r"\s+", " ", text).strip().lower()


@dataclass
class ErrorDb:
    """api -> error messages, deduplicated after whitespace/number
    normalization (first-seen original text is kept)."""

    entries: dict[str, dict[str, str]] = field(default_factory=dict)

    def add(self, api: str, message: str) -> bool:
        bucket = self.entries.setdefault(api, {})
        key = normalize_error(message)
        if key in bucket:
            return False
        bucket[key] = message
        return True

    def messages(self, api: str) -> list[str]:
        return list(self.entries.get(api, {}).values())

    def to_doc(self) -> dict:
        return {api: sorted(bucket.values()) for api, bucket in sorted(self.entries.items())}

    @staticmethod
    def from_doc(doc: dict) -> "ErrorDb":
        db = ErrorDb()
        for api, messages in doc.items():
            for m in messages:
                db.add(api, m)
        return db

    def save(self, path: Path | str) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_doc(), indent=2, sort_keys=True), encoding="utf-8")

    @staticmethod
    def load(path: Path | str) -> "ErrorDb":
        return ErrorDb.from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


def random_invalid_input(sig: ApiSignature, rng: np.random.Generator) -> ApiInput:
    """Wild, loosely-typed input used to shake more error messages out of a
    target within the time budget."""
    args: list[tuple[str, ConcreteValue]] = []
    for p in sig.params:
        roll = rng.random()
        if roll < 0.55:
            nd = int(rng.integers(0, 6))
            shape = tuple(int(rng.integers(0, 7)) for _ in range(nd))
            numel = int(np.prod(shape)) if shape else 1
            lo, hi = sorted(float(x) for x in rng.uniform(-100, 100, 2))
            elements = rng.uniform(lo, hi, numel) if numel < 4096 else None
            args.append((p.name, TensorV(shape, int(rng.integers(0, 6)), lo, hi, elements)))
        elif roll < 0.8:
            args.append((p.name, IntV(int(rng.integers(-100, 100)))))
        elif roll < 0.9:
            args.append((p.name, FloatV(float(rng.uniform(-100, 100)))))
        else:
            args.append((p.name, BoolV(bool(rng.integers(0, 2)))))
    return ApiInput(sig.api, tuple(args))


def collect_errors(
    api: str,
    seeds: Sequence[ApiInput],
    mutators: Sequence[tuple[str, Mutator]],
    executor,
    sig: ApiSignature,
    random_budget_s: float = 30.0,
    rng: Optional[np.random.Generator] = None,
    db: Optional[ErrorDb] = None,
) -> tuple[ErrorDb, list[ApiInput]]:
    """Run every mutated seed plus random invalid inputs for the budget,
    collecting distinct error messages. Crashing inputs are returned
    separately: they are findings, not messages."""
    db = db if db is not None else ErrorDb()
    rng = rng if rng is not None else np.random.default_rng(0)
    crashes: list[ApiInput] = []

    def observe(inp: ApiInput) -> None:
        result = executor.run_input(inp, backend="cpu")
        if result.status.value == "error" and result.error_message:
            db.add(api, result.error_message)
        elif result.status.value == "crash":
            crashes.append(inp)

    for seed_input in seeds:
        for _name, mutate in mutators:
            observe(mutate(seed_input))
    deadline = time.monotonic() + random_budget_s
    while time.monotonic() < deadline:
        observe(random_invalid_input(sig, rng))
    return db, crashes


# ---------------------------------------------------------------------------
# LLM rule generation with the five-kind feedback loop


class FeedbackKind(Enum):
    FORMAT_ERROR = "format_error"
    REDUNDANT_BINDINGS = "redundant_bindings"
    DUPLICATE_RULE = "duplicate_rule"
    PARSING_ERROR = "parsing_error"
    SUCCESS = "success"


@dataclass(frozen=True)
class Feedback:
    kind: FeedbackKind
    detail: str


@dataclass
class LlmLimits:
    failures: int = 100
    timeout_s: float = 60.0


@dataclass
class LlmClientConfig:
    """Generic chat-completion transport settings, normally from the
    environment: endpoint URL, model name, and the name of the env var
    holding the API key."""

    endpoint: str = ""
    model: str = ""
    api_key_env: str = "INVFUZZ_LLM_API_KEY"

    @staticmethod
    def from_env() -> "LlmClientConfig":
        return LlmClientConfig(
            endpoint=os.environ.get("INVFUZZ_LLM_ENDPOINT", ""),
            model=os.environ.get("INVFUZZ_LLM_MODEL", ""),
            api_key_env=os.environ.get("INVFUZZ_LLM_API_KEY_ENV", "INVFUZZ_LLM_API_KEY"),
        )


class EndpointError(Exception):
    pass


class HttpChatTransport:
    """Single-turn chat completion over a generic OpenAI-style endpoint."""

    def __init__(self, config: LlmClientConfig, timeout_s: float = 30.0):
        if not config.endpoint or not config.model:
            raise EndpointError("LLM endpoint and model must be configured")
        self.config = config
        self.timeout_s = timeout_s

    def __call__(self, prompt: str) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        payload = json.dumps(
            {
                "model": self.config.model,
                "messages": [{"role": "user", "content": prompt}],
            }
        ).encode("utf-8")
        req = urllib.request.Request(
            self.config.endpoint,
            data=payload,
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {key}",
            },
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except Exception as exc:  # network/auth/shape problems all abort the loop
            raise EndpointError(str(exc))
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise EndpointError(f"malformed completion payload: {exc}")


class ScriptedTransport:
    """Deterministic test double: replays a fixed list of responses and
    records every prompt it was sent."""

    def __init__(self, responses: Sequence[str], delay_s: float = 0.0):
        self.responses = list(responses)
        self.prompts: list[str] = []
        self.delay_s = delay_s
        self._i = 0

    def __call__(self, prompt: str) -> Optional[str]:
        self.prompts.append(prompt)
        if self.delay_s:
            time.sleep(self.delay_s)
        if self._i >= len(self.responses):
            return None
        resp = self.responses[self._i]
        self._i += 1
        return resp


def prompt_assets() -> dict[str, str]:
    base = resources.files("invfuzz.assets.prompts")
    return {
        "grammar": base.joinpath("grammar.txt").read_text("utf-8"),
        "template": base.joinpath("rule_gen.txt").read_text("utf-8"),
        "examples": base.joinpath("few_shot.rules").read_text("utf-8"),
    }


_RECORD_RE = re.compile(
    r"(?:^|\n)\s*#\s*name:\s*(?P<name>[^\n]*)\n\s*#\s*desc:\s*(?P<desc>[^\n]*)\n(?P<rule>[^\n#][^\n]*)",
)


def split_rule_records(text: str) -> list[tuple[str, str, str]]:
    """Extract (name, desc, rule line) records from a model reply; prose
    around the records is ignored."""
    return [
        (m.group("name").strip(), m.group("desc").strip(), m.group("rule").strip())
        for m in _RECORD_RE.finditer(text)
    ]


@dataclass
class LlmRunResult:
    rules: list[TypedRule]
    feedback_log: list[Feedback]
    turns: int = 0
    failures: int = 0
    aborted: Optional[str] = None


def classify_candidate(
    name: str, desc: str, rule_text: str, seen: set[str]
) -> tuple[Feedback, Optional[TypedRule]]:
    """Total classifier: every candidate maps to exactly one feedback kind."""
    if not name or not desc:
        return Feedback(FeedbackKind.FORMAT_ERROR, "record needs a name and a description"), None
    try:
        rule = parse_rule(rule_text, name=name, description=desc)
    except ParseError as exc:
        return Feedback(FeedbackKind.PARSING_ERROR, f"{name}: {exc}"), None
    except BindingError as exc:
        return Feedback(FeedbackKind.PARSING_ERROR, f"{name}: {exc}"), None
    unused = unused_bindings(rule)
    if unused:
        return (
            Feedback(
                FeedbackKind.REDUNDANT_BINDINGS,
                f"{name}: unused binding(s) {', '.join(unused)}",
            ),
            None,
        )
    try:
        typed = type_check(rule)
    except TypeErrorReport as exc:
        return Feedback(FeedbackKind.PARSING_ERROR, f"{name}: type error: {exc}"), None
    canonical = render_rule(rule)
    if canonical in seen:
        return Feedback(FeedbackKind.DUPLICATE_RULE, f"{name}: duplicate rule"), None
    return Feedback(FeedbackKind.SUCCESS, name), typed


def generate_rules_llm(
    api: str,
    doc: str,
    error_messages: Sequence[str],
    transport: Callable[[str], Optional[str]],
    limits: LlmLimits = LlmLimits(),
    assets: Optional[dict[str, str]] = None,
) -> LlmRunResult:
    """Iteratively prompt for rules, classify every returned candidate into
    one of the five feedback kinds, and adjust the next prompt with the last
    feedback. Stops at the failure bound or the time budget; multi-rule
    replies are accepted in full."""
    assets = assets or prompt_assets()
    result = LlmRunResult(rules=[], feedback_log=[])
    seen: set[str] = set()
    last_feedback = ""
    deadline = time.monotonic() + limits.timeout_s
    while result.failures < limits.failures and time.monotonic() < deadline:
        prompt = assets["template"].format(
            api=api,
            grammar=assets["grammar"],
            doc=doc or "(no documentation available)",
            errors="\n".join(error_messages) or "(none collected)",
            examples=assets["examples"],
            feedback=last_feedback,
        )
        try:
            reply = transport(prompt)
        except EndpointError as exc:
            result.aborted = str(exc)
            break
        if reply is None:
            break  # transport exhausted (scripted stubs)
        result.turns += 1
        records = split_rule_records(reply)
        if not records:
            fb = Feedback(FeedbackKind.FORMAT_ERROR, "no rule records in reply")
            result.feedback_log.append(fb)
            result.failures += 1
            last_feedback = f"Previous attempt failed ({fb.kind.value}): {fb.detail}"
            continue
        turn_feedback: list[Feedback] = []
        for name, desc, rule_text in records:
            fb, typed = classify_candidate(name, desc, rule_text, seen)
            turn_feedback.append(fb)
            result.feedback_log.append(fb)
            if typed is not None:
                seen.add(render_rule(typed.rule))
                result.rules.append(typed)
            else:
                result.failures += 1
                if result.failures >= limits.failures:
                    break
        failures = [fb for fb in turn_feedback if fb.kind is not FeedbackKind.SUCCESS]
        if failures:
            last_feedback = (
                f"Previous attempt failed ({failures[-1].kind.value}): {failures[-1].detail}"
            )
        else:
            last_feedback = "All previous rules were accepted; produce different rules."
    return result
