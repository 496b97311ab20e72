"""Operator entry point: collect errors, generate rules, learn, refine,
generate abstract inputs, fuzz, and report.

Stages write their artifacts under the output directory and record an input
hash, so unchanged reruns are cache hits. Offline stages (errors through
genabs) run once per API; fuzzing replays the cached corpus. Per-API work
runs in a bounded worker-process pool and a failing API never aborts the
batch. Exit codes: 0 success, 2 configuration error, 3 stage failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .absgen import BucketTable, GenConfig, corpus_load, corpus_save, generate_abstract_inputs
from .dsl import parse_rule, render_ruleset_record, type_check
from .evaluator import CheckStatus, check_rule
from .executor import (
    InProcessExecutor,
    SubprocessExecutor,
    get_target,
    list_reference_targets,
    load_target_ruleset,
    seed_inputs,
)
from .fuzzer import Finding, FindingKind, FuzzConfig, FuzzSession, save_findings
from .learner import Invariant, LearnConfig, learn_and_refine
from .report import ApiRow, MissingArtifacts, format_table, score_invariants, write_report
from .solver import Bounds, LoweringUnsupported, build_layout, lower_rule
from .sources import (
    ErrorDb,
    HttpChatTransport,
    LlmClientConfig,
    LlmLimits,
    collect_errors,
    enumerate_rules,
    generate_rules_llm,
    load_ruleset,
    make_mutators,
)
from .values import ApiInput, decode_input, encode_input

STAGES = ("errors", "rules", "learn", "genabs", "fuzz")


@dataclass
class RunConfig:
    library: str = "ref"
    apis: tuple[str, ...] = ()  # empty = all reference targets
    out_dir: str = "out"
    seed: int = 0
    trials: int = 30
    sampling_ratio: float = 0.3
    seeds_per_api: int = 117
    errors_budget_s: float = 2.0
    genabs_count: int = 50
    genabs_timeout_s: float = 60.0
    fuzz_budget_s: float = 180.0
    fuzz_max_inputs: Optional[int] = None
    tolerance: float = 0.01
    enum_count: int = 40
    enum_depth: int = 3
    executor_cmd: Optional[str] = None
    rulesets: tuple[str, ...] = ()
    use_llm: bool = False
    workers: int = max(1, os.cpu_count() or 1)

    def resolve_apis(self) -> list[str]:
        if self.apis:
            return list(self.apis)
        return [t.name for t in list_reference_targets()]

    def out(self) -> Path:
        return Path(self.out_dir)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Minimal TOML subset reader (py3.10 has no tomllib): [sections], scalar
# values (strings, ints, floats, booleans) and flat arrays.


def parse_toml_subset(text: str) -> dict[str, dict[str, object]]:
    out: dict[str, dict[str, object]] = {}
    section = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip() if not raw.strip().startswith('"') else raw.strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            out.setdefault(section, {})
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        out.setdefault(section, {})[key.strip()] = _toml_value(value.strip(), lineno)
    return out


def _toml_value(text: str, lineno: int) -> object:
    if text.startswith("[") and text.endswith("]"):
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [_toml_value(part.strip(), lineno) for part in inner.split(",")]
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"config line {lineno}: cannot parse value {text!r}")


def load_config(path: Optional[str]) -> RunConfig:
    cfg = RunConfig()
    if not path:
        return cfg
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    doc = parse_toml_subset(p.read_text(encoding="utf-8"))
    flat: dict[str, object] = {}
    for section in doc.values():
        flat.update(section)
    known = {f.name for f in fields(RunConfig)}
    updates: dict[str, object] = {}
    for key, value in flat.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key in ("apis", "rulesets") and isinstance(value, list):
            value = tuple(str(v) for v in value)
        updates[key] = value
    try:
        return replace(cfg, **updates)  # type: ignore[arg-type]
    except TypeError as exc:
        raise ConfigError(str(exc))


# ---------------------------------------------------------------------------
# Artifact paths and caching


def _paths(cfg: RunConfig, api: str) -> dict[str, Path]:
    short = api.split(".", 1)[-1]
    out = cfg.out()
    return {
        "seeds": out / "seeds" / f"{short}.jsonl",
        "errors": out / "errors" / f"{cfg.library}.json",
        "rules": out / "rules" / f"{short}.rules",
        "learn": out / "learn" / f"{short}.json",
        "corpus": out / "corpus" / cfg.library / f"{short}.jsonl",
        "genabs_meta": out / "genabs" / f"{short}.json",
        "fuzz": out / "reports" / f"{short}.json",
        "findings": out / "findings",
        "meta": out / "meta",
    }


def _hash_inputs(*parts: object) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, Path):
            h.update(part.read_bytes() if part.exists() else b"<missing>")
        else:
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
    return h.hexdigest()


def _cache_fresh(cfg: RunConfig, stage: str, api: str, input_hash: str, outputs: list[Path]) -> bool:
    meta = _paths(cfg, api)["meta"] / f"{stage}-{api.split('.', 1)[-1]}.json"
    if not meta.exists() or not all(p.exists() for p in outputs):
        return False
    try:
        return json.loads(meta.read_text())["input_hash"] == input_hash
    except (json.JSONDecodeError, KeyError):
        return False


def _cache_store(cfg: RunConfig, stage: str, api: str, input_hash: str) -> None:
    meta_dir = _paths(cfg, api)["meta"]
    meta_dir.mkdir(parents=True, exist_ok=True)
    (meta_dir / f"{stage}-{api.split('.', 1)[-1]}.json").write_text(
        json.dumps({"input_hash": input_hash, "seed": cfg.seed}, sort_keys=True)
    )


def _make_executor(cfg: RunConfig):
    if cfg.executor_cmd:
        import shlex

        return SubprocessExecutor(shlex.split(cfg.executor_cmd))
    return InProcessExecutor()


def _load_seeds(cfg: RunConfig, api: str) -> list[ApiInput]:
    path = _paths(cfg, api)["seeds"]
    if not path.exists():
        raise MissingArtifacts(f"seed file missing: {path} (run the errors stage first)")
    seeds = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            seeds.append(decode_input(json.loads(line)))
    return seeds


def _ensure_seeds(cfg: RunConfig, api: str) -> list[ApiInput]:
    path = _paths(cfg, api)["seeds"]
    if path.exists():
        return _load_seeds(cfg, api)
    rng = np.random.default_rng(cfg.seed + _api_offset(api))
    seeds = seed_inputs(api, cfg.seeds_per_api, rng)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for s in seeds:
            fh.write(json.dumps(encode_input(s), sort_keys=True) + "\n")
    return seeds


def _api_offset(api: str) -> int:
    return int.from_bytes(hashlib.sha256(api.encode()).digest()[:4], "big") % 10_000


# ---------------------------------------------------------------------------
# Stage implementations (one API each)


def stage_errors(cfg: RunConfig, api: str) -> dict:
    paths = _paths(cfg, api)
    target = get_target(api)
    seeds = _ensure_seeds(cfg, api)
    input_hash = _hash_inputs("errors", cfg.seed, cfg.errors_budget_s, paths["seeds"])
    if _cache_fresh(cfg, "errors", api, input_hash, [paths["errors"]]):
        return {"api": api, "stage": "errors", "cached": True}
    executor = _make_executor(cfg)
    db = ErrorDb.load(paths["errors"]) if paths["errors"].exists() else ErrorDb()
    db, crash_inputs = collect_errors(
        api, seeds, make_mutators(target.signature), executor, target.signature,
        random_budget_s=cfg.errors_budget_s,
        rng=np.random.default_rng(cfg.seed + _api_offset(api) + 1),
        db=db,
    )
    db.save(paths["errors"])
    findings = []
    seen_keys = set()
    for inp in crash_inputs:
        result = executor.run_input(inp, backend="cpu")
        f = Finding(
            kind=FindingKind.CRASH, api=api, input=inp, backends=("cpu",),
            evidence=f"signal {result.signal}: {result.error_message}",
            seed=cfg.seed, model={},
        )
        if f.dedup_key() not in seen_keys:
            seen_keys.add(f.dedup_key())
            findings.append(f)
    save_findings(findings, paths["findings"], cfg.library)
    executor.close()
    _cache_store(cfg, "errors", api, input_hash)
    return {
        "api": api, "stage": "errors", "cached": False,
        "messages": len(db.messages(api)), "crash_findings": len(findings),
    }


def stage_rules(cfg: RunConfig, api: str) -> dict:
    paths = _paths(cfg, api)
    target = get_target(api)
    input_hash = _hash_inputs(
        "rules", cfg.seed, cfg.enum_count, cfg.enum_depth, cfg.use_llm, list(cfg.rulesets)
    )
    if _cache_fresh(cfg, "rules", api, input_hash, [paths["rules"]]):
        return {"api": api, "stage": "rules", "cached": True}
    rules = []
    if cfg.library == "ref":
        rules.extend(load_target_ruleset(api).values())
    for extra in cfg.rulesets:
        loaded = load_ruleset(extra)
        rules.extend(loaded.rules)
    rules.extend(
        enumerate_rules(target.signature, cfg.enum_depth, cfg.enum_count, cfg.seed)
    )
    if cfg.use_llm:
        errors_path = paths["errors"]
        db = ErrorDb.load(errors_path) if errors_path.exists() else ErrorDb()
        transport = HttpChatTransport(LlmClientConfig.from_env())
        llm = generate_rules_llm(api, target.doc, db.messages(api), transport, LlmLimits())
        rules.extend(llm.rules)
    seen = set()
    records = []
    for rule in rules:
        from .dsl import render_rule

        text = render_rule(rule.rule)
        if text in seen:
            continue
        seen.add(text)
        records.append(render_ruleset_record(rule.rule))
    paths["rules"].parent.mkdir(parents=True, exist_ok=True)
    paths["rules"].write_text("\n\n".join(records) + "\n", encoding="utf-8")
    _cache_store(cfg, "rules", api, input_hash)
    return {"api": api, "stage": "rules", "cached": False, "rules": len(records)}


def stage_learn(cfg: RunConfig, api: str) -> dict:
    paths = _paths(cfg, api)
    if not paths["rules"].exists():
        raise MissingArtifacts(f"ruleset missing: {paths['rules']} (run the rules stage first)")
    seeds = _load_seeds(cfg, api)
    input_hash = _hash_inputs(
        "learn", cfg.seed, cfg.trials, cfg.sampling_ratio, paths["rules"], paths["seeds"]
    )
    if _cache_fresh(cfg, "learn", api, input_hash, [paths["learn"]]):
        return {"api": api, "stage": "learn", "cached": True}
    loaded = load_ruleset(paths["rules"])
    target = get_target(api)
    layout = build_layout(target.signature, Bounds())
    executor = _make_executor(cfg)
    learn_cfg = LearnConfig(
        trials=cfg.trials, seed=cfg.seed, sampling_ratio=cfg.sampling_ratio
    )
    report = learn_and_refine(loaded.rules, seeds, layout, BucketTable(), executor, learn_cfg)
    executor.close()
    doc = report.to_doc()
    doc["ruleset_errors"] = loaded.errors
    doc["meta"] = {"seed": cfg.seed}
    paths["learn"].parent.mkdir(parents=True, exist_ok=True)
    paths["learn"].write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    _cache_store(cfg, "learn", api, input_hash)
    return {
        "api": api, "stage": "learn", "cached": False,
        "kept": len(report.kept), "v_orig": report.v_orig, "v_final": report.v_final,
    }


def load_kept_invariants(cfg: RunConfig, api: str) -> list[Invariant]:
    paths = _paths(cfg, api)
    if not paths["learn"].exists():
        raise MissingArtifacts(f"learn report missing: {paths['learn']}")
    doc = json.loads(paths["learn"].read_text(encoding="utf-8"))
    out = []
    for item in doc["kept"]:
        rule = parse_rule(item["rule"], name=item["name"], description=item.get("description", ""))
        out.append(Invariant(type_check(rule), tuple(item["params"])))
    return out


def _lower_kept(kept, layout):
    lowered = []
    excluded = []
    for inv in kept:
        try:
            lowered.append(lower_rule(inv.rule, inv.params, layout))
        except LoweringUnsupported as exc:
            excluded.append((inv.label(), str(exc)))
    return lowered, excluded


def stage_genabs(cfg: RunConfig, api: str) -> dict:
    paths = _paths(cfg, api)
    kept = load_kept_invariants(cfg, api)
    input_hash = _hash_inputs(
        "genabs", cfg.seed, cfg.genabs_count, cfg.genabs_timeout_s,
        cfg.sampling_ratio, paths["learn"],
    )
    if _cache_fresh(cfg, "genabs", api, input_hash, [paths["corpus"], paths["genabs_meta"]]):
        return {"api": api, "stage": "genabs", "cached": True}
    target = get_target(api)
    layout = build_layout(target.signature, Bounds())
    lowered, excluded = _lower_kept(kept, layout)
    executor = _make_executor(cfg)
    gen_cfg = GenConfig(
        sampling_ratio=cfg.sampling_ratio,
        target_count=cfg.genabs_count,
        timeout_s=cfg.genabs_timeout_s,
        seed=cfg.seed,
    )
    corpus, stats = generate_abstract_inputs(lowered, layout, BucketTable(), executor, gen_cfg)
    executor.close()
    corpus_save(corpus, paths["corpus"])
    meta = {
        "api": api,
        "corpus_size": len(corpus),
        "iterations": stats.iterations,
        "unsat": stats.unsat,
        "unknown": stats.unknown,
        "rejected": stats.rejected,
        "duplicates": stats.duplicates,
        "bucket_retries": stats.bucket_retries,
        "lowering_excluded": excluded,
        "meta": {"seed": cfg.seed},
    }
    paths["genabs_meta"].parent.mkdir(parents=True, exist_ok=True)
    paths["genabs_meta"].write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    _cache_store(cfg, "genabs", api, input_hash)
    return {"api": api, "stage": "genabs", "cached": False, "corpus": len(corpus)}


def stage_fuzz(cfg: RunConfig, api: str) -> dict:
    paths = _paths(cfg, api)
    if not paths["corpus"].exists():
        raise MissingArtifacts(f"corpus missing: {paths['corpus']} (run genabs first)")
    corpus = corpus_load(paths["corpus"])
    kept = load_kept_invariants(cfg, api)
    target = get_target(api)
    layout = build_layout(target.signature, Bounds())
    lowered, _ = _lower_kept(kept, layout)
    executor = _make_executor(cfg)
    session = FuzzSession(
        layout=layout,
        executor=executor,
        rechecks=tuple(lw for lw in lowered if lw.needs_recheck),
    )
    fuzz_cfg = FuzzConfig(
        budget_s=cfg.fuzz_budget_s,
        seed=cfg.seed,
        tolerance=cfg.tolerance,
        max_inputs=cfg.fuzz_max_inputs,
    )
    report = session.fuzz(corpus, fuzz_cfg)
    executor.close()
    save_findings(report.findings, paths["findings"], cfg.library)
    doc = report.to_doc()
    doc["meta"] = {"seed": cfg.seed}
    paths["fuzz"].parent.mkdir(parents=True, exist_ok=True)
    paths["fuzz"].write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
    return {
        "api": api, "stage": "fuzz", "cached": False,
        "generated": report.generated, "validity": report.validity_ratio,
        "findings": len(report.findings),
    }


_STAGE_FNS = {
    "errors": stage_errors,
    "rules": stage_rules,
    "learn": stage_learn,
    "genabs": stage_genabs,
    "fuzz": stage_fuzz,
}


def _run_stage_worker(args: tuple) -> dict:
    cfg_dict, stage, api = args
    cfg = RunConfig(**cfg_dict)
    try:
        return _STAGE_FNS[stage](cfg, api)
    except Exception as exc:  # per-API failures are reported, not raised
        return {"api": api, "stage": stage, "error": f"{type(exc).__name__}: {exc}"}


def run_pipeline(cfg: RunConfig, stages: Sequence[str]) -> tuple[list[dict], bool]:
    """Run the requested stages over every API. Returns (results, any_failed);
    a failing API never aborts the rest of the batch."""
    from dataclasses import asdict

    apis = cfg.resolve_apis()
    results: list[dict] = []
    failed = False
    cfg_dict = asdict(cfg)
    for stage in stages:
        jobs = [(cfg_dict, stage, api) for api in apis]
        if cfg.workers > 1 and len(jobs) > 1:
            with concurrent.futures.ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                stage_results = list(pool.map(_run_stage_worker, jobs))
        else:
            stage_results = [_run_stage_worker(j) for j in jobs]
        for res in stage_results:
            results.append(res)
            if "error" in res:
                failed = True
                print(f"[{res['stage']}] {res['api']} FAILED: {res['error']}", file=sys.stderr)
            else:
                extra = {k: v for k, v in res.items() if k not in ("api", "stage")}
                print(f"[{res['stage']}] {res['api']} {extra}")
    return results, failed


# ---------------------------------------------------------------------------
# report and eval subcommands


def cmd_report(cfg: RunConfig) -> int:
    rows: list[ApiRow] = []
    flags: list[str] = []
    seeds_seen: set[int] = set()
    found_any = False
    for api in cfg.resolve_apis():
        paths = _paths(cfg, api)
        row = ApiRow(api=api)
        if paths["rules"].exists():
            found_any = True
            row.rules_generated = paths["rules"].read_text(encoding="utf-8").count("|=")
        if paths["learn"].exists():
            found_any = True
            learn_doc = json.loads(paths["learn"].read_text(encoding="utf-8"))
            row.invariants_kept = len(learn_doc.get("kept", []))
            row.seed = learn_doc.get("meta", {}).get("seed")
            if row.seed is not None:
                seeds_seen.add(row.seed)
            try:
                kept = load_kept_invariants(cfg, api)
                score = score_invariants(api, kept)
                row.recall = score.recall
                row.precision = score.precision
            except Exception as exc:
                flags.append(f"{api}: scoring failed: {exc}")
        if paths["corpus"].exists():
            row.corpus_size = sum(
                1 for line in paths["corpus"].read_text(encoding="utf-8").splitlines() if line
            )
        if paths["fuzz"].exists():
            fuzz_doc = json.loads(paths["fuzz"].read_text(encoding="utf-8"))
            row.validity_ratio = fuzz_doc.get("validity_ratio")
            row.throughput = fuzz_doc.get("timing", {}).get("throughput_per_s")
            counts: dict[str, int] = {}
            for f in fuzz_doc.get("findings", []):
                counts[f["kind"]] = counts.get(f["kind"], 0) + 1
            row.findings = counts
            fuzz_seed = fuzz_doc.get("meta", {}).get("seed")
            if fuzz_seed is not None:
                seeds_seen.add(fuzz_seed)
        rows.append(row)
    if not found_any:
        print("no artifacts found; run a pipeline stage first", file=sys.stderr)
        return 3
    if len(seeds_seen) > 1:
        flags.append(f"seed mismatch across artifacts: {sorted(seeds_seen)}")
    print(format_table(rows, flags))
    write_report(rows, flags, cfg.out() / "report.json")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    rule = type_check(parse_rule(args.rule))
    doc = json.loads(Path(args.input).read_text(encoding="utf-8"))
    inp = decode_input(doc)
    params = [p.strip() for p in args.params.split(",")] if args.params else [
        name for name, _ in inp.args
    ]
    if len(params) != len(rule.bindings):
        print(
            f"rule has {len(rule.bindings)} variables but {len(params)} parameters given",
            file=sys.stderr,
        )
        return 2
    lookup = inp.as_dict()
    binding = {var: lookup.get(p) for (var, _), p in zip(rule.bindings, params)}
    result = check_rule(rule, binding)
    if result.status is CheckStatus.HOLDS:
        print("holds")
    elif result.status is CheckStatus.FAILS:
        print("fails")
    else:
        print(f"error: {result.error}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="invfuzz",
        description="Learn input constraints for tensor APIs and fuzz them",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--api", action="append", help="API name (repeatable; default all)")
        p.add_argument("--seed", type=int, help="master RNG seed")
        p.add_argument("--budget-s", type=float, help="fuzz budget per API, seconds")
        p.add_argument("--max-inputs", type=int, help="cap fuzzed inputs (deterministic runs)")
        p.add_argument("--executor-cmd", help="external executor command line")
        p.add_argument("--ruleset", action="append", help="extra ruleset file (repeatable)")
        p.add_argument("--out-dir", help="artifact directory (default: out)")
        p.add_argument("--workers", type=int, help="worker process pool size")
        p.add_argument("--llm", action="store_true", help="include the LLM rule source")

    for name in (*STAGES, "all", "report"):
        p = sub.add_parser(name)
        add_common(p)

    pe = sub.add_parser("eval", help="check one rule against an input document")
    pe.add_argument("--rule", required=True, help="rule text")
    pe.add_argument("--input", required=True, help="path to an input JSON document")
    pe.add_argument("--params", help="comma-separated parameter names to bind")
    return parser


def _merge_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    updates: dict[str, object] = {}
    if args.api:
        updates["apis"] = tuple(args.api)
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.budget_s is not None:
        updates["fuzz_budget_s"] = args.budget_s
    if args.max_inputs is not None:
        updates["fuzz_max_inputs"] = args.max_inputs
    if args.executor_cmd:
        updates["executor_cmd"] = args.executor_cmd
    if args.ruleset:
        updates["rulesets"] = tuple(args.ruleset)
    if args.out_dir:
        updates["out_dir"] = args.out_dir
    if args.workers is not None:
        updates["workers"] = args.workers
    if args.llm:
        updates["use_llm"] = True
    return replace(cfg, **updates)  # type: ignore[arg-type]


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "eval":
        try:
            return cmd_eval(args)
        except Exception as exc:
            print(f"eval failed: {exc}", file=sys.stderr)
            return 2
    try:
        cfg = _merge_flags(load_config(args.config), args)
        unknown = [a for a in cfg.resolve_apis() if get_target(a) is None]  # raises on bad name
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    if args.command == "report":
        try:
            return cmd_report(cfg)
        except MissingArtifacts as exc:
            print(str(exc), file=sys.stderr)
            return 3
    stages = STAGES if args.command == "all" else (args.command,)
    try:
        _, failed = run_pipeline(cfg, stages)
    except MissingArtifacts as exc:
        print(str(exc), file=sys.stderr)
        return 3
    if args.command == "all":
        cmd_report(cfg)
    return 3 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
