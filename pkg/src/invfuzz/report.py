"""Scoring learned invariants against authored ground truth, and the
consolidated multi-API report.

Recall and precision are measured on the exhaustive small-bounds probe set
of each reference target: a kept invariant is correct when it holds on every
valid probe, and a ground-truth constraint is covered when every probe
admitted by the kept set satisfies it (the kept set enforces it).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .evaluator import CheckStatus, check_rule
from .executor import ground_truth, probe_inputs, validity_predicate
from .learner import Invariant
from .values import ApiInput


def _holds(inv: Invariant, inp: ApiInput) -> bool:
    lookup = inp.as_dict()
    binding = {
        var: lookup.get(param) for (var, _), param in zip(inv.rule.bindings, inv.params)
    }
    return check_rule(inv.rule, binding).status is CheckStatus.HOLDS


@dataclass
class Score:
    api: str
    recall: float
    precision: float
    gt_total: int
    gt_covered: int
    kept_total: int
    kept_correct: int
    missed: list[str] = field(default_factory=list)
    incorrect: list[str] = field(default_factory=list)

    def to_doc(self) -> dict:
        return {
            "api": self.api,
            "recall": self.recall,
            "precision": self.precision,
            "gt_covered": f"{self.gt_covered}/{self.gt_total}",
            "kept_correct": f"{self.kept_correct}/{self.kept_total}",
            "missed": self.missed,
            "incorrect": self.incorrect,
        }


def score_invariants(api: str, kept: Sequence[Invariant]) -> Score:
    probes = list(probe_inputs(api))
    valid = [p for p in probes if validity_predicate(api, p)]
    kept_correct = []
    incorrect = []
    for inv in kept:
        if all(_holds(inv, p) for p in valid):
            kept_correct.append(inv)
        else:
            incorrect.append(inv.label())
    admitted = [p for p in probes if all(_holds(inv, p) for inv in kept)]
    gt = ground_truth(api)
    covered = 0
    missed = []
    for rule, params in gt:
        gt_inv = Invariant(rule, params)
        if all(_holds(gt_inv, p) for p in admitted):
            covered += 1
        else:
            missed.append(gt_inv.label())
    precision = len(kept_correct) / len(kept) if kept else 1.0
    recall = covered / len(gt) if gt else 1.0
    return Score(
        api=api,
        recall=recall,
        precision=precision,
        gt_total=len(gt),
        gt_covered=covered,
        kept_total=len(kept),
        kept_correct=len(kept_correct),
        missed=missed,
        incorrect=incorrect,
    )


# ---------------------------------------------------------------------------
# Consolidated report


@dataclass
class ApiRow:
    api: str
    rules_generated: Optional[int] = None
    invariants_kept: Optional[int] = None
    corpus_size: Optional[int] = None
    validity_ratio: Optional[float] = None
    throughput: Optional[float] = None
    findings: dict[str, int] = field(default_factory=dict)
    recall: Optional[float] = None
    precision: Optional[float] = None
    seed: Optional[int] = None

    def to_doc(self) -> dict:
        return {
            "api": self.api,
            "rules_generated": self.rules_generated,
            "invariants_kept": self.invariants_kept,
            "corpus_size": self.corpus_size,
            "validity_ratio": self.validity_ratio,
            "throughput_per_s": self.throughput,
            "findings": self.findings,
            "recall": self.recall,
            "precision": self.precision,
            "seed": self.seed,
        }


class MissingArtifacts(Exception):
    pass


def format_table(rows: Sequence[ApiRow], flags: Sequence[str]) -> str:
    headers = ["api", "rules", "kept", "corpus", "validity", "rate/s", "findings", "recall", "prec"]
    lines = ["  ".join(f"{h:>9}" for h in headers)]

    def fmt(x, pct=False):
        if x is None:
            return "-"
        if pct:
            return f"{100 * x:.1f}%"
        if isinstance(x, float):
            return f"{x:.0f}"
        return str(x)

    for r in rows:
        findings = ",".join(f"{k}:{v}" for k, v in sorted(r.findings.items())) or "-"
        cells = [
            r.api.split(".", 1)[-1],
            fmt(r.rules_generated),
            fmt(r.invariants_kept),
            fmt(r.corpus_size),
            fmt(r.validity_ratio, pct=True),
            fmt(r.throughput),
            findings,
            fmt(r.recall, pct=True),
            fmt(r.precision, pct=True),
        ]
        lines.append("  ".join(f"{c:>9}" for c in cells))
    for flag in flags:
        lines.append(f"! {flag}")
    return "\n".join(lines)


def write_report(rows: Sequence[ApiRow], flags: Sequence[str], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"apis": [r.to_doc() for r in rows], "flags": list(flags)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")
