"""Evaluation harnesses: identifier anonymization and prompt-profile ablation."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from statistics import mean
from typing import Callable, Iterable

from upr_audit.cfront.anonymize import RenameMap, anonymize_many
from upr_audit.cfront.source import SourceUnit
from upr_audit.keys import VariableKey
from upr_audit.pipeline import Analysis, RunConfig, ablation_recall, analyze_units, make_report
from upr_audit.rater import (
    PROFILES, Rating, RatingCache, RecordLog, get_profile, rate_all,
)
from upr_audit.rater.providers import Provider
from upr_audit.scorer import UPRReport


# -- anonymization -----------------------------------------------------------

@dataclass
class StructureCheck:
    statements: tuple[int, int]
    cfg_edges: tuple[int, int]
    pdg_edges: tuple[int, int]
    kinds_equal: bool
    pdg_isomorphic: bool

    @property
    def ok(self) -> bool:
        return (self.statements[0] == self.statements[1] and self.cfg_edges[0] == self.cfg_edges[1]
                and self.pdg_edges[0] == self.pdg_edges[1] and self.kinds_equal and self.pdg_isomorphic)

    def to_json(self) -> dict:
        return {"statements": list(self.statements), "cfg_edges": list(self.cfg_edges),
                "pdg_edges": list(self.pdg_edges), "kinds_equal": self.kinds_equal,
                "pdg_isomorphic": self.pdg_isomorphic, "ok": self.ok}


@dataclass
class AnonymizationResult:
    mapping: RenameMap
    structure: StructureCheck
    deltas: list[tuple[str, str, int]] = field(default_factory=list)

    @property
    def distribution(self) -> dict[int, int]:
        return dict(sorted(Counter(d for _, _, d in self.deltas).items()))

    @property
    def mean_delta(self) -> float:
        return mean(d for _, _, d in self.deltas) if self.deltas else 0.0

    def to_json(self) -> dict:
        return {
            "structure": self.structure.to_json(),
            "pairs": len(self.deltas),
            "mean_delta": round(self.mean_delta, 6),
            "distribution": {str(k): v for k, v in self.distribution.items()},
            "changed": [{"original": a, "anonymized": b, "delta": d}
                        for a, b, d in self.deltas if d != 0],
        }


def _edge_shape(analysis: Analysis, rename: Callable[[str], str] | None = None):
    """PDG edges per function position, with variable names optionally mapped."""
    shapes = []
    for fa in analysis.functions:
        edges = set()
        for e in fa.pdg.edges:
            var = None
            if e.var is not None:
                name = e.var.name
                if rename is not None:
                    name = rename(name)
                var = (e.var.is_global, name)
            edges.add((e.src, e.dst, e.kind, var))
        shapes.append(frozenset(edges))
    return shapes


def compare_structure(original: Analysis, anonymized: Analysis, mapping: RenameMap) -> StructureCheck:
    """Statement, CFG, and PDG statistics before and after renaming.

    Node ids follow source order, so an isomorphism is the identity on ids
    with variable names sent through the rename map.
    """
    def count(a: Analysis, what):
        return sum(what(fa) for fa in a.functions)

    def kinds(a: Analysis):
        return [Counter(s.kind for s in fa.statements) for fa in a.functions]

    def rename(name: str) -> str:
        star = name.startswith("*")
        base = name[1:] if star else name
        base = mapping.pairs.get(base, base)
        return "*" + base if star else base

    return StructureCheck(
        statements=(count(original, lambda fa: len(fa.statements)),
                    count(anonymized, lambda fa: len(fa.statements))),
        cfg_edges=(count(original, lambda fa: len(fa.cfg.edges)),
                   count(anonymized, lambda fa: len(fa.cfg.edges))),
        pdg_edges=(count(original, lambda fa: len(fa.pdg.edges)),
                   count(anonymized, lambda fa: len(fa.pdg.edges))),
        kinds_equal=kinds(original) == kinds(anonymized),
        pdg_isomorphic=_edge_shape(original, rename) == _edge_shape(anonymized),
    )


def statement_pairs(original: Analysis, anonymized: Analysis) -> list[tuple[str, str]]:
    """(original, anonymized) text of every statement in the rated set, paired by position."""
    pairs = set()
    for fa, fb in zip(original.functions, anonymized.functions):
        for sa, sb in zip(fa.statements, fb.statements):
            if sa.norm_text in original.statements:
                pairs.add((sa.norm_text, sb.norm_text))
    return sorted(pairs)


def anonymization_experiment(units: list[SourceUnit], seed: int, provider: Provider,
                             profile: str = "full", cache: RatingCache | None = None,
                             rename_all: bool = False, max_inflight: int = 1) -> AnonymizationResult:
    """Rate each statement before and after renaming; report the per-statement change."""
    renamed, mapping = anonymize_many(units, seed, rename_all)
    original = analyze_units(units)
    anonymized = analyze_units(renamed)
    structure = compare_structure(original, anonymized, mapping)
    pairs = statement_pairs(original, anonymized)
    cache = cache if cache is not None else RatingCache()
    prof = get_profile(profile)
    ratings = rate_all(provider, prof, {t for p in pairs for t in p}, cache, max_inflight)
    deltas = [(a, b, ratings[b].value - ratings[a].value) for a, b in pairs]
    return AnonymizationResult(mapping, structure, deltas)


# -- prompt ablation ---------------------------------------------------------

def write_transcript(path: str | Path, statements: Iterable[str], profile: str, provider: str,
                     rate: Callable[[str], int]) -> Path:
    """Write a replay transcript answering ``rate(statement)`` for each statement."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.unlink(missing_ok=True)
    log = RecordLog(path)
    for stmt in sorted(set(statements)):
        rec = Rating(stmt, rate(stmt), provider, profile).to_record(timestamp=0)
        rec["reply"] = str(rec["value"])
        log.append(rec)
    return path


@dataclass
class AblationResult:
    reports: dict[str, UPRReport]
    recall: dict[str, float]

    def monotone(self) -> bool:
        order = [p for p in ("full", "partial", "none") if p in self.recall]
        return all(self.recall[a] >= self.recall[b] for a, b in zip(order, order[1:]))

    def to_json(self) -> dict:
        return {"recall": self.recall, "monotone": self.monotone(),
                "candidates": {p: [str(k) for k in r.candidates] for p, r in self.reports.items()}}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"


def ablation_experiment(analysis: Analysis, providers: dict[str, Provider],
                        confirmed: Iterable[VariableKey], config: RunConfig) -> AblationResult:
    """Score the same analysis under each prompt profile and measure re-detection."""
    confirmed = list(confirmed)
    reports: dict[str, UPRReport] = {}
    recall: dict[str, float] = {}
    for profile in PROFILES:
        if profile not in providers:
            continue
        provider = providers[profile]
        ratings = rate_all(provider, get_profile(profile), analysis.statements, RatingCache(),
                           config.max_inflight)
        report = make_report(analysis.subgraphs, analysis.pdgs, ratings, config.lam,
                             config.threshold, provider.name, profile, analysis.errors)
        reports[profile] = report
        recall[profile] = ablation_recall(confirmed, report)
    return AblationResult(reports, recall)


__all__ = [
    "AblationResult", "AnonymizationResult", "StructureCheck", "ablation_experiment",
    "anonymization_experiment", "compare_structure", "statement_pairs", "write_transcript",
]
