"""Variable UPR scores from rated subgraph nodes, and ranking against a threshold."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from upr_audit.keys import VariableKey
from upr_audit.slicer import VariableSubgraph

MAX_RATING = 10
_EPS = 1e-9


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ScoredSubgraph:
    subgraph: VariableSubgraph
    node_scores: Mapping[int, int]

    def __post_init__(self):
        missing = self.subgraph.nodes - set(self.node_scores)
        if missing:
            raise DomainError(f"no score for nodes {sorted(missing)}")


@dataclass(frozen=True)
class UPRScore:
    variable: VariableKey
    score: float
    lam: float
    per_criterion: tuple[tuple[str, int, float], ...] = ()
    unreferenced: bool = False


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must be in [0, 1], got {lam}")


def normalize(raw: float, lam: float) -> float:
    """Map a weighted sum ``s_c + lam * s_v`` back into [0, 10]."""
    _check_lambda(lam)
    upper = MAX_RATING * (1 + lam)
    if raw < -_EPS or raw > upper + _EPS:
        raise DomainError(f"raw score {raw} outside [0, {upper}]")
    return min(max(raw / (1 + lam), 0.0), float(MAX_RATING))


def aggregate(own: float, best: float, lam: float) -> float:
    """``normalize(own + lam * best, lam)`` written as a convex combination.

    The two forms are equal in exact arithmetic; this one returns ``own``
    exactly when ``own == best`` or ``lam == 0``.
    """
    normalize(own + lam * best, lam)  # domain checks
    return min(max(own + (lam / (1 + lam)) * (best - own), 0.0), float(MAX_RATING))


def score_variable(sg: ScoredSubgraph, lam: float) -> UPRScore:
    """Aggregate each criterion node with its best neighbour, then take the max."""
    _check_lambda(lam)
    g = sg.subgraph
    if not g.criterion_nodes:
        return UPRScore(g.variable, 0.0, lam, (), True)
    per = []
    for n in sorted(g.criterion_nodes):
        own = sg.node_scores[n]
        best = max((sg.node_scores[m] for m in g.neighbors(n)), default=0)
        per.append((g.function, n, aggregate(own, best, lam)))
    return UPRScore(g.variable, max(s for _, _, s in per), lam, tuple(per))


def combine(scores: Iterable[UPRScore]) -> UPRScore:
    """Merge the per-function scores of one variable (a global) with max."""
    scores = list(scores)
    if not scores:
        raise DomainError("nothing to combine")
    if len({s.variable for s in scores}) != 1:
        raise DomainError("combine expects scores for a single variable")
    per = tuple(sorted(p for s in scores for p in s.per_criterion))
    referenced = [s for s in scores if not s.unreferenced]
    best = max((s.score for s in referenced), default=0.0)
    return UPRScore(scores[0].variable, best, scores[0].lam, per, not referenced)


@dataclass
class ReportEntry:
    score: UPRScore
    candidate: bool
    subsumed_by: list[VariableKey] = field(default_factory=list)

    @property
    def variable(self) -> VariableKey:
        return self.score.variable

    def to_json(self) -> dict:
        return {
            "function": self.variable.function,
            "name": self.variable.name,
            "score": round(self.score.score, 6),
            "candidate": self.candidate,
            "unreferenced": self.score.unreferenced,
            "subsumed_by": [str(k) for k in self.subsumed_by],
            "per_criterion": [
                {"function": f, "node": n, "score": round(s, 6)}
                for f, n, s in self.score.per_criterion
            ],
        }


@dataclass
class UPRReport:
    meta: dict
    entries: list[ReportEntry]

    @property
    def candidates(self) -> list[VariableKey]:
        return [e.variable for e in self.entries if e.candidate]

    def to_json(self) -> dict:
        return {"meta": self.meta, "variables": [e.to_json() for e in self.entries]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["function", "name", "score", "candidate"])
        for e in self.entries:
            w.writerow([e.variable.function, e.variable.name,
                        f"{e.score.score:.6f}", str(e.candidate).lower()])
        return buf.getvalue()

    @classmethod
    def from_json(cls, data: dict) -> "UPRReport":
        entries = []
        for v in data["variables"]:
            key = VariableKey(v["function"], v["name"])
            per = tuple((p["function"], p["node"], p["score"]) for p in v.get("per_criterion", ()))
            score = UPRScore(key, v["score"], data["meta"].get("lambda", 0.0), per,
                             v.get("unreferenced", False))
            entries.append(ReportEntry(score, v["candidate"],
                                       [VariableKey.parse(s) for s in v.get("subsumed_by", ())]))
        return cls(dict(data["meta"]), entries)


def rank(scores: Iterable[UPRScore], threshold: float, *, lam: float | None = None,
         provider: str = "", profile: str = "", flagged_statements: int = 0,
         subsumed: Mapping[VariableKey, list[VariableKey]] | None = None) -> UPRReport:
    """Sort by score (high first; ties by function then name) and mark candidates.

    A variable is a candidate when its score is at or above ``threshold``.
    """
    scores = list(scores)
    if lam is None:
        lam = scores[0].lam if scores else 0.0
    ordered = sorted(scores, key=lambda s: (-s.score, s.variable.function, s.variable.name))
    subsumed = subsumed or {}
    entries = [
        ReportEntry(s, s.score >= threshold - _EPS and not s.unreferenced,
                    sorted(subsumed.get(s.variable, ())))
        for s in ordered
    ]
    meta = {
        "lambda": lam,
        "threshold": threshold,
        "provider": provider,
        "profile": profile,
        "flagged_statements": flagged_statements,
        "variables": len(entries),
        "candidates": sum(e.candidate for e in entries),
    }
    return UPRReport(meta, entries)


def _top_nodes(score: UPRScore) -> frozenset[tuple[str, int]]:
    return frozenset((f, n) for f, n, s in score.per_criterion if s >= score.score - _EPS)


def subsumption(subgraphs: Iterable[VariableSubgraph],
                scores: Iterable[UPRScore]) -> dict[VariableKey, list[VariableKey]]:
    """Variables whose score is borrowed from statements that belong to another variable.

    ``v`` is reported under ``w`` when every criterion node attaining v's
    score also refers to ``w``, and either ``w`` reaches its own score
    somewhere ``v`` is absent or the two have identical criterion sets.
    This is how a password's length or a loop index over the password ends
    up ranked like the password itself.
    """
    crit: dict[VariableKey, set[tuple[str, int]]] = {}
    for sg in subgraphs:
        crit.setdefault(sg.variable, set()).update((sg.function, n) for n in sg.criterion_nodes)
    by_var = {s.variable: s for s in scores if not s.unreferenced and s.score > 0}
    # index criterion nodes back to the variables they refer to
    refs: dict[tuple[str, int], set[VariableKey]] = {}
    for v, nodes in crit.items():
        for node in nodes:
            refs.setdefault(node, set()).add(v)
    out: dict[VariableKey, list[VariableKey]] = {}
    for v, sv in by_var.items():
        top_v = _top_nodes(sv)
        if not top_v:
            continue
        others = set.intersection(*(refs[n] for n in top_v)) - {v}
        hosts = []
        for w in sorted(others):
            if w not in by_var:
                continue
            if not _top_nodes(by_var[w]) <= crit[v] or crit[w] == crit[v]:
                hosts.append(w)
        if hosts:
            out[v] = hosts
    return out
