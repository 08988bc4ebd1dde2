"""Per-function program dependence graphs over simple-statement nodes."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from upr_audit.cfront.lower import (
    CONDITION, ENTRY, Cfg, LoweredFunction, Statement, lower_to_statements,
)
from upr_audit.cfront.parse import FunctionAst
from upr_audit.keys import VariableKey

CONTROL = "control"
DATA = "data"


@dataclass(frozen=True, order=True)
class DepEdge:
    src: int
    dst: int
    kind: str
    var: VariableKey | None = None

    def __post_init__(self):
        if (self.kind == DATA) != (self.var is not None):
            raise ValueError("data edges carry exactly one variable, control edges none")
        if self.kind == CONTROL and self.src == self.dst:
            raise ValueError("control self-loop")

    def sort_key(self):
        return (self.src, self.dst, self.kind, self.var or VariableKey("", ""))

    def to_json(self) -> dict:
        return {"src": self.src, "dst": self.dst, "kind": self.kind,
                "var": self.var.to_json() if self.var else None}


@dataclass(frozen=True)
class FunctionPDG:
    function: str
    nodes: tuple[Statement, ...]
    edges: frozenset[DepEdge]

    def node(self, sid: int) -> Statement:
        return self.nodes[sid] if self.nodes[sid].id == sid else \
            next(n for n in self.nodes if n.id == sid)

    def sorted_edges(self) -> list[DepEdge]:
        return sorted(self.edges, key=DepEdge.sort_key)

    def to_json(self) -> dict:
        return {
            "function": self.function,
            "nodes": [s.to_json() for s in self.nodes],
            "edges": [e.to_json() for e in self.sorted_edges()],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, ensure_ascii=False, sort_keys=True) + "\n"


@dataclass
class FunctionAnalysis:
    """Everything computed for one function: AST, lowering and PDG."""

    fn: FunctionAst
    lowered: LoweredFunction
    pdg: FunctionPDG

    @property
    def name(self) -> str:
        return self.fn.name

    @property
    def statements(self) -> list[Statement]:
        return self.lowered.statements

    @property
    def cfg(self) -> Cfg:
        return self.lowered.cfg


def control_dependence(cfg: Cfg, stmts: Iterable[Statement]) -> set[DepEdge]:
    """Edge from each condition to every statement in the block(s) it governs.

    Dependence is syntax-directed: a statement depends on its innermost
    enclosing condition only, so nested conditions chain.
    """
    conds = {s.id for s in stmts if s.kind == CONDITION}
    edges = set()
    for s in stmts:
        if s.governor is not None and s.governor != s.id:
            if s.governor not in conds:
                raise ValueError(f"statement {s.id} governed by non-condition {s.governor}")
            edges.add(DepEdge(s.governor, s.id, CONTROL))
    return edges


def reaching_definitions(cfg: Cfg, stmts: Iterable[Statement]) -> dict[int, frozenset[tuple[int, VariableKey]]]:
    """Definitions (statement id, variable) reaching the entry of each statement."""
    by_id = {s.id: s for s in stmts}
    preds: dict[int, list[int]] = {n: [] for n in cfg.nodes}
    for src, dst in cfg.edges:
        preds.setdefault(dst, []).append(src)
    all_defs: dict[VariableKey, set[tuple[int, VariableKey]]] = {}
    for s in by_id.values():
        for v in s.defs:
            all_defs.setdefault(v, set()).add((s.id, v))

    gen = {sid: {(sid, v) for v in s.defs} for sid, s in by_id.items()}
    kill = {}
    for sid, s in by_id.items():
        killed = set()
        for v in s.strong_defs:
            killed |= all_defs[v]
        kill[sid] = killed - gen[sid]

    out: dict[int, frozenset] = {n: frozenset() for n in cfg.nodes}
    ins: dict[int, frozenset] = {n: frozenset() for n in cfg.nodes}
    changed = True
    while changed:
        changed = False
        for n in cfg.nodes:
            if n == ENTRY or n not in by_id:
                continue
            new_in = frozenset().union(*(out[p] for p in preds.get(n, ())))
            new_out = frozenset(gen[n] | (new_in - kill[n]))
            if new_in != ins[n] or new_out != out[n]:
                ins[n], out[n] = new_in, new_out
                changed = True
    return {sid: ins[sid] for sid in by_id}


def data_dependence(cfg: Cfg, stmts: Iterable[Statement]) -> set[DepEdge]:
    """Edge B -> A carrying v whenever a definition of v at B reaches a use of v at A."""
    stmts = list(stmts)
    reaching = reaching_definitions(cfg, stmts)
    edges = set()
    for s in stmts:
        for def_id, v in reaching[s.id]:
            if v in s.uses:
                edges.add(DepEdge(def_id, s.id, DATA, v))
    return edges


def build_pdg(lowered: LoweredFunction) -> FunctionPDG:
    stmts, cfg = lowered
    edges = control_dependence(cfg, stmts) | data_dependence(cfg, stmts)
    return FunctionPDG(lowered.name, tuple(stmts), frozenset(edges))


def analyze_function(fn: FunctionAst) -> FunctionAnalysis:
    lowered = lower_to_statements(fn)
    return FunctionAnalysis(fn, lowered, build_pdg(lowered))


def pdg_from_json(data: dict) -> FunctionPDG:
    """Rebuild a PDG from its JSON artifact.

    Nodes and edges come back exactly; per-statement details that only the
    builders need (weak definitions, calls, governors) are not stored.
    """
    nodes = tuple(
        Statement(
            id=n["id"], kind=n["kind"], text=n["text"],
            norm_text=" ".join(n["text"].split()),
            defs=frozenset(VariableKey.from_json(k) for k in n["defs"]),
            uses=frozenset(VariableKey.from_json(k) for k in n["uses"]),
            span=tuple(n["span"]), function=data["function"],
        )
        for n in data["nodes"]
    )
    edges = frozenset(
        DepEdge(e["src"], e["dst"], e["kind"],
                VariableKey.from_json(e["var"]) if e["var"] else None)
        for e in data["edges"]
    )
    return FunctionPDG(data["function"], nodes, edges)
