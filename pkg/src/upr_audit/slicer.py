"""Criterion marking, 1-hop variable subgraphs and statement collection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from upr_audit.keys import VariableKey
from upr_audit.pdg import DepEdge, FunctionPDG


@dataclass(frozen=True)
class VariableSubgraph:
    variable: VariableKey
    function: str
    criterion_nodes: frozenset[int]
    nodes: frozenset[int]
    edges: frozenset[DepEdge]

    @property
    def unreferenced(self) -> bool:
        return not self.criterion_nodes

    def neighbors(self, node: int) -> set[int]:
        out = set()
        for e in self.edges:
            if e.src == node and e.dst != node:
                out.add(e.dst)
            elif e.dst == node and e.src != node:
                out.add(e.src)
        return out

    def to_json(self) -> dict:
        return {
            "variable": self.variable.to_json(),
            "function": self.function,
            "criteria": sorted(self.criterion_nodes),
            "nodes": sorted(self.nodes),
            "edges": [e.to_json() for e in sorted(self.edges, key=DepEdge.sort_key)],
        }

    @classmethod
    def from_json(cls, data: dict) -> "VariableSubgraph":
        edges = frozenset(
            DepEdge(e["src"], e["dst"], e["kind"],
                    VariableKey.from_json(e["var"]) if e["var"] else None)
            for e in data["edges"])
        return cls(VariableKey.from_json(data["variable"]), data["function"],
                   frozenset(data["criteria"]), frozenset(data["nodes"]), edges)


@dataclass
class StatementSet:
    """Unique normalized statements plus every place each one came from."""

    origin: dict[str, list[tuple[str, int]]] = field(default_factory=dict)

    @property
    def entries(self) -> list[str]:
        return sorted(self.origin)

    def __len__(self) -> int:
        return len(self.origin)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, text: str) -> bool:
        return text in self.origin

    def add(self, text: str, function: str, sid: int) -> None:
        locs = self.origin.setdefault(text, [])
        if (function, sid) not in locs:
            locs.append((function, sid))

    def merge(self, other: "StatementSet") -> "StatementSet":
        merged = StatementSet({k: list(v) for k, v in self.origin.items()})
        for text, locs in other.origin.items():
            for fn, sid in locs:
                merged.add(text, fn, sid)
        return merged

    def to_json(self) -> dict:
        return {
            "entries": self.entries,
            "origin": {k: sorted([list(loc) for loc in self.origin[k]]) for k in self.entries},
        }

    @classmethod
    def from_json(cls, data: dict) -> "StatementSet":
        return cls({k: [tuple(loc) for loc in v] for k, v in data["origin"].items()})


def mark_criteria(pdg: FunctionPDG, v: VariableKey) -> frozenset[int]:
    return frozenset(s.id for s in pdg.nodes if v in s.defs or v in s.uses)


def extract_subgraph(pdg: FunctionPDG, v: VariableKey) -> VariableSubgraph:
    """Criterion nodes of ``v`` plus their immediate neighbours in either direction."""
    criteria = mark_criteria(pdg, v)
    nodes = set(criteria)
    for e in pdg.edges:
        if e.src in criteria:
            nodes.add(e.dst)
        if e.dst in criteria:
            nodes.add(e.src)
    edges = frozenset(e for e in pdg.edges if e.src in nodes and e.dst in nodes)
    return VariableSubgraph(v, pdg.function, criteria, frozenset(nodes), edges)


def collect_statements(subgraphs: Iterable[VariableSubgraph],
                       pdgs: dict[str, FunctionPDG]) -> StatementSet:
    """Deduplicate (by normalized text) the statements of every subgraph node."""
    out = StatementSet()
    for sg in subgraphs:
        pdg = pdgs[sg.function]
        for sid in sorted(sg.nodes):
            out.add(pdg.node(sid).norm_text, sg.function, sid)
    return out
