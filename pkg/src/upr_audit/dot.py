"""Graphviz DOT rendering for PDGs and variable subgraphs."""

from __future__ import annotations

from upr_audit.pdg import CONTROL, DepEdge, FunctionPDG
from upr_audit.slicer import VariableSubgraph

CRITERION_COLOR = "orange"
NODE_COLOR = "lightgrey"


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def to_dot(pdg: FunctionPDG, subgraph: VariableSubgraph | None = None,
           scores: dict[int, int] | None = None) -> str:
    """DOT text for ``pdg``, or only the part of it covered by ``subgraph``.

    Criterion nodes are filled orange; control edges are dashed, data edges
    are labelled with the variable they carry.
    """
    if subgraph is not None:
        keep = subgraph.nodes
        edges = subgraph.edges
        criteria = subgraph.criterion_nodes
        title = f"{pdg.function}:{subgraph.variable.name}"
    else:
        keep = {s.id for s in pdg.nodes}
        edges = pdg.edges
        criteria = frozenset()
        title = pdg.function
    lines = [f"digraph {_quote(title)} {{", "  node [shape=box, style=filled, fontname=monospace];"]
    for s in pdg.nodes:
        if s.id not in keep:
            continue
        label = f"{s.id}: {s.norm_text}"
        if scores and s.id in scores:
            label += f"  [{scores[s.id]}]"
        color = CRITERION_COLOR if s.id in criteria else NODE_COLOR
        lines.append(f"  n{s.id} [label={_quote(label)}, fillcolor={color}];")
    for e in sorted(edges, key=DepEdge.sort_key):
        if e.kind == CONTROL:
            attrs = "style=dashed"
        else:
            attrs = f"label={_quote(e.var.name)}"
        lines.append(f"  n{e.src} -> n{e.dst} [{attrs}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
