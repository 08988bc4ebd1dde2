"""Heuristic comparison: keyword regex on branch conditions, I/O-to-setuid taint."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

from tree_sitter import Node

from upr_audit.cfront.lower import variable_resolver
from upr_audit.cfront.parse import FunctionAst
from upr_audit.keys import VariableKey
from upr_audit.pdg import DATA, FunctionAnalysis

SYNTAX = "syntax"
TAINT = "taint"

UPR_NAME_PATTERN = (
    r".*(?<![A-Za-z])(auth|authenticate|login|admin|authorize|banned|allowed|uid|gid|"
    r"username|permission|chown|key|passwd|password)(?![A-RT-Za-rt-z]).*"
)
UPR_NAME = re.compile(UPR_NAME_PATTERN)

SOURCE_PATTERN = r"scanf|gets|fscanf|fgetc|fgets|getchar|fread"
SOURCE = re.compile(SOURCE_PATTERN)
DEFAULT_SINKS = ("setuid", "seteuid")


@dataclass(frozen=True)
class Finding:
    rule: str
    variable: VariableKey
    site: tuple[str, int]
    detail: str | tuple[int, ...]

    def to_json(self) -> dict:
        detail = list(self.detail) if isinstance(self.detail, tuple) else self.detail
        return {"rule": self.rule, "variable": self.variable.to_json(),
                "site": {"file": self.site[0], "line": self.site[1]}, "detail": detail}

    @classmethod
    def from_json(cls, data: dict) -> "Finding":
        detail = data["detail"]
        if isinstance(detail, list):
            detail = tuple(detail)
        return cls(data["rule"], VariableKey.from_json(data["variable"]),
                   (data["site"]["file"], data["site"]["line"]), detail)


def name_matches(name: str) -> bool:
    return UPR_NAME.fullmatch(name) is not None


def _condition_nodes(body: Node) -> Iterable[Node]:
    stack = [body]
    while stack:
        n = stack.pop()
        if n.type in ("if_statement", "switch_statement"):
            cond = n.child_by_field_name("condition")
            if cond is not None:
                yield cond
        stack.extend(reversed(n.named_children))


def match_syntax(fns: Iterable[FunctionAst]) -> list[Finding]:
    """Variables named like privilege data that occur in an ``if``/``switch`` condition.

    The regex is applied to each identifier and to each member-access
    expression (``userinfo.pw_uid``); the finding is reported on the base
    variable.
    """
    findings = []
    for fn in fns:
        resolve = variable_resolver(fn)
        for cond in _condition_nodes(fn.body):
            findings.extend(_syntax_in(cond, fn, resolve))
    return findings


def _syntax_in(cond: Node, fn: FunctionAst, resolve) -> list[Finding]:
    found = []
    seen = set()
    stack = [cond]
    while stack:
        n = stack.pop()
        if n.type == "call_expression":
            callee = n.child_by_field_name("function")
            if callee is not None and callee.type != "identifier":
                stack.append(callee)
            args = n.child_by_field_name("arguments")
            if args is not None:
                stack.extend(reversed(args.named_children))
            continue
        if n.type in ("identifier", "field_expression"):
            text = n.text.decode("utf-8")
            base = _base_identifier(n)
            key = resolve(base) if base else None
            m = UPR_NAME.fullmatch(text)
            if key is not None and m is not None and (n.start_byte, key) not in seen:
                seen.add((n.start_byte, key))
                found.append(Finding(SYNTAX, key, (fn.unit.path, n.start_point[0] + 1), m.group(1)))
            if n.type == "identifier":
                continue
        stack.extend(reversed(n.named_children))
    return found


def _base_identifier(node: Node) -> str | None:
    while node is not None:
        if node.type == "identifier":
            return node.text.decode("utf-8")
        if node.type in ("field_expression", "subscript_expression", "pointer_expression"):
            node = node.child_by_field_name("argument")
        elif node.type == "parenthesized_expression" and node.named_children:
            node = node.named_children[0]
        else:
            return None
    return None


def run_taint(fa: FunctionAnalysis, extra_sinks: Iterable[str] = ()) -> list[Finding]:
    """Input-derived variables that reach a ``setuid``/``seteuid`` argument.

    Sources are statements calling a function whose name is one of the
    source alternatives (whole-name match); the variables they define are
    tainted. Taint follows data edges: a statement using a tainted definition
    taints everything it defines. One finding per (variable, sink) with the
    shortest source-to-sink statement path.
    """
    sinks = set(DEFAULT_SINKS) | set(extra_sinks)
    stmts = {s.id: s for s in fa.statements}
    out_edges: dict[int, list] = {}
    for e in sorted(fa.pdg.edges, key=lambda e: e.sort_key()):
        if e.kind == DATA:
            out_edges.setdefault(e.src, []).append(e)

    def sink_vars(sid: int) -> set[VariableKey]:
        vs = set()
        for call in stmts[sid].calls:
            if call.name in sinks:
                for arg in call.args:
                    vs |= arg
        return vs

    queue = deque()
    parent: dict[tuple[int, VariableKey], tuple[int, VariableKey] | None] = {}
    for s in fa.statements:
        if any(SOURCE.fullmatch(c.name) for c in s.calls):
            for v in sorted(s.defs):
                state = (s.id, v)
                if state not in parent:
                    parent[state] = None
                    queue.append(state)

    findings: dict[tuple[VariableKey, int], Finding] = {}
    while queue:
        state = queue.popleft()
        sid, v = state
        for e in out_edges.get(sid, ()):
            if e.var != v:
                continue
            dst = stmts[e.dst]
            if v in sink_vars(dst.id) and (v, dst.id) not in findings:
                path = _path(parent, state) + (dst.id,)
                findings[(v, dst.id)] = Finding(TAINT, v, (fa.fn.unit.path, dst.span[0]), path)
            for w in sorted(dst.defs):
                nxt = (dst.id, w)
                if nxt not in parent:
                    parent[nxt] = state
                    queue.append(nxt)
    return [findings[k] for k in sorted(findings)]


def _path(parent, state) -> tuple[int, ...]:
    path = []
    while state is not None:
        if not path or path[-1] != state[0]:
            path.append(state[0])
        state = parent[state]
    return tuple(reversed(path))


@dataclass
class AbcPartition:
    set_a: set[VariableKey] = field(default_factory=set)
    set_b: set[VariableKey] = field(default_factory=set)
    set_c: set[VariableKey] = field(default_factory=set)

    def counts(self) -> tuple[int, int, int]:
        return len(self.set_a), len(self.set_b), len(self.set_c)

    def summary(self) -> str:
        a, b, c = self.counts()
        return f"set A (heuristic only): {a}  set B (score only): {b}  set C (both): {c}"

    def to_json(self) -> dict:
        return {
            "set_a": [str(k) for k in sorted(self.set_a)],
            "set_b": [str(k) for k in sorted(self.set_b)],
            "set_c": [str(k) for k in sorted(self.set_c)],
            "counts": dict(zip(("a", "b", "c"), self.counts())),
        }


def partition(score_candidates: Iterable[VariableKey],
              heuristic_findings: Iterable[Finding | VariableKey]) -> AbcPartition:
    ours = set(score_candidates)
    theirs = {f.variable if isinstance(f, Finding) else f for f in heuristic_findings}
    return AbcPartition(theirs - ours, ours - theirs, ours & theirs)
