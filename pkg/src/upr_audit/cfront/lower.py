"""Lower a function body to simple statements plus a control-flow graph.

Every simple statement (assignment, call, assertion, jump, return,
initialized declaration) becomes one node; every branch, loop or switch
condition becomes one ``condition`` node. Compound statements are flattened.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from tree_sitter import Node

from upr_audit.cfront.parse import FunctionAst, declarator_name, is_array_declarator
from upr_audit.cfront.source import normalize_whitespace
from upr_audit.keys import GLOBAL, VariableKey

ENTRY = -1
EXIT = -2

ASSIGNMENT = "assignment"
CALL = "call"
ASSERTION = "assertion"
GOTO = "goto"
RETURN = "return"
CONDITION = "condition"
DECLARATION = "declaration"
KINDS = frozenset({ASSIGNMENT, CALL, ASSERTION, GOTO, RETURN, CONDITION, DECLARATION})

# Undeclared ALL_CAPS identifiers are taken to be macro constants, not variables.
MACRO_NAME = re.compile(r"[A-Z_][A-Z0-9_]*")

_INERT = frozenset({
    "string_literal", "concatenated_string", "char_literal", "number_literal",
    "true", "false", "null", "comment", "primitive_type", "field_identifier",
    "statement_identifier", "type_identifier", "sized_type_specifier",
    "escape_sequence", "string_content",
})


class LoweringError(Exception):
    def __init__(self, message: str, function: str, line: int | None = None):
        super().__init__(message)
        self.function = function
        self.line = line

    def __str__(self) -> str:
        at = f" (line {self.line})" if self.line else ""
        return f"{self.function}: {self.args[0]}{at}"


@dataclass(frozen=True)
class Call:
    """A call site inside a statement. ``name`` is empty for indirect calls."""

    name: str
    args: tuple[frozenset[VariableKey], ...]


@dataclass(frozen=True)
class Statement:
    id: int
    kind: str
    text: str
    norm_text: str
    defs: frozenset[VariableKey]
    uses: frozenset[VariableKey]
    span: tuple[int, int]
    function: str = ""
    weak_defs: frozenset[VariableKey] = frozenset()
    calls: tuple[Call, ...] = ()
    governor: int | None = None

    @property
    def strong_defs(self) -> frozenset[VariableKey]:
        return self.defs - self.weak_defs

    @property
    def refs(self) -> frozenset[VariableKey]:
        return self.defs | self.uses

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "text": self.text,
            "defs": [k.to_json() for k in sorted(self.defs)],
            "uses": [k.to_json() for k in sorted(self.uses)],
            "span": list(self.span),
        }


@dataclass(frozen=True)
class Cfg:
    nodes: tuple[int, ...]
    edges: frozenset[tuple[int, int]]

    def successors(self, node: int) -> list[int]:
        return sorted(d for s, d in self.edges if s == node)

    def predecessors(self, node: int) -> list[int]:
        return sorted(s for s, d in self.edges if d == node)


@dataclass
class LoweredFunction:
    function: FunctionAst
    statements: list[Statement]
    cfg: Cfg
    declared: frozenset[VariableKey]

    @property
    def name(self) -> str:
        return self.function.name

    def __iter__(self):
        # lets callers write `stmts, cfg = lower_to_statements(fn)`
        return iter((self.statements, self.cfg))


class _Anchor:
    """A not-yet-known CFG target, bound to the next node emitted on its path."""

    __slots__ = ("target",)

    def __init__(self):
        self.target: int | _Anchor | None = None


class _GovRef:
    __slots__ = ("id",)

    def __init__(self, id: int | None = None):
        self.id = id


@dataclass
class _Effects:
    defs: set = field(default_factory=set)
    strong: set = field(default_factory=set)
    uses: set = field(default_factory=set)
    calls: list = field(default_factory=list)


@dataclass
class _Draft:
    kind: str
    text: str
    span: tuple[int, int]
    effects: _Effects
    governor: _GovRef | None


def normalize_statement(text: str) -> str:
    return normalize_whitespace(text)


def lower_to_statements(fn: FunctionAst) -> LoweredFunction:
    """Lower ``fn``; the result unpacks as ``(statements, cfg)``."""
    return _Lowerer(fn).run()


def extract_variables(lowered: LoweredFunction) -> set[VariableKey]:
    """Every variable the function refers to or declares.

    Globals carry the GLOBAL function slot; function names, labels, type
    names, field selectors and literals never appear.
    """
    keys: set[VariableKey] = set(lowered.declared)
    for s in lowered.statements:
        keys |= s.defs | s.uses
    return keys


def variable_resolver(fn: FunctionAst):
    """Callable mapping an identifier used in ``fn`` to its VariableKey (or None)."""
    return _Lowerer(fn).resolve


class _Lowerer:
    def __init__(self, fn: FunctionAst):
        self.fn = fn
        self.scope = fn.scope
        self.drafts: list[_Draft] = []
        self.edges: list[tuple[int, object]] = []
        self.labels: dict[str, _Anchor] = {}
        self.gotos: list[tuple[int, str, int]] = []
        self.govs: list[_GovRef] = []
        self.breaks: list[list[int]] = []
        self.continues: list[object] = []
        self.locals: set[str] = {name for name, _ in fn.params}
        self.arrays: set[str] = set(fn.array_params)
        self._collect_locals(fn.body)
        self.array_names = self.arrays | {n for n in self.scope.arrays if n not in self.locals}

    # -- scope ---------------------------------------------------------------

    def _collect_locals(self, node: Node) -> None:
        stack = [node]
        while stack:
            n = stack.pop()
            if n.type == "declaration":
                for d in n.children_by_field_name("declarator"):
                    name = declarator_name(d)
                    if name:
                        self.locals.add(name)
                        if is_array_declarator(d):
                            self.arrays.add(name)
            stack.extend(n.named_children)

    def resolve(self, name: str) -> VariableKey | None:
        if name in self.locals:
            return VariableKey(self.fn.name, name)
        if name in self.scope.functions or name in self.scope.typedefs:
            return None
        if name in self.scope.variables:
            return VariableKey(GLOBAL, name)
        if MACRO_NAME.fullmatch(name):
            return None
        return VariableKey(GLOBAL, name)

    @property
    def declared(self) -> frozenset[VariableKey]:
        keys = {VariableKey(self.fn.name, n) for n in self.locals}
        return frozenset(keys)

    # -- driver --------------------------------------------------------------

    def run(self) -> LoweredFunction:
        preds = self.stmt(self.fn.body, [ENTRY])
        self._link(preds, EXIT)
        for src, label, line in self.gotos:
            if label not in self.labels:
                raise LoweringError(f"goto targets missing label {label!r}", self.fn.name, line)
            self.edges.append((src, self.labels[label]))
        edges = {(src, _resolve(dst)) for src, dst in self.edges}
        return self._finish(edges)

    def _finish(self, edges: set[tuple[int, int]]) -> LoweredFunction:
        succ: dict[int, list[int]] = {}
        for s, d in edges:
            succ.setdefault(s, []).append(d)
        seen = {ENTRY}
        stack = [ENTRY]
        while stack:
            for d in succ.get(stack.pop(), ()):
                if d not in seen:
                    seen.add(d)
                    stack.append(d)
        # unreachable statements are dropped; survivors are renumbered in source order
        keep = [i for i in range(len(self.drafts)) if i in seen]
        renum = {old: new for new, old in enumerate(keep)}
        renum[ENTRY] = ENTRY
        renum[EXIT] = EXIT

        parent_gov: dict[int, _GovRef | None] = {}
        for i, d in enumerate(self.drafts):
            parent_gov[i] = d.governor

        statements = []
        for old in keep:
            d = self.drafts[old]
            gov = d.governor
            while gov is not None and gov.id not in renum:
                gov = parent_gov.get(gov.id)
            e = d.effects
            statements.append(Statement(
                id=renum[old],
                kind=d.kind,
                text=d.text,
                norm_text=normalize_statement(d.text),
                defs=frozenset(e.defs),
                uses=frozenset(e.uses),
                span=d.span,
                function=self.fn.name,
                weak_defs=frozenset(e.defs - e.strong),
                calls=tuple(e.calls),
                governor=renum[gov.id] if gov is not None else None,
            ))
        cfg_edges = frozenset(
            (renum[s], renum[d]) for s, d in edges if s in renum and d in renum and s in seen)
        nodes = (ENTRY, *range(len(statements)), EXIT)
        return LoweredFunction(self.fn, statements, Cfg(nodes, cfg_edges), self.declared)

    # -- graph helpers -------------------------------------------------------

    def _link(self, preds, target) -> None:
        for p in preds:
            if isinstance(p, _Anchor):
                if p.target is None:
                    p.target = target
            else:
                self.edges.append((p, target))

    def emit(self, kind: str, start: Node, end: Node, effects: _Effects, preds) -> int:
        sid = len(self.drafts)
        text = self.fn.unit.data[start.start_byte:end.end_byte].decode("utf-8")
        span = (start.start_point[0] + 1, end.end_point[0] + 1)
        self.drafts.append(_Draft(kind, text, span, effects, self.govs[-1] if self.govs else None))
        self._link(preds, sid)
        return sid

    def condition(self, header: Node, cond: Node | None, preds, end: Node | None = None) -> int:
        eff = _Effects()
        if cond is not None:
            self.expr(cond, eff)
        return self.emit(CONDITION, header, end or cond, eff, preds)

    # -- statements ----------------------------------------------------------

    def stmt(self, node: Node, preds: list) -> list:
        t = node.type
        handler = getattr(self, "_s_" + t, None)
        if handler is not None:
            return handler(node, preds)
        if t in ("comment", "type_definition", "struct_specifier", "union_specifier",
                 "enum_specifier", ";"):
            return preds
        raise LoweringError(f"unsupported statement {t}", self.fn.name, node.start_point[0] + 1)

    def _s_compound_statement(self, node, preds):
        for child in node.named_children:
            preds = self.stmt(child, preds)
        return preds

    def _s_attributed_statement(self, node, preds):
        for child in node.named_children:
            if child.type != "attribute_declaration":
                preds = self.stmt(child, preds)
        return preds

    def _s_expression_statement(self, node, preds):
        expr = next((c for c in node.named_children if c.type != "comment"), None)
        if expr is None:
            return preds
        eff = _Effects()
        self.expr(expr, eff)
        return [self.emit(_expression_kind(expr), node, node, eff, preds)]

    def _s_declaration(self, node, preds):
        eff = _Effects()
        initialized = False
        for d in node.children_by_field_name("declarator"):
            if d.type != "init_declarator":
                continue
            initialized = True
            key = self.resolve(declarator_name(d) or "")
            if key is not None:
                eff.defs.add(key)
                eff.strong.add(key)
            self._declarator_uses(d.child_by_field_name("declarator"), eff)
            self.expr(d.child_by_field_name("value"), eff)
        if not initialized:
            return preds
        return [self.emit(DECLARATION, node, node, eff, preds)]

    def _declarator_uses(self, d: Node | None, eff: _Effects) -> None:
        # array sizes in declarators, e.g. `char buf[len + 1] = ...`
        while d is not None:
            if d.type == "array_declarator":
                size = d.child_by_field_name("size")
                if size is not None:
                    self.expr(size, eff)
            d = d.child_by_field_name("declarator")

    def _s_if_statement(self, node, preds):
        cond = node.child_by_field_name("condition")
        c = self.condition(node, cond, preds)
        self.govs.append(_GovRef(c))
        out = self.stmt(node.child_by_field_name("consequence"), [c])
        alt = node.child_by_field_name("alternative")
        if alt is not None:
            body = alt.named_children[-1] if alt.type == "else_clause" else alt
            out = out + self.stmt(body, [c])
        else:
            out = out + [c]
        self.govs.pop()
        return out

    def _s_while_statement(self, node, preds):
        c = self.condition(node, node.child_by_field_name("condition"), preds)
        self.govs.append(_GovRef(c))
        self.breaks.append([])
        self.continues.append(c)
        body_out = self.stmt(node.child_by_field_name("body"), [c])
        self._link(body_out, c)
        self.continues.pop()
        exits = self.breaks.pop()
        self.govs.pop()
        return [c] + exits

    def _s_do_statement(self, node, preds):
        head, cont, gov = _Anchor(), _Anchor(), _GovRef()
        self.govs.append(gov)
        self.breaks.append([])
        self.continues.append(cont)
        body_out = self.stmt(node.child_by_field_name("body"), preds + [head])
        self.continues.pop()
        exits = self.breaks.pop()
        self.govs.pop()
        keyword = next(c for c in node.children if c.type == "while")
        c = self.condition(keyword, node.child_by_field_name("condition"), body_out + [cont])
        gov.id = c
        self.edges.append((c, head))
        return [c] + exits

    def _s_for_statement(self, node, preds):
        init = node.child_by_field_name("initializer")
        if init is not None:
            if init.type == "declaration":
                preds = self._s_declaration(init, preds)
            else:
                eff = _Effects()
                self.expr(init, eff)
                preds = [self.emit(_expression_kind(init), init, init, eff, preds)]
        cond = node.child_by_field_name("condition")
        if cond is not None:
            c = self.condition(cond, cond, preds)
        else:
            close = next(ch for ch in node.children if ch.type == ")")
            c = self.condition(node, None, preds, end=close)
        self.govs.append(_GovRef(c))
        self.breaks.append([])
        cont = _Anchor()
        self.continues.append(cont)
        out = self.stmt(node.child_by_field_name("body"), [c]) + [cont]
        self.continues.pop()
        update = node.child_by_field_name("update")
        if update is not None:
            eff = _Effects()
            self.expr(update, eff)
            out = [self.emit(_expression_kind(update), update, update, eff, out)]
        self.govs.pop()
        self._link(out, c)
        return [c] + self.breaks.pop()

    def _s_switch_statement(self, node, preds):
        s = self.condition(node, node.child_by_field_name("condition"), preds)
        self.govs.append(_GovRef(s))
        self.breaks.append([])
        body = node.child_by_field_name("body")
        out: list = []
        has_default = False
        for child in body.named_children:
            if child.type == "case_statement":
                has_default |= child.child_by_field_name("value") is None
                out = out + [s]
                for i, sub in enumerate(child.children):
                    if sub.is_named and child.field_name_for_child(i) != "value":
                        out = self.stmt(sub, out)
            else:
                out = self.stmt(child, out)
        exits = self.breaks.pop()
        self.govs.pop()
        return out + exits + ([] if has_default else [s])

    def _s_case_statement(self, node, preds):
        raise LoweringError("case label outside switch", self.fn.name, node.start_point[0] + 1)

    def _s_return_statement(self, node, preds):
        eff = _Effects()
        for child in node.named_children:
            self.expr(child, eff)
        r = self.emit(RETURN, node, node, eff, preds)
        self.edges.append((r, EXIT))
        return []

    def _s_break_statement(self, node, preds):
        if not self.breaks:
            raise LoweringError("break outside loop or switch", self.fn.name, node.start_point[0] + 1)
        b = self.emit(GOTO, node, node, _Effects(), preds)
        self.breaks[-1].append(b)
        return []

    def _s_continue_statement(self, node, preds):
        if not self.continues:
            raise LoweringError("continue outside loop", self.fn.name, node.start_point[0] + 1)
        k = self.emit(GOTO, node, node, _Effects(), preds)
        self.edges.append((k, self.continues[-1]))
        return []

    def _s_goto_statement(self, node, preds):
        g = self.emit(GOTO, node, node, _Effects(), preds)
        label = node.child_by_field_name("label").text.decode("utf-8")
        self.gotos.append((g, label, node.start_point[0] + 1))
        return []

    def _s_labeled_statement(self, node, preds):
        label = node.child_by_field_name("label").text.decode("utf-8")
        if label in self.labels:
            raise LoweringError(f"duplicate label {label!r}", self.fn.name, node.start_point[0] + 1)
        anchor = self.labels[label] = _Anchor()
        preds = preds + [anchor]
        for i, child in enumerate(node.children):
            if child.is_named and node.field_name_for_child(i) != "label":
                preds = self.stmt(child, preds)
        return preds

    # -- expressions ---------------------------------------------------------

    def expr(self, node: Node | None, eff: _Effects) -> None:
        """Record what evaluating ``node`` reads (and writes, via side effects)."""
        if node is None:
            return
        t = node.type
        if t == "identifier":
            key = self.resolve(node.text.decode("utf-8"))
            if key is not None:
                eff.uses.add(key)
        elif t in _INERT:
            return
        elif t == "assignment_expression":
            op = node.child_by_field_name("operator")
            compound = op is not None and op.type != "="
            self.write(node.child_by_field_name("left"), eff, compound)
            self.expr(node.child_by_field_name("right"), eff)
        elif t == "update_expression":
            self.write(node.child_by_field_name("argument"), eff, True)
        elif t == "call_expression":
            self._call(node, eff)
        elif t == "pointer_expression":
            arg = node.child_by_field_name("argument")
            self.expr(arg, eff)
            if node.children[0].type == "*":
                pseudo, _ = self._deref_key(arg)
                if pseudo is not None:
                    eff.uses.add(pseudo)
        elif t == "field_expression":
            self.expr(node.child_by_field_name("argument"), eff)
        elif t == "type_descriptor":
            # `sizeof(x)` may parse as a type when x is an identifier
            if node.named_child_count == 1 and node.named_children[0].type == "type_identifier":
                name = node.named_children[0].text.decode("utf-8")
                if name in self.locals or name in self.scope.variables:
                    eff.uses.add(self.resolve(name))
        elif t == "cast_expression":
            self.expr(node.child_by_field_name("value"), eff)
        else:
            for child in node.named_children:
                self.expr(child, eff)

    def write(self, target: Node | None, eff: _Effects, compound: bool, weak: bool = False) -> None:
        if target is None:
            return
        t = target.type
        if t == "identifier":
            key = self.resolve(target.text.decode("utf-8"))
            if key is None:
                return
            eff.defs.add(key)
            if not weak:
                eff.strong.add(key)
            if compound:
                eff.uses.add(key)
        elif t == "parenthesized_expression":
            for child in target.named_children:
                self.write(child, eff, compound, weak)
        elif t == "cast_expression":
            self.write(target.child_by_field_name("value"), eff, compound, weak)
        elif t == "subscript_expression":
            self.expr(target.child_by_field_name("index"), eff)
            self.write(target.child_by_field_name("argument"), eff, compound, True)
        elif t == "field_expression":
            arg = target.child_by_field_name("argument")
            if target.child_by_field_name("operator").type == "->":
                self.expr(arg, eff)
            self.write(arg, eff, compound, True)
        elif t == "pointer_expression" and target.children[0].type == "*":
            arg = target.child_by_field_name("argument")
            self.expr(arg, eff)
            pseudo, exact = self._deref_key(arg)
            if pseudo is None:
                return
            eff.defs.add(pseudo)
            if exact and not weak:
                eff.strong.add(pseudo)
            if compound:
                eff.uses.add(pseudo)
        else:
            self.expr(target, eff)

    def _deref_key(self, node: Node | None) -> tuple[VariableKey | None, bool]:
        """Pseudo-variable ``*p`` for a dereference; ``exact`` is False for ``*(p + i)`` etc."""
        exact = True
        while node is not None:
            t = node.type
            if t == "identifier":
                key = self.resolve(node.text.decode("utf-8"))
                if key is None:
                    return None, False
                return VariableKey(key.function, "*" + key.name), exact
            if t == "parenthesized_expression":
                node = node.named_children[0] if node.named_children else None
                continue
            exact = False
            if t == "cast_expression":
                node = node.child_by_field_name("value")
            elif t in ("binary_expression",):
                node = node.child_by_field_name("left")
            elif t in ("subscript_expression", "field_expression", "pointer_expression",
                       "update_expression"):
                node = node.child_by_field_name("argument")
            else:
                return None, False
        return None, False

    def _call(self, node: Node, eff: _Effects) -> None:
        callee = node.child_by_field_name("function")
        name = ""
        if callee.type == "identifier":
            name = callee.text.decode("utf-8")
            if name in self.locals or name in self.scope.variables:
                self.expr(callee, eff)  # call through a function-pointer variable
        else:
            self.expr(callee, eff)
        per_arg = []
        args = node.child_by_field_name("arguments")
        for a in args.named_children if args is not None else ():
            if a.type == "comment":
                continue
            sub = _Effects()
            inner = _strip(a)
            if inner.type == "pointer_expression" and inner.children[0].type == "&":
                # out-parameter: the callee may write through &x
                self.write(inner.child_by_field_name("argument"), sub, True)
            elif inner.type == "identifier" and inner.text.decode("utf-8") in self.array_names:
                # an array argument decays to &a[0]
                self.write(inner, sub, True, weak=True)
            else:
                self.expr(a, sub)
            eff.defs |= sub.defs
            eff.strong |= sub.strong
            eff.uses |= sub.uses
            eff.calls.extend(sub.calls)
            per_arg.append(frozenset(sub.uses | sub.defs))
        eff.calls.append(Call(name, tuple(per_arg)))


def _strip(node: Node) -> Node:
    while node.type in ("parenthesized_expression", "cast_expression"):
        inner = node.child_by_field_name("value") if node.type == "cast_expression" \
            else (node.named_children[0] if node.named_children else None)
        if inner is None:
            break
        node = inner
    return node


def _expression_kind(expr: Node) -> str:
    top = _strip(expr)
    if top.type == "call_expression":
        callee = top.child_by_field_name("function")
        if callee.type == "identifier" and callee.text in (b"assert", b"static_assert"):
            return ASSERTION
        return CALL
    if top.type in ("assignment_expression", "update_expression"):
        return ASSIGNMENT
    if _contains(top, ("assignment_expression", "update_expression")):
        return ASSIGNMENT
    if _contains(top, ("call_expression",)):
        return CALL
    return ASSIGNMENT


def _contains(node: Node, types: tuple[str, ...]) -> bool:
    stack = [node]
    while stack:
        n = stack.pop()
        if n.type in types:
            return True
        stack.extend(n.named_children)
    return False


def _resolve(target) -> int:
    seen = 0
    while isinstance(target, _Anchor):
        target = target.target
        seen += 1
        if target is None or seen > 10_000:
            return EXIT
    return target
