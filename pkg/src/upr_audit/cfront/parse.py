"""C frontend: tree-sitter parse plus per-function fault isolation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import tree_sitter_c
from tree_sitter import Language, Node, Parser, Tree

from upr_audit.cfront.source import SourceUnit, normalize_whitespace

logger = logging.getLogger(__name__)

# Constructs tree-sitter accepts but the lowering does not model.
UNSUPPORTED_NODES = frozenset({
    "gnu_asm_expression",
    "seh_try_statement",
    "seh_leave_statement",
    "function_definition",  # nested (GNU) functions; top level is handled separately
})


class CSyntaxError(SyntaxError):
    """Malformed or unsupported C inside one function (or at file scope)."""

    def __init__(self, message: str, path: str, line: int, column: int, function: str | None = None):
        super().__init__(message, (path, line, column, None))
        self.path = path
        self.line = line
        self.column = column
        self.function = function

    def __str__(self) -> str:
        where = f" in function {self.function}" if self.function else ""
        return f"{self.path}:{self.line}:{self.column}: {self.msg}{where}"

    def to_json(self) -> dict:
        return {"path": self.path, "line": self.line, "column": self.column,
                "function": self.function, "message": self.msg}


@dataclass
class FileScope:
    """Names declared at file scope; used to classify identifiers in function bodies."""

    variables: set[str] = field(default_factory=set)
    arrays: set[str] = field(default_factory=set)
    functions: set[str] = field(default_factory=set)
    typedefs: set[str] = field(default_factory=set)


@dataclass(eq=False)
class FunctionAst:
    name: str
    params: list[tuple[str, str]]
    body: Node
    span: tuple[int, int]
    node: Node
    unit: SourceUnit
    scope: FileScope
    array_params: frozenset[str] = frozenset()

    def text_of(self, node: Node) -> str:
        return node.text.decode("utf-8")


@dataclass
class ParsedUnit:
    unit: SourceUnit
    tree: Tree
    functions: list[FunctionAst]
    errors: list[CSyntaxError]
    scope: FileScope


@lru_cache(maxsize=1)
def _parser() -> Parser:
    return Parser(Language(tree_sitter_c.language()))


def parse_tree(unit: SourceUnit) -> Tree:
    return _parser().parse(unit.blanked())


def parse_unit(unit: SourceUnit) -> ParsedUnit:
    """Parse one file into function ASTs in source order.

    A function containing a syntax error or an unsupported construct is
    dropped and reported in ``errors``; the remaining functions still parse.
    """
    tree = parse_tree(unit)
    scope = FileScope()
    functions: list[FunctionAst] = []
    errors: list[CSyntaxError] = []

    for top in tree.root_node.named_children:
        if top.type == "declaration":
            _collect_file_declaration(top, scope)
        elif top.type == "type_definition":
            for decl in top.children_by_field_name("declarator"):
                name = declarator_name(decl)
                if name:
                    scope.typedefs.add(name)
        elif top.type == "function_definition":
            name = function_name(top)
            if name:
                scope.functions.add(name)

    for top in tree.root_node.named_children:
        if top.type == "function_definition":
            name = function_name(top) or "<anonymous>"
            bad = _first_problem(top)
            if bad is not None:
                errors.append(_error_at(unit, bad, name))
                continue
            try:
                functions.append(_build_function(top, name, unit, scope))
            except CSyntaxError as exc:
                errors.append(exc)
        elif top.type == "ERROR" or (top.has_error and top.type != "comment"):
            bad = _first_problem(top) or top
            errors.append(_error_at(unit, bad, _guess_name(top)))

    for err in errors:
        logger.warning("skipping: %s", err)
    return ParsedUnit(unit, tree, functions, errors, scope)


def _collect_file_declaration(decl: Node, scope: FileScope) -> None:
    for d in decl.children_by_field_name("declarator"):
        if _find_function_declarator(d) is not None:
            name = declarator_name(d)
            if name:
                scope.functions.add(name)
            continue
        name = declarator_name(d)
        if not name:
            continue
        scope.variables.add(name)
        if is_array_declarator(d):
            scope.arrays.add(name)


def _build_function(node: Node, name: str, unit: SourceUnit, scope: FileScope) -> FunctionAst:
    fdecl = _find_function_declarator(node.child_by_field_name("declarator"))
    params: list[tuple[str, str]] = []
    arrays = set()
    plist = fdecl.child_by_field_name("parameters") if fdecl is not None else None
    for p in plist.named_children if plist is not None else ():
        if p.type != "parameter_declaration":
            continue
        d = p.child_by_field_name("declarator")
        pname = declarator_name(d) if d is not None else None
        if not pname:
            continue  # `void` or an unnamed prototype-style parameter
        if any(pname == existing for existing, _ in params):
            raise _error_at(unit, d, name, f"duplicate parameter {pname!r}")
        params.append((pname, _type_text(p, pname)))
        if is_array_declarator(d):
            arrays.add(pname)
    body = node.child_by_field_name("body")
    span = (node.start_point[0] + 1, node.end_point[0] + 1)
    return FunctionAst(name, params, body, span, node, unit, scope, frozenset(arrays))


def _type_text(param: Node, pname: str) -> str:
    text = param.text.decode("utf-8")
    head, _, tail = text.rpartition(pname)
    return normalize_whitespace(head + tail)


def _find_function_declarator(node: Node | None) -> Node | None:
    while node is not None:
        if node.type == "function_declarator":
            return node
        if node.type in ("pointer_declarator", "parenthesized_declarator", "attributed_declarator"):
            node = node.child_by_field_name("declarator") or (
                node.named_children[0] if node.named_children else None)
            continue
        return None
    return None


def function_name(node: Node) -> str | None:
    fdecl = _find_function_declarator(node.child_by_field_name("declarator"))
    if fdecl is None:
        return None
    return declarator_name(fdecl.child_by_field_name("declarator"))


def declarator_name(node: Node | None) -> str | None:
    """Identifier introduced by a (possibly nested) declarator."""
    while node is not None:
        if node.type in ("identifier", "field_identifier", "type_identifier"):
            return node.text.decode("utf-8")
        inner = node.child_by_field_name("declarator")
        if inner is None and node.type == "parenthesized_declarator" and node.named_children:
            inner = node.named_children[0]
        node = inner
    return None


def is_array_declarator(node: Node | None) -> bool:
    while node is not None:
        if node.type == "array_declarator":
            return True
        if node.type == "pointer_declarator":
            return False
        node = node.child_by_field_name("declarator")
    return False


def _first_problem(node: Node) -> Node | None:
    stack = [node]
    while stack:
        n = stack.pop()
        if n.type == "ERROR" or n.is_missing:
            return n
        if n is not node and n.type in UNSUPPORTED_NODES:
            return n
        if n.type == "compound_statement" and n.parent is not None \
                and n.parent.type == "parenthesized_expression":
            return n  # GNU statement expression
        if n.has_error or n.child_count:
            stack.extend(reversed(n.children))
    return None


def _error_at(unit: SourceUnit, node: Node, function: str | None, message: str | None = None) -> CSyntaxError:
    line, col = node.start_point
    if message is None:
        if node.is_missing:
            message = f"missing {node.type!r}"
        elif node.type == "ERROR":
            snippet = node.text.decode("utf-8", "replace").strip()[:30]
            message = f"unexpected {snippet!r}" if snippet else "syntax error"
        else:
            message = f"unsupported construct {node.type}"
    return CSyntaxError(message, unit.path, line + 1, col + 1, function)


def _guess_name(node: Node) -> str | None:
    for n in node.named_children:
        if n.type == "function_declarator":
            return declarator_name(n.child_by_field_name("declarator"))
    return None
