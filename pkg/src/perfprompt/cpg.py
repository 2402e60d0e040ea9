"""Simplified code property graph for single-file competitive-programming C++.

The graph keeps three layers: syntax containment, a lexical call graph, and
def-use links between declarations and identifier uses.  Parsing is delegated
to tree-sitter; everything above the concrete syntax tree is built here.

Loose statements outside any function (snippets such as
``cin >> x >> y;`` on its own) are attributed to a synthetic ``<toplevel>``
method so that every call site and identifier use has an enclosing method.
"""
from __future__ import annotations

import json
import re
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, TextIO

import tree_sitter_cpp
from tree_sitter import Language, Node, Parser

from perfprompt.errors import ParseError, UnknownIdentifier, UnknownMethod

TOPLEVEL = "<toplevel>"
_WRAPPER_NAME = "__perfprompt_toplevel__"
_WRAPPER_HEAD = f"void {_WRAPPER_NAME}() {{ "
STREAM_OBJECTS = frozenset({"cin", "cout"})
MUTATING_MEMBERS = frozenset(
    {
        "push_back", "emplace_back", "push_front", "emplace_front", "pop_back",
        "pop_front", "push", "pop", "emplace", "insert", "erase", "clear",
        "resize", "reserve", "assign", "swap", "append", "shrink_to_fit",
        "splice", "merge", "sort", "reverse", "unique", "remove", "remove_if",
        "fill", "set", "reset", "flip",
    }
)
LOOP_TYPES = {"for_statement": "for", "for_range_loop": "for", "while_statement": "while", "do_statement": "do"}
_SKIP_TYPES = frozenset(
    {
        "primitive_type", "type_identifier", "sized_type_specifier", "template_type",
        "type_descriptor", "template_argument_list", "string_literal", "raw_string_literal",
        "char_literal", "number_literal", "true", "false", "null", "nullptr", "this",
        "field_identifier", "namespace_identifier", "comment", "concatenated_string",
        "storage_class_specifier", "type_qualifier", "placeholder_type_specifier",
        "auto", "primitive_type", "struct_specifier", "class_specifier", "enum_specifier",
        "union_specifier", "attribute_declaration", "virtual", "explicit_function_specifier",
        "access_specifier", "operator_name", "destructor_name", "template_parameter_list",
    }
)
_STATEMENT_TYPES = frozenset(
    {
        "expression_statement", "declaration", "return_statement", "if_statement",
        "for_statement", "for_range_loop", "while_statement", "do_statement",
        "switch_statement", "case_statement", "compound_statement", "break_statement",
        "continue_statement", "goto_statement", "labeled_statement", "try_statement",
        "throw_statement", "alias_declaration", "type_definition", "using_declaration",
        "static_assert_declaration",
    }
)


@lru_cache(maxsize=1)
def _parser() -> Parser:
    return Parser(Language(tree_sitter_cpp.language()))


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SourceUnit:
    text: str
    path: str | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("source text is empty")

    @property
    def line_count(self) -> int:
        return max(1, len(self.text.splitlines()))

    @classmethod
    def from_file(cls, path: str | Path) -> SourceUnit:
        return cls(Path(path).read_text(encoding="utf-8"), str(path))

    @classmethod
    def from_stream(cls, stream: TextIO, path: str | None = "<stdin>") -> SourceUnit:
        return cls(stream.read(), path)


@dataclass(frozen=True, order=True)
class LineSpan:
    start_line: int
    end_line: int

    def __post_init__(self) -> None:
        if self.start_line < 1 or self.end_line < self.start_line:
            raise ValueError(f"invalid span {self.start_line}..{self.end_line}")

    def contains(self, other: LineSpan) -> bool:
        return self.start_line <= other.start_line and other.end_line <= self.end_line

    def __str__(self) -> str:
        return f"{self.start_line}--{self.end_line}"


@dataclass(frozen=True)
class MethodNode:
    id: str
    name: str
    span: LineSpan
    params: tuple[str, ...] = ()
    by_reference: tuple[bool, ...] = ()
    synthetic: bool = False


@dataclass(frozen=True)
class CallSite:
    """A call or stream-operator site.

    ``kind`` is ``"function"``, ``"member"`` (``v.push_back(x)``) or
    ``"stream"`` (a ``cin >>`` / ``cout <<`` chain, one per statement).
    ``arg_identifiers`` holds the identifier names used in each argument; a
    member call's receiver is reported separately in ``receiver``.
    """

    id: str
    name: str
    qualified_name: str
    caller: str
    callee: str | None
    span: LineSpan
    kind: str = "function"
    receiver: str | None = None
    args: tuple[str, ...] = ()
    arg_identifiers: tuple[frozenset[str], ...] = ()

    @property
    def resolved(self) -> bool:
        return self.callee is not None


@dataclass(frozen=True)
class IdentifierUse:
    id: str
    name: str
    kind: str  # "read" | "write"
    directness: str  # "direct" | "indirect"
    enclosing_method: str
    span: LineSpan
    decl: str | None = None
    initializer: bool = False


@dataclass(frozen=True)
class Declaration:
    id: str
    name: str
    type_text: str
    span: LineSpan
    scope: str  # "file" | "local" | "param"
    method: str | None = None
    static: bool = False


@dataclass(frozen=True)
class Statement:
    """Def-use summary of one statement directly inside a loop body."""

    span: LineSpan
    reads: frozenset[str]
    writes: frozenset[str]
    declares: frozenset[str]
    calls: tuple[str, ...]


@dataclass(frozen=True)
class LoopScope:
    id: str
    kind: str
    span: LineSpan
    method: str
    parent: str | None
    calls: tuple[str, ...]
    mutated: frozenset[str]
    body: tuple[Statement, ...] = ()


@dataclass(frozen=True)
class ContainerOp:
    var: str
    operation: str
    span: LineSpan
    method: str
    decl: str | None


@dataclass(frozen=True)
class Edge:
    kind: str  # "contains" | "call" | "def_use"
    src: str
    dst: str


@dataclass(frozen=True)
class SkippedRegion:
    line: int
    column: int
    reason: str


@dataclass(frozen=True)
class CodePropertyGraph:
    line_count: int
    methods: tuple[MethodNode, ...]
    calls: tuple[CallSite, ...]
    identifiers: tuple[IdentifierUse, ...]
    loops: tuple[LoopScope, ...]
    declarations: tuple[Declaration, ...]
    container_ops: tuple[ContainerOp, ...]
    edges: tuple[Edge, ...]
    warnings: tuple[SkippedRegion, ...] = ()
    path: str | None = None
    _method_index: dict = field(default=None, compare=False, repr=False, hash=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_method_index", {m.id: m for m in self.methods})

    def method(self, ref: MethodNode | str) -> MethodNode:
        """Resolve a method by node, id, or (first matching) name."""
        if isinstance(ref, MethodNode):
            ref = ref.id
        if ref in self._method_index:
            return self._method_index[ref]
        for m in self.methods:
            if m.name == ref:
                return m
        raise UnknownMethod(ref)

    def declaration(self, decl_id: str) -> Declaration:
        for d in self.declarations:
            if d.id == decl_id:
                return d
        raise KeyError(decl_id)

    def uses_in(self, method: MethodNode | str) -> Iterator[IdentifierUse]:
        mid = self.method(method).id
        return (u for u in self.identifiers if u.enclosing_method == mid)


# --------------------------------------------------------------------------
# Queries
# --------------------------------------------------------------------------


def self_call_methods(g: CodePropertyGraph) -> frozenset[MethodNode]:
    """Methods containing at least one call that resolves to themselves."""
    ids = {c.caller for c in g.calls if c.callee is not None and c.callee == c.caller}
    return frozenset(m for m in g.methods if m.id in ids)


def indirect_reads(g: CodePropertyGraph, f: MethodNode | str) -> frozenset[str]:
    return frozenset(u.name for u in g.uses_in(f) if u.kind == "read" and u.directness == "indirect")


def indirect_writes(g: CodePropertyGraph, f: MethodNode | str) -> frozenset[str]:
    return frozenset(u.name for u in g.uses_in(f) if u.kind == "write" and u.directness == "indirect")


def declares(g: CodePropertyGraph, f: MethodNode | str, name: str) -> bool:
    """True iff the body of ``f`` (parameters excluded) declares ``name``."""
    mid = g.method(f).id
    return any(d.method == mid and d.scope == "local" and d.name == name for d in g.declarations)


def call_sites(g: CodePropertyGraph, name_filter: Iterable[str] = ()) -> list[CallSite]:
    names = set(name_filter)
    if not names:
        return list(g.calls)
    return [c for c in g.calls if c.name in names or c.qualified_name in names]


def loop_scopes(g: CodePropertyGraph) -> list[LoopScope]:
    return list(g.loops)


def container_operations(g: CodePropertyGraph, var: str) -> list[tuple[str, LineSpan]]:
    if not any(d.name == var for d in g.declarations):
        raise UnknownIdentifier(var)
    return [(op.operation, op.span) for op in g.container_ops if op.var == var]


# --------------------------------------------------------------------------
# Builder
# --------------------------------------------------------------------------


def _line(node: Node) -> int:
    return node.start_point[0] + 1


def _end_line(node: Node) -> int:
    row, col = node.end_point
    # a node ending at column 0 finished on the previous line's newline
    if col == 0 and row > node.start_point[0]:
        return row
    return row + 1


def _text(node: Node) -> str:
    return node.text.decode("utf-8", errors="replace")


def _leaf_name(node: Node | None) -> str | None:
    """Simple name of an identifier-like node (``std::sort`` -> ``sort``)."""
    while node is not None:
        if node.type in ("identifier", "field_identifier", "type_identifier", "namespace_identifier"):
            return _text(node)
        if node.type == "qualified_identifier":
            node = node.child_by_field_name("name")
        elif node.type == "template_function":
            node = node.child_by_field_name("name")
        elif node.type in ("destructor_name", "operator_name"):
            return _text(node)
        else:
            return None
    return None


@dataclass
class _Ctx:
    method: str
    loops: tuple[str, ...] = ()
    stmt: int | None = None
    collectors: tuple[dict, ...] = ()


class _Builder:
    def __init__(self, src: SourceUnit, strict: bool) -> None:
        self.src = src
        self.strict = strict
        self.line_count = src.line_count
        self.methods: list[dict] = []
        self.calls: list[dict] = []
        self.uses: list[dict] = []
        self.loops: list[dict] = []
        self.decls: list[dict] = []
        self.container_ops: list[dict] = []
        self.edges: list[Edge] = []
        self.warnings: list[SkippedRegion] = []
        self.fn_macros: set[str] = set()
        self.stream_seen: set[tuple[int, str]] = set()
        self.wrap_row: int | None = None

    # -- spans and bookkeeping ------------------------------------------------

    def span(self, node: Node, end_node: Node | None = None) -> LineSpan:
        start = min(_line(node), self.line_count)
        end = _end_line(end_node or node)
        end = max(start, min(end, self.line_count))
        return LineSpan(start, end)

    def warn(self, node: Node, reason: str) -> None:
        self.warnings.append(SkippedRegion(_line(node), node.start_point[1] + 1, reason))

    def _macro_related(self, node: Node) -> bool:
        if not self.fn_macros:
            return False
        anchor = node
        while anchor.parent is not None and anchor.type not in _STATEMENT_TYPES:
            anchor = anchor.parent
        if anchor.type == "translation_unit":
            anchor = node
        text = _text(anchor)
        return any(re.search(rf"\b{re.escape(m)}\s*\(", text) for m in self.fn_macros)

    def error(self, node: Node) -> None:
        reason = "missing token" if node.is_missing else "unparsed region"
        if self._macro_related(node):
            self.warn(node, f"{reason} after function-like macro use (skipped)")
            return
        if self.strict:
            row, col = node.start_point
            if row == self.wrap_row:
                col = max(0, col - len(_WRAPPER_HEAD))
            raise ParseError(f"syntax error ({reason}: {_text(node)[:40]!r})", row + 1, col + 1)
        self.warn(node, reason)

    # -- records --------------------------------------------------------------

    def add_use(self, ctx: _Ctx, node: Node, name: str, kinds: frozenset[str], indirect: bool,
                initializer: bool = False) -> None:
        for kind in sorted(kinds):
            rec = {
                "name": name, "kind": kind, "directness": "indirect" if indirect else "direct",
                "method": ctx.method, "span": self.span(node), "loops": ctx.loops,
                "initializer": initializer, "byte": node.start_byte,
            }
            self.uses.append(rec)
            for col in ctx.collectors:
                col["reads" if kind == "read" else "writes"].add(name)

    def add_decl(self, ctx: _Ctx | None, node: Node, name: str, type_text: str, scope: str,
                 static: bool = False) -> None:
        self.decls.append(
            {
                "name": name, "type": type_text, "span": self.span(node), "scope": scope,
                "method": ctx.method if ctx else None, "static": static, "byte": node.start_byte,
            }
        )
        if ctx is not None:
            for col in ctx.collectors:
                col["declares"].add(name)

    def add_call(self, ctx: _Ctx, node: Node, name: str, qualified: str, kind: str,
                 receiver: str | None, args: list[str], arg_ids: list[frozenset[str]], arity: int) -> dict:
        rec = {
            "name": name, "qualified": qualified, "caller": ctx.method, "span": self.span(node),
            "kind": kind, "receiver": receiver, "args": tuple(args), "arg_ids": tuple(arg_ids),
            "loops": ctx.loops, "arity": arity, "callee": None,
        }
        self.calls.append(rec)
        for col in ctx.collectors:
            col["calls"].append(len(self.calls) - 1)
        return rec

    # -- top level ------------------------------------------------------------

    def build(self) -> CodePropertyGraph:
        root = _parser().parse(self.src.text.encode("utf-8")).root_node
        items = list(self._top_items(root))
        wrapped = self._wrap_fragment(root, items)
        if wrapped is not None:
            root = wrapped
            items = list(self._top_items(root))
        loose = [n for n in items if self._is_loose(n)]
        if loose:
            first, last = loose[0], loose[-1]
            self.methods.append(
                {"name": TOPLEVEL, "span": self.span(first, last), "params": (), "refs": (), "synthetic": True}
            )
        top_ctx = _Ctx(method="m0") if loose else None
        for item in items:
            self._top_item(item, top_ctx)
        self._check_missing(root)
        return self._freeze()

    def _wrap_fragment(self, root: Node, items: list[Node]) -> Node | None:
        """Re-parse a function-free fragment inside a synthetic function.

        At file scope tree-sitter reads ``cin >> x >> y;`` as a template
        construct, so statement fragments parse far better as a body.  The
        wrapper header is spliced onto the first content line, which keeps
        every line number unchanged.
        """
        if any(n.type == "function_definition" for n in items):
            return None
        if not any(self._is_loose(n) or n.type == "ERROR" or n.has_error for n in items):
            return None
        header_types = ("preproc_include", "preproc_def", "preproc_function_def", "using_declaration",
                        "comment", "preproc_call")
        body_items = [n for n in items if n.type not in header_types]
        if not body_items:
            return None
        first_row = body_items[0].start_point[0]
        lines = self.src.text.splitlines(keepends=True)
        text = "".join(lines[:first_row]) + _WRAPPER_HEAD + "".join(lines[first_row:])
        if not text.endswith("\n"):
            text += "\n"
        text += "}\n"
        candidate = _parser().parse(text.encode("utf-8")).root_node
        if _error_count(candidate) > _error_count(root):
            return None
        self.wrap_row = first_row
        return candidate

    def _top_items(self, node: Node) -> Iterator[Node]:
        for child in node.children:
            t = child.type
            if t in ("preproc_ifdef", "preproc_if", "preproc_else", "preproc_elif", "preproc_elifdef"):
                yield from self._top_items(child)
            elif t in ("namespace_definition",):
                body = child.child_by_field_name("body")
                if body is not None:
                    yield from self._top_items(body)
            elif t == "linkage_specification":
                body = child.child_by_field_name("body")
                if body is not None:
                    yield from (self._top_items(body) if body.type == "declaration_list" else [body])
            elif t == "template_declaration":
                for sub in child.named_children:
                    if sub.type in ("function_definition", "declaration", "class_specifier", "struct_specifier"):
                        yield sub
            elif t in ("{", "}", ";", "#ifdef", "#ifndef", "#if", "#endif", "#else", "#elif", "identifier") and child.parent.type != "translation_unit":
                continue
            else:
                yield child

    def _is_loose(self, node: Node) -> bool:
        t = node.type
        if t in ("expression_statement", "for_statement", "for_range_loop", "while_statement",
                 "do_statement", "if_statement", "switch_statement", "compound_statement",
                 "return_statement"):
            return True
        if t == "declaration":
            if node.child_by_field_name("declarator") is not None and self._is_prototype(node):
                return False
            return any(
                d.type == "init_declarator" for d in node.children_by_field_name("declarator")
            ) and self._has_identifier(node)
        return False

    def _has_identifier(self, node: Node) -> bool:
        for d in node.children_by_field_name("declarator"):
            value = d.child_by_field_name("value")
            if value is not None and self._contains_type(value, ("identifier", "call_expression")):
                return True
        return False

    def _contains_type(self, node: Node, types: tuple[str, ...]) -> bool:
        if node.type in types:
            return True
        return any(self._contains_type(c, types) for c in node.children)

    @staticmethod
    def _is_prototype(node: Node) -> bool:
        return all(d.type == "function_declarator" for d in node.children_by_field_name("declarator"))

    def _top_item(self, node: Node, top_ctx: _Ctx | None) -> None:
        t = node.type
        if t == "preproc_function_def":
            name = node.child_by_field_name("name")
            if name is not None:
                self.fn_macros.add(_text(name))
            self.warn(node, "function-like macro not expanded")
        elif t in ("preproc_include", "preproc_def", "preproc_call", "comment", "using_declaration",
                   "alias_declaration", "type_definition", "namespace_alias_definition", ";"):
            return
        elif t == "function_definition":
            self._function(node)
        elif t == "declaration":
            if self._is_prototype(node):
                return
            self._declaration(node, top_ctx, scope="file")
        elif t in ("class_specifier", "struct_specifier"):
            self._class(node)
        elif t == "ERROR":
            self.error(node)
        elif self._is_loose(node) and top_ctx is not None:
            self._stmt(node, top_ctx)
        elif node.is_named and t not in ("preproc_else", "preproc_elif"):
            if t.endswith("_specifier") or t.startswith("preproc") or t in ("static_assert_declaration",
                                                                            "template_instantiation"):
                return
            self.warn(node, f"unsupported top-level construct {t}")

    def _class(self, node: Node) -> None:
        body = node.child_by_field_name("body")
        if body is None:
            return
        for member in body.named_children:
            if member.type == "function_definition":
                self._function(member)
            elif member.type == "template_declaration":
                for sub in member.named_children:
                    if sub.type == "function_definition":
                        self._function(sub)
            elif member.type == "ERROR":
                self.error(member)

    def _check_missing(self, node: Node) -> None:
        if node.is_missing:
            self.error(node)
            return
        if not node.has_error:
            return
        for child in node.children:
            self._check_missing(child)

    # -- functions ------------------------------------------------------------

    def _function(self, node: Node) -> None:
        declarator = node.child_by_field_name("declarator")
        fdecl = declarator
        while fdecl is not None and fdecl.type not in ("function_declarator",):
            fdecl = fdecl.child_by_field_name("declarator")
        name = _leaf_name(fdecl.child_by_field_name("declarator")) if fdecl is not None else None
        if name is None:
            name = _text(declarator)[:40] if declarator is not None else "<anonymous>"
        if name in self.fn_macros:
            self.warn(node, f"use of function-like macro {name} parsed as a definition")
        mid = f"m{len(self.methods)}"
        if name == _WRAPPER_NAME and self.wrap_row is not None:
            last = max(i for i, ln in enumerate(self.src.text.splitlines(), 1) if ln.strip())
            span = LineSpan(self.wrap_row + 1, max(self.wrap_row + 1, last))
            self.methods.append({"name": TOPLEVEL, "span": span, "params": (), "refs": (), "synthetic": True})
            body = node.child_by_field_name("body")
            if body is not None:
                self._stmt(body, _Ctx(method=mid))
            return
        params: list[str] = []
        refs: list[bool] = []
        self.methods.append({"name": name, "span": self.span(node), "params": (), "refs": (), "synthetic": False})
        ctx = _Ctx(method=mid)
        plist = fdecl.child_by_field_name("parameters") if fdecl is not None else None
        if plist is not None:
            for p in plist.named_children:
                if p.type not in ("parameter_declaration", "optional_parameter_declaration"):
                    continue
                d = p.child_by_field_name("declarator")
                pname = self._declarator_name(d)
                if pname is None:
                    continue
                params.append(pname)
                refs.append(self._is_reference(d))
                ptype = p.child_by_field_name("type")
                self.add_decl(ctx, p, pname, (_text(ptype) if ptype else "") + _declarator_suffix(d), "param")
        self.methods[-1]["params"] = tuple(params)
        self.methods[-1]["refs"] = tuple(refs)
        body = node.child_by_field_name("body")
        if body is not None:
            self._stmt(body, ctx)

    @staticmethod
    def _is_reference(d: Node | None) -> bool:
        while d is not None:
            if d.type in ("reference_declarator", "pointer_declarator", "array_declarator"):
                return True
            if d.type == "identifier":
                return False
            d = d.child_by_field_name("declarator") or (d.named_children[0] if d.named_children else None)
        return False

    def _declarator_name(self, d: Node | None) -> str | None:
        while d is not None:
            if d.type == "identifier":
                return _text(d)
            if d.type in ("qualified_identifier", "field_identifier"):
                return _leaf_name(d)
            nxt = d.child_by_field_name("declarator")
            if nxt is None:
                named = [c for c in d.named_children if c.type != "ERROR"]
                nxt = named[0] if d.type == "reference_declarator" and named else None
            d = nxt
        return None

    # -- statements -------------------------------------------------------------

    def _stmt(self, node: Node, ctx: _Ctx) -> None:
        t = node.type
        if t == "ERROR":
            self.error(node)
            return
        if t == "compound_statement":
            for child in node.named_children:
                self._stmt(child, ctx)
            return
        sctx = _Ctx(ctx.method, ctx.loops, node.id, ctx.collectors)
        if t in LOOP_TYPES:
            self._loop(node, sctx)
        elif t == "declaration":
            self._declaration(node, sctx, scope="local")
        elif t == "function_definition":
            # macro use such as ``rep(i, n) { ... }`` parsed as a nested definition
            self.warn(node, "nested definition (likely macro use) walked as a block")
            body = node.child_by_field_name("body")
            if body is not None:
                self._stmt(body, ctx)
        elif t in ("if_statement", "switch_statement"):
            for child in node.named_children:
                if child.type == "condition_clause":
                    self._condition(child, sctx)
                else:
                    self._stmt(child, ctx) if child.type in _STATEMENT_TYPES or child.type in ("else_clause", "ERROR") else self._expr(child, sctx)
        elif t == "else_clause":
            for child in node.named_children:
                self._stmt(child, ctx)
        elif t in ("case_statement", "labeled_statement"):
            for child in node.named_children:
                if child.type in _STATEMENT_TYPES or child.type == "ERROR":
                    self._stmt(child, ctx)
                elif child.type != "statement_identifier":
                    self._expr(child, sctx)
        elif t == "try_statement":
            for child in node.named_children:
                if child.type == "catch_clause":
                    for sub in child.named_children:
                        if sub.type == "compound_statement":
                            self._stmt(sub, ctx)
                else:
                    self._stmt(child, ctx)
        elif t in ("type_definition", "alias_declaration", "using_declaration", "static_assert_declaration",
                   "break_statement", "continue_statement", "goto_statement", "comment"):
            return
        else:
            for child in node.named_children:
                self._expr(child, sctx)

    def _condition(self, node: Node, ctx: _Ctx) -> None:
        for child in node.named_children:
            if child.type == "declaration":
                self._declaration(child, ctx, scope="local")
            elif child.type == "init_declarator":
                self._init_declarator(child, ctx, "", scope="local", static=False)
            else:
                self._expr(child, ctx)

    def _loop(self, node: Node, ctx: _Ctx) -> None:
        lid = len(self.loops)
        parent = ctx.loops[-1] if ctx.loops else None
        rec = {"kind": LOOP_TYPES[node.type], "span": self.span(node), "method": ctx.method,
               "parent": parent, "id": f"l{lid}", "body": []}
        self.loops.append(rec)
        inner = _Ctx(ctx.method, ctx.loops + (rec["id"],), node.id, ctx.collectors)
        body = node.child_by_field_name("body")
        t = node.type
        if t == "for_statement":
            init = node.child_by_field_name("initializer")
            if init is not None:
                (self._declaration(init, inner, scope="local") if init.type == "declaration" else self._expr(init, inner))
            for fname in ("condition", "update"):
                part = node.child_by_field_name(fname)
                if part is not None:
                    self._condition(part, inner) if part.type == "condition_clause" else self._expr(part, inner)
        elif t == "for_range_loop":
            d = node.child_by_field_name("declarator")
            name = self._declarator_name(d)
            if name is not None:
                type_node = node.child_by_field_name("type")
                self.add_decl(inner, d, name, _text(type_node) if type_node else "", "local")
                self.add_use(inner, d, name, frozenset({"write"}), False, initializer=True)
            right = node.child_by_field_name("right")
            if right is not None:
                if right.type == "identifier":
                    self._container_op(inner, right, _text(right), "range-for")
                    self.add_use(inner, right, _text(right), frozenset({"read"}), True)
                else:
                    self._expr(right, inner)
        elif t in ("while_statement", "do_statement"):
            cond = node.child_by_field_name("condition")
            if cond is not None:
                self._condition(cond, inner) if cond.type == "condition_clause" else self._expr(cond, inner)
        if body is not None:
            stmts = body.named_children if body.type == "compound_statement" else [body]
            for s in stmts:
                if s.type == "comment":
                    continue
                col = {"reads": set(), "writes": set(), "declares": set(), "calls": [], "node": s}
                sub = _Ctx(inner.method, inner.loops, inner.stmt, inner.collectors + (col,))
                self._stmt(s, sub)
                rec["body"].append(col)

    def _declaration(self, node: Node, ctx: _Ctx | None, scope: str) -> None:
        type_node = node.child_by_field_name("type")
        type_text = _text(type_node) if type_node is not None else ""
        static = any(c.type == "storage_class_specifier" and _text(c) == "static" for c in node.children)
        for d in node.children_by_field_name("declarator"):
            if d.type == "function_declarator":
                continue
            self._init_declarator(d, ctx, type_text, scope, static)
        for child in node.children:
            if child.type == "ERROR":
                self.error(child)

    def _init_declarator(self, d: Node, ctx: _Ctx | None, type_text: str, scope: str, static: bool) -> None:
        name = self._declarator_name(d)
        if name is None:
            return
        full_type = type_text + _declarator_suffix(d)
        self.add_decl(ctx, d, name, full_type, "file" if scope == "file" else scope, static)
        if ctx is None:
            return
        # array sizes are reads
        cur = d.child_by_field_name("declarator") if d.type == "init_declarator" else d
        while cur is not None and cur.type != "identifier":
            if cur.type == "array_declarator":
                size = cur.child_by_field_name("size")
                if size is not None:
                    self._expr(size, ctx)
            cur = cur.child_by_field_name("declarator")
        if d.type == "init_declarator":
            value = d.child_by_field_name("value")
            if value is not None:
                if value.type in ("argument_list", "initializer_list"):
                    for arg in value.named_children:
                        self._expr(arg, ctx)
                else:
                    self._expr(value, ctx)
                self.add_use(ctx, d, name, frozenset({"write"}), False, initializer=True)

    # -- expressions ------------------------------------------------------------

    def _expr(self, node: Node, ctx: _Ctx, kinds: frozenset[str] = frozenset({"read"}),
              indirect: bool = False) -> None:
        t = node.type
        if t in _SKIP_TYPES:
            return
        if t == "ERROR":
            self.error(node)
            return
        if t == "identifier":
            self.add_use(ctx, node, _text(node), kinds, indirect)
        elif t == "qualified_identifier":
            name = _leaf_name(node)
            if name is not None:
                self.add_use(ctx, node, name, kinds, indirect)
        elif t == "assignment_expression":
            op = node.child_by_field_name("operator")
            left_kinds = frozenset({"write"}) if op is not None and _text(op) == "=" else frozenset({"read", "write"})
            self._expr(node.child_by_field_name("left"), ctx, left_kinds)
            self._expr(node.child_by_field_name("right"), ctx)
        elif t == "update_expression":
            self._expr(node.child_by_field_name("argument"), ctx, frozenset({"read", "write"}), indirect)
        elif t == "subscript_expression":
            base = node.child_by_field_name("argument")
            if base is not None and base.type == "identifier":
                self._container_op(ctx, node, _text(base), "operator[]")
            self._expr(base, ctx, kinds, True)
            idx = node.child_by_field_name("indices") or node.child_by_field_name("index")
            if idx is not None:
                for c in (idx.named_children if idx.type == "subscript_argument_list" else [idx]):
                    self._expr(c, ctx)
        elif t == "field_expression":
            self._expr(node.child_by_field_name("argument"), ctx, kinds, True)
        elif t == "pointer_expression":
            op = node.child_by_field_name("operator")
            arg = node.child_by_field_name("argument")
            if op is not None and _text(op) == "&":
                self._expr(arg, ctx, frozenset({"write"}), indirect)
            else:
                self._expr(arg, ctx, kinds, True)
        elif t == "call_expression":
            self._call(node, ctx)
        elif t == "binary_expression" and self._stream_root(node) is not None:
            self._stream(node, ctx)
        elif t == "lambda_expression":
            decl = node.child_by_field_name("declarator")
            if decl is not None:
                plist = decl.child_by_field_name("parameters")
                for p in (plist.named_children if plist is not None else []):
                    pname = self._declarator_name(p.child_by_field_name("declarator"))
                    if pname:
                        self.add_decl(ctx, p, pname, "", "local")
            body = node.child_by_field_name("body")
            if body is not None:
                self._stmt(body, ctx)
        elif t in ("declaration", "init_declarator"):
            self._condition(node.parent, ctx) if False else self._declaration(node, ctx, "local") if t == "declaration" else self._init_declarator(node, ctx, "", "local", False)
        elif t in ("compound_statement",) or t in _STATEMENT_TYPES:
            self._stmt(node, ctx)
        else:
            for i, child in enumerate(node.children):
                if not child.is_named:
                    if child.is_missing:
                        self.error(child)
                    continue
                if node.field_name_for_child(i) == "type":
                    continue
                self._expr(child, ctx)

    def _container_op(self, ctx: _Ctx, node: Node, var: str, op: str) -> None:
        self.container_ops.append({"var": var, "op": op, "span": self.span(node), "method": ctx.method,
                                   "byte": node.start_byte})

    def _call(self, node: Node, ctx: _Ctx) -> None:
        fn = node.child_by_field_name("function")
        args_node = node.child_by_field_name("arguments")
        kind = "function"
        receiver = None
        if fn is not None and fn.type == "field_expression":
            kind = "member"
            field_node = fn.child_by_field_name("field")
            name = _leaf_name(field_node) or _text(field_node) if field_node is not None else _text(fn)
            qualified = name
            base = fn.child_by_field_name("argument")
            if base is not None and base.type == "identifier":
                receiver = _text(base)
                self._container_op(ctx, node, receiver, name)
                mutating = name in MUTATING_MEMBERS
                self.add_use(ctx, base, receiver, frozenset({"read", "write"}) if mutating else frozenset({"read"}), True)
            elif base is not None:
                self._expr(base, ctx, frozenset({"read"}), True)
        elif fn is not None and fn.type in ("identifier", "qualified_identifier", "template_function"):
            name = _leaf_name(fn) or _text(fn)
            qualified = _text(fn) if fn.type == "qualified_identifier" else name
            if fn.type == "qualified_identifier":
                qualified = re.sub(r"<.*", "", qualified)
        else:
            name = _text(fn)[:40] if fn is not None else "<call>"
            qualified = name
            if fn is not None:
                self._expr(fn, ctx)
        args: list[str] = []
        arg_ids: list[frozenset[str]] = []
        arg_nodes = [a for a in args_node.named_children if a.type != "comment"] if args_node is not None else []
        for a in arg_nodes:
            before = len(self.uses)
            self._expr(a, ctx)
            args.append(_text(a))
            arg_ids.append(frozenset(u["name"] for u in self.uses[before:]))
        if args_node is not None and args_node.type != "argument_list":
            # e.g. initializer_list call syntax
            pass
        if kind == "function" and name in self.fn_macros:
            self.warn(node, f"use of function-like macro {name} not expanded")
            return
        rec = self.add_call(ctx, node, name, qualified, kind, receiver, args, arg_ids, len(arg_nodes))
        rec["arg_nodes"] = [(a.type, a.start_byte, a) for a in arg_nodes]

    def _stream_root(self, node: Node) -> str | None:
        cur = node
        while cur is not None and cur.type == "binary_expression":
            op = cur.child_by_field_name("operator")
            if op is None or _text(op) not in ("<<", ">>"):
                return None
            cur = cur.child_by_field_name("left")
        if cur is None:
            return None
        name = _leaf_name(cur)
        if name in STREAM_OBJECTS and cur.type in ("identifier", "qualified_identifier"):
            return name
        return None

    def _stream(self, node: Node, ctx: _Ctx) -> None:
        stream = self._stream_root(node)
        operands: list[tuple[str, Node]] = []
        cur = node
        while cur.type == "binary_expression":
            op = _text(cur.child_by_field_name("operator"))
            operands.append((op, cur.child_by_field_name("right")))
            cur = cur.child_by_field_name("left")
        operands.reverse()
        arg_ids: list[frozenset[str]] = []
        for op, operand in operands:
            if operand is None:
                continue
            before = len(self.uses)
            self._expr(operand, ctx, frozenset({"write"}) if op == ">>" else frozenset({"read"}))
            arg_ids.append(frozenset(u["name"] for u in self.uses[before:]))
        key = (ctx.stmt if ctx.stmt is not None else node.id, stream)
        if key in self.stream_seen:
            return
        self.stream_seen.add(key)
        qualified = _text(cur) if cur.type == "qualified_identifier" else stream
        self.add_call(ctx, node, stream, qualified, "stream", None,
                      [_text(o) for _, o in operands if o is not None], arg_ids, len(arg_ids))

    # -- resolution and freezing ------------------------------------------------

    def _resolve_decl(self, name: str, method: str, byte: int) -> int | None:
        best = None
        for i, d in enumerate(self.decls):
            if d["name"] != name or d["method"] != method:
                continue
            if d["byte"] <= byte or best is None:
                if best is None or self.decls[best]["byte"] > byte or d["byte"] >= self.decls[best]["byte"]:
                    best = i
        if best is not None:
            return best
        for i, d in enumerate(self.decls):
            if d["name"] == name and d["scope"] == "file":
                return i
        return None

    def _freeze(self) -> CodePropertyGraph:
        methods = [
            MethodNode(f"m{i}", m["name"], m["span"], m["params"], m["refs"], m["synthetic"])
            for i, m in enumerate(self.methods)
        ]
        by_name: dict[str, list[MethodNode]] = {}
        for m in methods:
            if not m.synthetic:
                by_name.setdefault(m.name, []).append(m)
        # lexical resolution; pass-by-reference arguments count as writes
        for c in self.calls:
            if c["kind"] != "function":
                continue
            cands = by_name.get(c["name"], [])
            match = next((m for m in cands if len(m.params) == c["arity"]), cands[0] if cands else None)
            if match is None:
                continue
            c["callee"] = match.id
            for pos, (atype, abyte, anode) in enumerate(c.get("arg_nodes", [])):
                if pos < len(match.by_reference) and match.by_reference[pos] and atype == "identifier":
                    self.uses.append({
                        "name": _text(anode), "kind": "write", "directness": "direct", "method": c["caller"],
                        "span": self.span(anode), "loops": c["loops"], "initializer": False, "byte": abyte,
                    })
        self.uses.sort(key=lambda u: (u["byte"], u["kind"] == "write"))

        decls = [
            Declaration(f"d{i}", d["name"], d["type"], d["span"], d["scope"], d["method"], d["static"])
            for i, d in enumerate(self.decls)
        ]
        uses = []
        edges: list[Edge] = []
        for i, u in enumerate(self.uses):
            di = self._resolve_decl(u["name"], u["method"], u["byte"])
            use = IdentifierUse(f"u{i}", u["name"], u["kind"], u["directness"], u["method"], u["span"],
                                f"d{di}" if di is not None else None, u["initializer"])
            uses.append(use)
            if use.decl is not None:
                edges.append(Edge("def_use", use.decl, use.id))
        calls = []
        for i, c in enumerate(self.calls):
            calls.append(CallSite(f"c{i}", c["name"], c["qualified"], c["caller"], c["callee"], c["span"],
                                  c["kind"], c["receiver"], c["args"], c["arg_ids"]))
            edges.append(Edge("contains", c["loops"][-1] if c["loops"] else c["caller"], f"c{i}"))
            if c["callee"] is not None:
                edges.append(Edge("call", f"c{i}", c["callee"]))
        for d in decls:
            if d.method is not None:
                edges.append(Edge("contains", d.method, d.id))
        loops = []
        for rec in self.loops:
            lid = rec["id"]
            loop_calls = tuple(f"c{i}" for i, c in enumerate(self.calls) if lid in c["loops"])
            mutated = frozenset(u["name"] for u in self.uses if lid in u["loops"] and u["kind"] == "write")
            body = tuple(
                Statement(self.span(col["node"]), frozenset(col["reads"]), frozenset(col["writes"]),
                          frozenset(col["declares"]), tuple(f"c{i}" for i in col["calls"]))
                for col in rec["body"]
            )
            loops.append(LoopScope(lid, rec["kind"], rec["span"], rec["method"], rec["parent"], loop_calls,
                                   mutated, body))
            edges.append(Edge("contains", rec["parent"] or rec["method"], lid))
        ops = []
        for op in sorted(self.container_ops, key=lambda o: o["byte"]):
            di = self._resolve_decl(op["var"], op["method"], op["byte"])
            ops.append(ContainerOp(op["var"], op["op"], op["span"], op["method"], f"d{di}" if di is not None else None))
        edges.sort(key=lambda e: (e.kind, _id_key(e.src), _id_key(e.dst)))
        return CodePropertyGraph(
            line_count=self.line_count,
            methods=tuple(methods),
            calls=tuple(calls),
            identifiers=tuple(uses),
            loops=tuple(loops),
            declarations=tuple(decls),
            container_ops=tuple(ops),
            edges=tuple(edges),
            warnings=tuple(sorted(set(self.warnings), key=lambda w: (w.line, w.column, w.reason))),
            path=self.src.path,
        )


def _declarator_suffix(d: Node | None) -> str:
    """Pointer/reference/array markers wrapped around a declarator's name."""
    marks = {"pointer_declarator": "*", "reference_declarator": "&", "array_declarator": "[]"}
    suffix = ""
    while d is not None and d.type != "identifier":
        suffix += marks.get(d.type, "")
        nxt = d.child_by_field_name("declarator")
        if nxt is None and d.type == "reference_declarator":
            nxt = next((c for c in d.named_children), None)
        d = nxt
    return suffix


def _error_count(node: Node) -> int:
    if not node.has_error and not node.is_missing:
        return 0
    own = 1 if node.type == "ERROR" or node.is_missing else 0
    return own + sum(_error_count(c) for c in node.children)


def _id_key(ident: str) -> tuple[str, int]:
    m = re.match(r"([a-z]+)(\d+)$", ident)
    return (m.group(1), int(m.group(2))) if m else (ident, -1)


def build_cpg(src: SourceUnit | str, strict: bool = True) -> CodePropertyGraph:
    """Parse ``src`` into a :class:`CodePropertyGraph`.

    With ``strict`` set, the first malformed region raises :class:`ParseError`;
    otherwise malformed regions are skipped and listed in ``graph.warnings``.
    Function-like macros are never expanded and their uses are recorded as
    skips in either mode.
    """
    if isinstance(src, str):
        src = SourceUnit(src)
    return _Builder(src, strict).build()


# --------------------------------------------------------------------------
# Debug dump
# --------------------------------------------------------------------------


def _span_field(span: LineSpan | None) -> str:
    return f"{span.start_line}-{span.end_line}" if span is not None else "-"


def iter_dump_records(g: CodePropertyGraph) -> Iterator[str]:
    """Yield tab-separated ``kind, id, span, attributes`` lines."""

    def rec(record: str, ident: str, span: LineSpan | None, **attrs: object) -> str:
        return "\t".join((record, ident, _span_field(span), json.dumps(attrs, sort_keys=True, default=sorted)))

    for m in g.methods:
        yield rec("method", m.id, m.span, name=m.name, params=list(m.params), synthetic=m.synthetic)
    for d in g.declarations:
        yield rec("declaration", d.id, d.span, name=d.name, type=d.type_text, scope=d.scope,
                  method=d.method, static=d.static)
    for lp in g.loops:
        yield rec("loop", lp.id, lp.span, kind=lp.kind, method=lp.method, parent=lp.parent,
                  mutated=sorted(lp.mutated))
    for c in g.calls:
        yield rec("call", c.id, c.span, name=c.name, qualified=c.qualified_name, kind=c.kind,
                  caller=c.caller, callee=c.callee, receiver=c.receiver)
    for u in g.identifiers:
        yield rec("identifier", u.id, u.span, name=u.name, access=u.kind, directness=u.directness,
                  method=u.enclosing_method, decl=u.decl)
    for e in g.edges:
        yield rec(f"edge:{e.kind}", f"{e.src}->{e.dst}", None)
    for w in g.warnings:
        yield rec("warning", f"{w.line}:{w.column}", LineSpan(w.line, w.line), reason=w.reason)


def dump_graph(g: CodePropertyGraph, out: TextIO | None = None) -> None:
    out = out or sys.stdout
    for line in iter_dump_records(g):
        out.write(line + "\n")
