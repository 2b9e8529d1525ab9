"""Scopes, statements and per-scope control-flow graphs."""

from __future__ import annotations

import ast
import logging
from dataclasses import dataclass, field
from enum import Enum

from .ingest import SourceUnit, UnitKind, UnsupportedKernel
from .mutation import (
    ModuleContext,
    MutationSpecTable,
    Policy,
    analyze_statement,
    iter_statements,
    param_names,
)

log = logging.getLogger(__name__)

_MATCH = getattr(ast, "Match", None)
_TRY_STAR = getattr(ast, "TryStar", None)


class ScopeKind(str, Enum):
    MODULE = "module"
    FUNCTION = "function"


@dataclass(frozen=True)
class Statement:
    id: int
    line: int
    span: tuple[int, int]
    kind: str
    reads: frozenset[str]
    def_set: frozenset[str]
    update_set_opt: frozenset[str]
    update_set_cons: frozenset[str]

    def update_set(self, policy: Policy | str) -> frozenset[str]:
        if Policy(policy) is Policy.OPTIMISTIC:
            return self.update_set_opt
        return self.update_set_cons


@dataclass
class Scope:
    name: str
    kind: ScopeKind
    statements: list[Statement]
    parent: Scope | None = None
    params: list[str] = field(default_factory=list)
    line: int = 1
    node: ast.AST | None = field(default=None, repr=False, compare=False)
    # statement id -> ast node, used by the CFG builder
    nodes: dict[int, ast.AST] = field(default_factory=dict, repr=False, compare=False)

    @property
    def span(self) -> tuple[int, int]:
        if not self.statements:
            return (self.line, self.line)
        return (min(self.line, self.statements[0].line),
                max(s.span[1] for s in self.statements))

    def statement(self, sid: int) -> Statement:
        return self.statements[sid]


def _first_line(node: ast.AST) -> int:
    if hasattr(node, "lineno"):
        return node.lineno
    return node.pattern.lineno  # match_case has no position of its own before 3.11


def _header_end(node: ast.AST) -> int:
    """Last line of the statement's own text (header for compound statements)."""
    body = getattr(node, "body", None)
    if isinstance(body, list) and body and not isinstance(node, ast.Lambda):
        return max(_first_line(node), _first_line(body[0]) - 1)
    return getattr(node, "end_lineno", None) or _first_line(node)


class _ScopeCollector:
    def __init__(self, unit: SourceUnit, tree: ast.Module, table: MutationSpecTable | None):
        self.unit = unit
        self.wrappers = set()
        if unit.kind is UnitKind.NOTEBOOK:
            self.wrappers = {id(n) for n in tree.body
                             if isinstance(n, ast.FunctionDef) and unit.is_synthetic(n.lineno)}
        exclude = [n for n in tree.body if id(n) in self.wrappers]
        self.ctx = ModuleContext(tree, table, exclude=exclude)
        self.scopes: list[Scope] = []

    def _synthetic(self, node: ast.AST) -> bool:
        return id(node) in self.wrappers or (
            self.unit.kind is UnitKind.NOTEBOOK and self.unit.is_synthetic(_first_line(node))
        )

    def collect(self, body, name, kind, parent, params, line, node=None) -> Scope:
        scope = Scope(name, kind, [], parent, params, line, node)
        self.scopes.append(scope)
        nested = []
        for stmt in iter_statements(body):
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef)):
                nested.append((stmt, ""))
            elif isinstance(stmt, ast.ClassDef):
                nested.extend(_class_methods(stmt))
            if self._synthetic(stmt):
                continue
            facts = analyze_statement(stmt, self.ctx)
            sid = len(scope.statements)
            first = _first_line(stmt)
            scope.statements.append(Statement(
                id=sid, line=first, span=(first, _header_end(stmt)), kind=facts.kind,
                reads=facts.reads, def_set=facts.def_set,
                update_set_opt=facts.update_opt, update_set_cons=facts.update_cons,
            ))
            scope.nodes[sid] = stmt
        owner = "" if kind is ScopeKind.MODULE else name + "."
        for fdef, classes in nested:
            self.collect(fdef.body, owner + classes + fdef.name, ScopeKind.FUNCTION, scope,
                         param_names(fdef), fdef.lineno, fdef)
        return scope


def _class_methods(cls: ast.ClassDef, prefix: str = ""):
    path = f"{prefix}{cls.name}."
    for node in cls.body:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            yield node, path
        elif isinstance(node, ast.ClassDef):
            yield from _class_methods(node, path)


def parse_scopes(unit: SourceUnit, table: MutationSpecTable | None = None) -> list[Scope]:
    """Module scope followed by one scope per function or method, in discovery order.

    Class bodies are opaque: the ``class`` line is one statement of the
    enclosing scope and only its methods become scopes. Raises
    :class:`SyntaxError` for unparsable text.
    """
    if not unit.kernel_supported:
        raise UnsupportedKernel(f"{unit.path}: language {unit.language!r}")
    tree = ast.parse(unit.text, filename=str(unit.path))
    collector = _ScopeCollector(unit, tree, table)
    collector.collect(tree.body, "<module>", ScopeKind.MODULE, None, [], 1, tree)
    return collector.scopes


# --- control-flow graph -------------------------------------------------------

@dataclass(frozen=True)
class Cfg:
    scope: Scope
    blocks: list[list[int]]
    edges: frozenset[tuple[int, int]]
    entry: int
    exit: int
    unreachable: frozenset[int] = frozenset()

    def predecessors(self, block: int) -> list[int]:
        return sorted(a for a, b in self.edges if b == block)

    def successors(self, block: int) -> list[int]:
        return sorted(b for a, b in self.edges if a == block)

    @property
    def body_blocks(self) -> list[int]:
        """Block ids other than the synthetic exit block."""
        return [b for b in range(len(self.blocks)) if b != self.exit]

    @property
    def internal_edges(self) -> frozenset[tuple[int, int]]:
        return frozenset(e for e in self.edges if e[1] != self.exit)

    def block_of(self, sid: int) -> int:
        for b, stmts in enumerate(self.blocks):
            if sid in stmts:
                return b
        raise KeyError(sid)

    def reverse_postorder(self) -> list[int]:
        succ: dict[int, list[int]] = {b: [] for b in range(len(self.blocks))}
        for a, b in sorted(self.edges):
            succ[a].append(b)
        seen, order = set(), []
        roots = [self.entry] + sorted(self.unreachable)
        for root in roots:
            if root in seen:
                continue
            stack = [(root, iter(succ[root]))]
            seen.add(root)
            while stack:
                node, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    stack.pop()
                    order.append(node)
                elif nxt not in seen:
                    seen.add(nxt)
                    stack.append((nxt, iter(succ[nxt])))
        rest = [b for b in range(len(self.blocks)) if b not in seen]
        return order[::-1] + rest

    def iteration_order(self) -> list[int]:
        """Reverse postorder, regrouped so each strongly connected component
        (loop) is contiguous and components appear in topological order.

        A worklist that follows this order settles a loop before touching
        anything downstream of it.
        """
        rpo = self.reverse_postorder()
        pos = {b: i for i, b in enumerate(rpo)}
        succ: dict[int, list[int]] = {b: [] for b in rpo}
        for a, b in self.edges:
            succ[a].append(b)
        # iterative Tarjan; components come out in reverse topological order
        index: dict[int, int] = {}
        low: dict[int, int] = {}
        stack: list[int] = []
        on_stack: set[int] = set()
        comp: dict[int, int] = {}
        ncomp = 0
        for root in rpo:
            if root in index:
                continue
            index[root] = low[root] = len(index)
            stack.append(root)
            on_stack.add(root)
            work = [(root, iter(sorted(succ[root], key=pos.__getitem__)))]
            while work:
                node, it = work[-1]
                nxt = next(it, None)
                if nxt is not None:
                    if nxt not in index:
                        index[nxt] = low[nxt] = len(index)
                        stack.append(nxt)
                        on_stack.add(nxt)
                        work.append((nxt, iter(sorted(succ[nxt], key=pos.__getitem__))))
                    elif nxt in on_stack:
                        low[node] = min(low[node], index[nxt])
                    continue
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[node])
                if low[node] == index[node]:
                    while True:
                        b = stack.pop()
                        on_stack.discard(b)
                        comp[b] = ncomp
                        if b == node:
                            break
                    ncomp += 1
        return sorted(rpo, key=lambda b: (-comp[b], pos[b]))

    def to_dot(self) -> str:
        lines = [f'digraph "{self.scope.name}" {{', "  node [shape=box fontname=monospace];"]
        for b, stmts in enumerate(self.blocks):
            if b == self.exit:
                label = "EXIT"
            else:
                label = "\\l".join(f"{self.scope.statements[s].line}: "
                                   f"{self.scope.statements[s].kind}" for s in stmts) or "(empty)"
                if b == self.entry:
                    label = "ENTRY\\l" + label
            lines.append(f'  b{b} [label="{label}\\l"];')
        for a, b in sorted(self.edges):
            lines.append(f"  b{a} -> b{b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


class _Builder:
    def __init__(self, scope: Scope):
        self.scope = scope
        self.ids = {id(node): sid for sid, node in scope.nodes.items()}
        self.blocks: list[list[int]] = []
        self.edges: set[tuple[int, int]] = set()
        self.unreachable: set[int] = set()
        self.loops: list[tuple[int, list[int]]] = []  # (header, break sources)
        self.handlers: list[list[int]] = []        # blocks created inside enclosing try bodies
        self.exit = -1

    def new(self) -> int:
        self.blocks.append([])
        b = len(self.blocks) - 1
        for frame in self.handlers:
            frame.append(b)
        return b

    def edge(self, a: int | None, b: int) -> None:
        if a is not None:
            self.edges.add((a, b))

    def ensure(self, cur: int | None) -> int:
        if cur is None:
            cur = self.new()
            self.unreachable.add(cur)
        return cur

    def add(self, cur: int, node: ast.AST) -> None:
        sid = self.ids.get(id(node))
        if sid is not None:
            self.blocks[cur].append(sid)

    def build(self) -> Cfg:
        entry = self.new()
        end = self.body(self.scope_body(), entry)
        self.exit = len(self.blocks)
        self.blocks.append([])
        self.edge(end, self.exit)
        for a, b in list(self.edges):
            if b == -1:
                self.edges.discard((a, b))
                self.edges.add((a, self.exit))
        return Cfg(self.scope, self.blocks, frozenset(self.edges), entry, self.exit,
                   frozenset(self.unreachable))

    def scope_body(self) -> list[ast.stmt]:
        node = self.scope.node
        return list(getattr(node, "body", []) or [])

    def header(self, cur: int | None, node: ast.AST) -> int:
        """Start a fresh block for a loop header unless ``cur`` is empty."""
        if cur is not None and not self.blocks[cur]:
            self.add(cur, node)
            return cur
        head = self.new()
        self.edge(cur, head)
        if cur is None:
            self.unreachable.add(head)
        self.add(head, node)
        return head

    def body(self, stmts: list[ast.stmt], cur: int | None) -> int | None:
        for node in stmts:
            cur = self.stmt(node, cur)
        return cur

    def stmt(self, node: ast.stmt, cur: int | None) -> int | None:
        if isinstance(node, ast.If):
            cur = self.ensure(cur)
            self.add(cur, node)
            then = self.new()
            self.edge(cur, then)
            ends = [self.body(node.body, then)]
            if node.orelse:
                other = self.new()
                self.edge(cur, other)
                ends.append(self.body(node.orelse, other))
            else:
                ends.append(cur)
            return self.join(ends)

        if isinstance(node, (ast.While, ast.For, ast.AsyncFor)):
            head = self.header(cur, node)
            body = self.new()
            self.edge(head, body)
            breaks: list[int] = []
            self.loops.append((head, breaks))
            self.edge(self.body(node.body, body), head)
            self.loops.pop()
            exits: list[int | None] = [head]
            if node.orelse:
                other = self.new()
                self.edge(head, other)
                exits = [self.body(node.orelse, other)]
            return self.join(exits + breaks)

        if isinstance(node, (ast.Break, ast.Continue)):
            cur = self.ensure(cur)
            self.add(cur, node)
            if self.loops:
                head, breaks = self.loops[-1]
                if isinstance(node, ast.Break):
                    breaks.append(cur)
                else:
                    self.edge(cur, head)
            return None

        if isinstance(node, ast.Return):
            cur = self.ensure(cur)
            self.add(cur, node)
            self.edge(cur, -1)
            return None

        if isinstance(node, ast.Raise):
            cur = self.ensure(cur)
            self.add(cur, node)
            if not self.handlers:
                self.edge(cur, -1)
            return None

        if isinstance(node, ast.Try) or (_TRY_STAR and isinstance(node, _TRY_STAR)):
            return self.try_(node, cur)

        if isinstance(node, (ast.With, ast.AsyncWith)):
            cur = self.ensure(cur)
            self.add(cur, node)
            return self.body(node.body, cur)

        if _MATCH and isinstance(node, _MATCH):
            cur = self.ensure(cur)
            self.add(cur, node)
            ends = [cur]
            for case in node.cases:
                blk = self.new()
                self.edge(cur, blk)
                self.add(blk, case)
                ends.append(self.body(case.body, blk))
            return self.join(ends)

        cur = self.ensure(cur)
        self.add(cur, node)
        return cur

    def join(self, ends: list[int | None]) -> int | None:
        live = [e for e in ends if e is not None]
        if not live:
            return None
        after = self.new()
        for e in live:
            self.edge(e, after)
        return after

    def try_(self, node, cur: int | None) -> int | None:
        cur = self.ensure(cur)
        frame: list[int] = [cur]
        self.handlers.append(frame)
        start = self.new()
        self.edge(cur, start)
        end = self.body(node.body, start)
        self.handlers.pop()
        if node.orelse:
            other = self.new()
            self.edge(end, other)
            end = self.body(node.orelse, other)
        ends = [end]
        for h in node.handlers:
            blk = self.new()
            for src in frame:
                self.edge(src, blk)
            self.add(blk, h)
            ends.append(self.body(h.body, blk))
        if node.finalbody:
            fin = self.new()
            for e in ends:
                self.edge(e, fin)
            for src in frame:
                self.edge(src, fin)
            return self.body(node.finalbody, fin)
        return self.join(ends)


def build_cfg(scope: Scope) -> Cfg:
    """Basic blocks and edges for one scope.

    Block 0 is the entry; the last block is an empty synthetic exit that
    every ``return`` and the fall-through end of the scope lead to. Every
    block reached from inside a ``try`` body (and the block just before it)
    gets an edge to each handler and to the ``finally`` block.
    """
    cfg = _Builder(scope).build()
    if log.isEnabledFor(logging.DEBUG):
        log.debug("cfg %s: %d blocks, %d edges", scope.name, len(cfg.blocks), len(cfg.edges))
    return cfg
