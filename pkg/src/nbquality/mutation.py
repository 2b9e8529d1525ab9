"""DEF/UPDATE classification of Python statements.

Assignments are classified syntactically. Calls are resolved in order:
a function defined in the same module (its body is inspected one level
deep for parameter mutation), an import from a library listed in the
:class:`MutationSpecTable`, the method-name heuristics, and finally
"unknown", whose effect depends on the :class:`Policy`.
"""

from __future__ import annotations

import ast
import fnmatch
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator

DEFAULT_MUTATORS = frozenset(
    {"append", "extend", "insert", "remove", "pop", "clear", "sort", "reverse"}
)
DEFAULT_PURE = frozenset({"keys", "values", "items", "copy", "get"})

HEURISTIC_LIBRARY = "*"
BUILTINS_LIBRARY = "builtins"


class Policy(str, Enum):
    OPTIMISTIC = "optimistic"
    CONSERVATIVE = "conservative"


class Resolution(str, Enum):
    LOCAL_BODY = "local_body"
    SPEC_TABLE = "spec_table"
    HEURISTIC = "heuristic"
    UNKNOWN = "unknown"


class SpecTableError(ValueError):
    pass


@dataclass(frozen=True)
class Effect:
    """What a library callable mutates: nothing, its receiver, or some positional args."""

    kind: str
    args: tuple[int, ...] = ()

    @classmethod
    def parse(cls, text: str) -> Effect:
        text = text.strip()
        if text in ("pure", "receiver"):
            return cls(text)
        if text.startswith("arg:"):
            try:
                idx = tuple(int(p) for p in text[4:].split(",") if p.strip())
            except ValueError as exc:
                raise SpecTableError(f"bad argument indices in effect {text!r}") from exc
            if not idx or min(idx) < 0:
                raise SpecTableError(f"bad argument indices in effect {text!r}")
            return cls("args", idx)
        raise SpecTableError(f"unknown effect {text!r}")

    def __str__(self) -> str:
        if self.kind == "args":
            return "arg:" + ",".join(map(str, self.args))
        return self.kind


@dataclass(frozen=True)
class MutationSpecTable:
    entries: dict[tuple[str, str], Effect] = field(default_factory=dict)
    heuristic_mutators: frozenset[str] = DEFAULT_MUTATORS
    heuristic_pure: frozenset[str] = DEFAULT_PURE

    def __post_init__(self):
        overlap = self.heuristic_mutators & self.heuristic_pure
        if overlap:
            raise SpecTableError(f"names both mutating and pure: {sorted(overlap)}")

    @property
    def libraries(self) -> frozenset[str]:
        return frozenset(lib for lib, _ in self.entries)

    def lookup(self, library: str, name: str) -> Effect | None:
        """Exact entry first, then fnmatch patterns in file order."""
        exact = self.entries.get((library, name))
        if exact is not None:
            return exact
        for (lib, pattern), effect in self.entries.items():
            if lib == library and _is_pattern(pattern) and fnmatch.fnmatchcase(name, pattern):
                return effect
        return None

    @classmethod
    def parse(cls, text: str) -> MutationSpecTable:
        entries: dict[tuple[str, str], Effect] = {}
        mutators: set[str] = set()
        pure: set[str] = set()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in raw.split("\t")]
            if len(parts) != 3 or not all(parts):
                raise SpecTableError(f"line {lineno}: expected library<TAB>callable<TAB>effect")
            library, name, effect_text = parts
            try:
                effect = Effect.parse(effect_text)
            except SpecTableError as exc:
                raise SpecTableError(f"line {lineno}: {exc}") from None
            if library == HEURISTIC_LIBRARY:
                if effect.kind == "receiver":
                    mutators.add(name)
                elif effect.kind == "pure":
                    pure.add(name)
                else:
                    raise SpecTableError(f"line {lineno}: heuristic rows take pure or receiver")
                continue
            entries[(library, name)] = effect
        return cls(
            entries,
            frozenset(mutators) if mutators else DEFAULT_MUTATORS,
            frozenset(pure) if pure else DEFAULT_PURE,
        )

    @classmethod
    def load(cls, path) -> MutationSpecTable:
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    @classmethod
    def default(cls) -> MutationSpecTable:
        text = resources.files("nbquality.data").joinpath("default_specs.tsv").read_text("utf-8")
        return cls.parse(text)

    def dumps(self) -> str:
        rows = [f"{HEURISTIC_LIBRARY}\t{n}\treceiver" for n in sorted(self.heuristic_mutators)]
        rows += [f"{HEURISTIC_LIBRARY}\t{n}\tpure" for n in sorted(self.heuristic_pure)]
        rows += [f"{lib}\t{name}\t{eff}" for (lib, name), eff in self.entries.items()]
        return "\n".join(rows) + "\n"


def _is_pattern(name: str) -> bool:
    return any(ch in name for ch in "*?[")


_DEFAULT_TABLE: MutationSpecTable | None = None


def default_table() -> MutationSpecTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = MutationSpecTable.default()
    return _DEFAULT_TABLE


@dataclass(frozen=True)
class CallEffect:
    resolution: Resolution
    mutated: frozenset[str] = frozenset()


def root_name(expr: ast.AST) -> str | None:
    """``a.b.c[0]`` -> ``"a"``; None when the chain does not bottom out in a name."""
    while isinstance(expr, (ast.Attribute, ast.Subscript, ast.Starred)):
        expr = expr.value
    return expr.id if isinstance(expr, ast.Name) else None


def dotted_parts(expr: ast.AST) -> list[str] | None:
    parts = []
    while isinstance(expr, ast.Attribute):
        parts.append(expr.attr)
        expr = expr.value
    if not isinstance(expr, ast.Name):
        return None
    parts.append(expr.id)
    return parts[::-1]


class ModuleContext:
    """Whole-module facts needed to resolve calls: imports, local defs, value origins.

    Facts are collected flow-insensitively over the entire module, so an
    import inside one notebook cell is visible to every other cell.
    """

    def __init__(self, tree: ast.AST | None = None, table: MutationSpecTable | None = None,
                 exclude: Iterable[ast.AST] = ()):
        self.table = table or default_table()
        self.imports: dict[str, tuple[str, str]] = {}
        self.functions: dict[str, list[ast.FunctionDef | ast.AsyncFunctionDef]] = {}
        self.origins: dict[str, tuple[str, str]] = {}
        self._param_cache: dict[tuple[int, Policy], frozenset[str]] = {}
        if tree is not None:
            self._collect(tree, {id(n) for n in exclude})

    @classmethod
    def from_source(cls, source: str, table: MutationSpecTable | None = None) -> ModuleContext:
        return cls(ast.parse(source), table)

    def _collect(self, tree: ast.AST, excluded: set[int]) -> None:
        conflicting: set[str] = set()
        for node in ast.walk(tree):
            if isinstance(node, ast.Import):
                for alias in node.names:
                    head, _, rest = alias.name.partition(".")
                    if alias.asname:
                        self.imports[alias.asname] = (head, rest)
                    else:
                        self.imports[head] = (head, "")
            elif isinstance(node, ast.ImportFrom):
                if node.level or not node.module:
                    continue
                head, _, rest = node.module.partition(".")
                for alias in node.names:
                    if alias.name == "*":
                        continue
                    path = f"{rest}.{alias.name}" if rest else alias.name
                    self.imports[alias.asname or alias.name] = (head, path)
            elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                if id(node) not in excluded:
                    self.functions.setdefault(node.name, []).append(node)
        # second pass: origins depend on the complete import map
        for node in ast.walk(tree):
            if (isinstance(node, ast.Assign) and len(node.targets) == 1
                    and isinstance(node.targets[0], ast.Name)
                    and isinstance(node.value, ast.Call)):
                name = node.targets[0].id
                origin = self.library_callable(node.value.func)
                if origin is None or name in conflicting:
                    continue
                if self.origins.get(name, origin) != origin:
                    conflicting.add(name)
                    del self.origins[name]
                else:
                    self.origins[name] = origin

    def library_callable(self, func: ast.AST) -> tuple[str, str] | None:
        """Map a callee expression to ``(library, dotted callable)`` through the imports."""
        parts = dotted_parts(func)
        if not parts or parts[0] not in self.imports:
            return None
        lib, path = self.imports[parts[0]]
        rest = ".".join(p for p in [path, *parts[1:]] if p)
        return (lib, rest) if rest else None

    def is_module_alias(self, name: str | None) -> bool:
        return name is not None and name in self.imports


def _arg_roots(call: ast.Call, ctx: ModuleContext) -> set[str]:
    names = set()
    for arg in [*call.args, *(k.value for k in call.keywords)]:
        r = root_name(arg)
        if r is not None and not ctx.is_module_alias(r):
            names.add(r)
    return names


def _receiver_root(call: ast.Call, ctx: ModuleContext) -> str | None:
    if not isinstance(call.func, ast.Attribute):
        return None
    r = root_name(call.func.value)
    return None if ctx.is_module_alias(r) else r


def _apply_effect(effect: Effect, call: ast.Call, ctx: ModuleContext) -> frozenset[str]:
    if effect.kind == "pure":
        return frozenset()
    if effect.kind == "receiver":
        r = _receiver_root(call, ctx)
        return frozenset() if r is None else frozenset({r})
    out = set()
    for i in effect.args:
        if i < len(call.args):
            r = root_name(call.args[i])
            if r is not None and not ctx.is_module_alias(r):
                out.add(r)
    return frozenset(out)


def _positional_params(fdef: ast.FunctionDef | ast.AsyncFunctionDef) -> list[str]:
    return [a.arg for a in (*fdef.args.posonlyargs, *fdef.args.args)]


def param_names(fdef: ast.FunctionDef | ast.AsyncFunctionDef | ast.Lambda) -> list[str]:
    a = fdef.args
    names = [x.arg for x in (*a.posonlyargs, *a.args)]
    if a.vararg:
        names.append(a.vararg.arg)
    names += [x.arg for x in a.kwonlyargs]
    if a.kwarg:
        names.append(a.kwarg.arg)
    return names


def _mutated_params(fdef, ctx: ModuleContext, table: MutationSpecTable,
                    policy: Policy) -> frozenset[str]:
    key = (id(fdef), policy)
    cached = ctx._param_cache.get(key)
    if cached is not None:
        return cached
    params = set(param_names(fdef))
    mutated: set[str] = set()
    for stmt in iter_statements(fdef.body):
        facts = analyze_statement(stmt, ctx, table, allow_local=False)
        mutated |= facts.update(policy)
    result = frozenset(mutated & params)
    ctx._param_cache[key] = result
    return result


def _local_body_effect(call: ast.Call, ctx: ModuleContext, table: MutationSpecTable,
                       policy: Policy) -> frozenset[str]:
    out: set[str] = set()
    for fdef in ctx.functions[call.func.id]:
        hit = _mutated_params(fdef, ctx, table, policy)
        if not hit:
            continue
        positional = _positional_params(fdef)
        vararg = fdef.args.vararg.arg if fdef.args.vararg else None
        for i, arg in enumerate(call.args):
            if isinstance(arg, ast.Starred):
                break
            if i < len(positional):
                name = positional[i]
            else:
                name = vararg
            if name in hit:
                r = root_name(arg)
                if r is not None:
                    out.add(r)
        for kw in call.keywords:
            if kw.arg is not None and kw.arg in hit:
                r = root_name(kw.value)
                if r is not None:
                    out.add(r)
    return frozenset(out)


def _inplace_flag(call: ast.Call) -> bool:
    # pandas-style ``inplace=True``
    return any(k.arg == "inplace" and isinstance(k.value, ast.Constant) and k.value.value is True
               for k in call.keywords)


def resolve_call_effect(call: ast.Call, ctx: ModuleContext, table: MutationSpecTable | None,
                        policy: Policy, *, allow_local: bool = True) -> CallEffect:
    table = table or ctx.table
    func = call.func

    if allow_local and isinstance(func, ast.Name) and func.id in ctx.functions:
        return CallEffect(Resolution.LOCAL_BODY, _local_body_effect(call, ctx, table, policy))

    effect = None
    target = ctx.library_callable(func)
    if target is not None:
        effect = table.lookup(*target)
    elif isinstance(func, ast.Name) and func.id not in ctx.imports:
        effect = table.lookup(BUILTINS_LIBRARY, func.id)
    elif (isinstance(func, ast.Attribute) and isinstance(func.value, ast.Name)
          and func.value.id in ctx.origins):
        lib, made_by = ctx.origins[func.value.id]
        effect = table.lookup(lib, f"{made_by}().{func.attr}")
    if effect is not None:
        return CallEffect(Resolution.SPEC_TABLE, _apply_effect(effect, call, ctx))

    if isinstance(func, ast.Attribute) and not ctx.is_module_alias(root_name(func.value)):
        if func.attr in table.heuristic_mutators or _inplace_flag(call):
            r = _receiver_root(call, ctx)
            return CallEffect(Resolution.HEURISTIC, frozenset({r}) if r else frozenset())
        if func.attr in table.heuristic_pure:
            return CallEffect(Resolution.HEURISTIC)

    if policy is Policy.OPTIMISTIC:
        return CallEffect(Resolution.UNKNOWN)
    names = _arg_roots(call, ctx)
    r = _receiver_root(call, ctx)
    if r is not None:
        names.add(r)
    return CallEffect(Resolution.UNKNOWN, frozenset(names))


# --- statement classification -------------------------------------------------

_COMPOUND = (ast.If, ast.For, ast.AsyncFor, ast.While, ast.With, ast.AsyncWith, ast.Try)
_SCOPE_DEFS = (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)
_TRY_STAR = getattr(ast, "TryStar", None)
_MATCH = getattr(ast, "Match", None)
_MATCH_CASE = getattr(ast, "match_case", None)


def iter_statements(body: list[ast.stmt]) -> Iterator[ast.AST]:
    """Yield the statements of a body in source order, descending into compound
    statements but not into nested function or class bodies.

    Except handlers and match cases are yielded as statements of their own;
    ``try`` itself carries no expression and is not.
    """
    for node in body:
        if isinstance(node, ast.Try) or (_TRY_STAR and isinstance(node, _TRY_STAR)):
            yield from iter_statements(node.body)
            for h in node.handlers:
                yield h
                yield from iter_statements(h.body)
            yield from iter_statements(node.orelse)
            yield from iter_statements(node.finalbody)
            continue
        yield node
        if isinstance(node, _SCOPE_DEFS):
            continue
        if _MATCH and isinstance(node, _MATCH):
            for case in node.cases:
                yield case
                yield from iter_statements(case.body)
            continue
        for attr in ("body", "orelse"):
            yield from iter_statements(getattr(node, attr, []) or [])


@dataclass(frozen=True)
class StatementFacts:
    kind: str
    reads: frozenset[str]
    def_set: frozenset[str]
    update_opt: frozenset[str]
    update_cons: frozenset[str]

    def update(self, policy: Policy) -> frozenset[str]:
        return self.update_opt if policy is Policy.OPTIMISTIC else self.update_cons


class _ExprScan(ast.NodeVisitor):
    def __init__(self):
        self.reads: set[str] = set()
        self.walrus: set[str] = set()
        self.calls: list[ast.Call] = []
        self.hidden: set[str] = set()
        self._in_lambda = 0

    def visit_Name(self, node):
        if isinstance(node.ctx, ast.Load):
            self.reads.add(node.id)

    def visit_NamedExpr(self, node):
        self.walrus.add(node.target.id)
        self.visit(node.value)

    def visit_Call(self, node):
        if not self._in_lambda:
            self.calls.append(node)
        self.generic_visit(node)

    def visit_Lambda(self, node):
        self.hidden.update(param_names(node))
        self._in_lambda += 1
        self.generic_visit(node)
        self._in_lambda -= 1

    def _comp(self, node):
        for gen in node.generators:
            for n in ast.walk(gen.target):
                if isinstance(n, ast.Name):
                    self.hidden.add(n.id)
        self.generic_visit(node)

    visit_ListComp = visit_SetComp = visit_DictComp = visit_GeneratorExp = _comp


def _classify_target(t: ast.AST, defs: set[str], updates: set[str]) -> None:
    if isinstance(t, ast.Name):
        defs.add(t.id)
    elif isinstance(t, (ast.Tuple, ast.List)):
        for e in t.elts:
            _classify_target(e, defs, updates)
    elif isinstance(t, ast.Starred):
        _classify_target(t.value, defs, updates)
    elif isinstance(t, (ast.Attribute, ast.Subscript)):
        r = root_name(t)
        if r is not None:
            updates.add(r)


def _pattern_captures(pattern: ast.AST) -> set[str]:
    names = set()
    for n in ast.walk(pattern):
        for attr in ("name", "rest"):
            v = getattr(n, attr, None)
            if isinstance(v, str):
                names.add(v)
    return names


def _statement_parts(node: ast.AST):
    """(kind, assign targets, aug/del targets, evaluated expressions, extra defs)."""
    targets: list[ast.AST] = []
    upd_targets: list[ast.AST] = []
    exprs: list[ast.AST] = []
    defs: set[str] = set()
    kind = "other"

    def any_target(types):
        return any(isinstance(x, types) for t in targets for x in ast.walk(t))

    if isinstance(node, ast.Assign):
        targets, exprs = list(node.targets), [node.value]
        kind = ("subscript_assign" if any_target(ast.Subscript)
                else "attribute_assign" if any_target(ast.Attribute) else "assign")
    elif isinstance(node, ast.AnnAssign):
        if node.value is not None:
            targets, exprs = [node.target], [node.value]
        kind = ("subscript_assign" if isinstance(node.target, ast.Subscript)
                else "attribute_assign" if isinstance(node.target, ast.Attribute) else "assign")
    elif isinstance(node, ast.AugAssign):
        upd_targets, exprs, kind = [node.target], [node.value], "aug_assign"
    elif isinstance(node, (ast.For, ast.AsyncFor)):
        targets, exprs, kind = [node.target], [node.iter], "control"
    elif isinstance(node, (ast.With, ast.AsyncWith)):
        for item in node.items:
            exprs.append(item.context_expr)
            if item.optional_vars is not None:
                targets.append(item.optional_vars)
        kind = "control"
    elif isinstance(node, ast.Delete):
        for t in node.targets:
            if isinstance(t, ast.Name):
                defs.add(t.id)
            else:
                upd_targets.append(t)
    elif isinstance(node, (ast.Import, ast.ImportFrom)):
        for alias in node.names:
            if alias.name != "*":
                defs.add(alias.asname or alias.name.split(".")[0])
        kind = "import"
    elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
        defs.add(node.name)
        exprs = [*node.decorator_list, *node.args.defaults,
                 *(d for d in node.args.kw_defaults if d is not None)]
    elif isinstance(node, ast.ClassDef):
        defs.add(node.name)
        exprs = [*node.decorator_list, *node.bases, *(k.value for k in node.keywords)]
    elif isinstance(node, ast.Return):
        exprs, kind = [node.value] if node.value else [], "return"
    elif isinstance(node, ast.Expr):
        exprs = [node.value]
        kind = "call_stmt" if isinstance(node.value, ast.Call) else "other"
    elif isinstance(node, (ast.If, ast.While)):
        exprs, kind = [node.test], "control"
    elif isinstance(node, ast.Raise):
        exprs, kind = [e for e in (node.exc, node.cause) if e is not None], "control"
    elif isinstance(node, ast.Assert):
        exprs = [e for e in (node.test, node.msg) if e is not None]
    elif isinstance(node, ast.ExceptHandler):
        exprs = [node.type] if node.type is not None else []
        if node.name:
            defs.add(node.name)
        kind = "control"
    elif isinstance(node, (ast.Break, ast.Continue)):
        kind = "control"
    elif _MATCH and isinstance(node, _MATCH):
        exprs, kind = [node.subject], "control"
    elif _MATCH_CASE and isinstance(node, _MATCH_CASE):
        defs |= _pattern_captures(node.pattern)
        exprs = [n.value for n in ast.walk(node.pattern) if isinstance(n, ast.MatchValue)]
        if node.guard is not None:
            exprs.append(node.guard)
        kind = "control"
    return kind, targets, upd_targets, exprs, defs


def analyze_statement(node: ast.AST, ctx: ModuleContext, table: MutationSpecTable | None = None,
                      *, allow_local: bool = True) -> StatementFacts:
    """Reads, DEF and both UPDATE sets of one statement (header only for compound ones)."""
    table = table or ctx.table
    kind, targets, upd_targets, exprs, defs = _statement_parts(node)

    scan = _ExprScan()
    for e in (*targets, *upd_targets, *exprs):
        scan.visit(e)

    updates: set[str] = set()
    for t in targets:
        _classify_target(t, defs, updates)
    for t in upd_targets:
        r = root_name(t)
        if r is not None:
            updates.add(r)
    if isinstance(node, ast.AugAssign) and isinstance(node.target, ast.Name):
        scan.reads.add(node.target.id)
    defs |= scan.walrus

    opt, cons = set(updates), set(updates)
    for call in scan.calls:
        opt |= resolve_call_effect(call, ctx, table, Policy.OPTIMISTIC,
                                   allow_local=allow_local).mutated
        cons |= resolve_call_effect(call, ctx, table, Policy.CONSERVATIVE,
                                    allow_local=allow_local).mutated

    hidden = scan.hidden
    defs_f = frozenset(defs)
    opt_f = frozenset(opt - defs - hidden)
    cons_f = frozenset(cons - defs - hidden)
    return StatementFacts(kind, frozenset(scan.reads - hidden), defs_f, opt_f, cons_f | opt_f)


def classify_statement(node: ast.AST, table: MutationSpecTable | None = None,
                       policy: Policy = Policy.OPTIMISTIC,
                       ctx: ModuleContext | None = None) -> tuple[frozenset[str], frozenset[str]]:
    """``(DEF, UPDATE)`` of one statement under ``policy``.

    Without a module context, calls are resolved only through the table and
    heuristics.
    """
    if isinstance(node, str):
        node = ast.parse(node).body[0]
    ctx = ctx or ModuleContext(table=table)
    facts = analyze_statement(node, ctx, table)
    return facts.def_set, facts.update(Policy(policy))
