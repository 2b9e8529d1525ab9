"""Line-based near-miss clone detection.

Fragments are normalized (comments and blank lines dropped, whitespace
collapsed, indentation reduced to relative levels) and compared by the
longest common subsequence of whole lines divided by the longer fragment's
length. Fragments linked at or above the threshold are grouped into
classes by connected components.
"""

from __future__ import annotations

import ast
import difflib
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import SourceUnit, UnitKind

BLOCK = "block"
FILE = "file"

_COMPOUND = (ast.If, ast.For, ast.AsyncFor, ast.While, ast.With, ast.AsyncWith,
             ast.Try, ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef) + tuple(
    t for t in (getattr(ast, "Match", None), getattr(ast, "TryStar", None)) if t
)
_EPS = 1e-9


# --- normalization ------------------------------------------------------------

def _scan_line(line: str, open_quote: str | None) -> tuple[str, str | None]:
    """Drop a trailing comment and collapse whitespace outside string literals."""
    out: list[str] = []
    i, n = 0, len(line)
    gap = False
    while i < n:
        ch = line[i]
        if open_quote:
            if ch == "\\" and i + 1 < n:
                out.append(line[i:i + 2])
                i += 2
                continue
            if line.startswith(open_quote, i):
                out.append(open_quote)
                i += len(open_quote)
                open_quote = None
                continue
            out.append(ch)
            i += 1
            continue
        if ch == "#":
            break
        if ch in " \t\f":
            gap = True
            i += 1
            continue
        if gap and out:
            out.append(" ")
        gap = False
        if ch in "'\"":
            quote = ch * 3 if line.startswith(ch * 3, i) else ch
            out.append(quote)
            i += len(quote)
            open_quote = quote
            continue
        out.append(ch)
        i += 1
    if open_quote and len(open_quote) == 1 and not line.endswith("\\"):
        open_quote = None
    return "".join(out), open_quote


def _indent_width(line: str) -> int:
    expanded = line.expandtabs(8)
    return len(expanded) - len(expanded.lstrip())


def normalize_numbered(lines: Sequence[str], numbers: Sequence[int] | None = None
                       ) -> list[tuple[int, str]]:
    """Like :func:`normalize_code` but keeps each surviving line's number."""
    if numbers is None:
        numbers = range(1, len(lines) + 1)
    scanned = []
    open_quote = None
    for num, line in zip(numbers, lines):
        in_string = open_quote is not None
        text, open_quote = _scan_line(line, open_quote)
        if not text.strip():
            continue
        scanned.append((num, in_string, _indent_width(line), text))
    widths = sorted({w for _, in_str, w, _ in scanned if not in_str})
    level = {w: i for i, w in enumerate(widths)}
    out = []
    for num, in_str, w, text in scanned:
        out.append((num, text.rstrip() if in_str else " " * level[w] + text.strip()))
    return out


def normalize_code(lines: Sequence[str] | str) -> list[str]:
    """Normalized lines of a code fragment.

    Identifiers and literals are kept as written; indentation becomes one
    space per distinct indentation depth present in the fragment.
    """
    if isinstance(lines, str):
        lines = lines.splitlines()
    return [text for _, text in normalize_numbered(lines)]


# --- similarity ---------------------------------------------------------------

def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence, bit-parallel over ``b``."""
    if not a or not b:
        return 0
    masks: dict = {}
    for j, x in enumerate(b):
        masks[x] = masks.get(x, 0) | (1 << j)
    full = (1 << len(b)) - 1
    v = full
    for x in a:
        u = v & masks.get(x, 0)
        v = ((v + u) | (v - u)) & full
    return len(b) - bin(v).count("1")


@dataclass(frozen=True)
class Fragment:
    path: str
    granularity: str
    start: int
    end: int
    normalized_lines: tuple[str, ...]
    line_numbers: tuple[int, ...] = ()
    origin: tuple[int, int] | None = None

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.path, self.start, self.end)

    def __len__(self) -> int:
        return len(self.normalized_lines)


def similarity(a: Fragment | Sequence[str], b: Fragment | Sequence[str]) -> float:
    la = a.normalized_lines if isinstance(a, Fragment) else list(a)
    lb = b.normalized_lines if isinstance(b, Fragment) else list(b)
    longest = max(len(la), len(lb))
    if longest == 0:
        return 1.0
    return lcs_length(la, lb) / longest


# --- fragment extraction ------------------------------------------------------

def _count_statements(body: list[ast.stmt]) -> int:
    return sum(1 for top in body for n in ast.walk(top) if isinstance(n, ast.stmt))


def _bodies(node: ast.AST):
    for attr in ("body", "orelse", "finalbody"):
        seq = getattr(node, attr, None)
        if isinstance(seq, list) and seq and isinstance(seq[0], ast.stmt):
            yield seq
    for h in getattr(node, "handlers", []) or []:
        yield h.body
    for c in getattr(node, "cases", []) or []:
        yield c.body


def _make_fragment(unit: SourceUnit, granularity: str, start: int, end: int,
                   text_lines: list[str], origin=None) -> Fragment | None:
    numbers = [n for n in range(start, end + 1) if not unit.is_synthetic(n)]
    numbered = normalize_numbered([text_lines[n - 1] for n in numbers], numbers)
    if not numbered:
        return None
    if origin is None and unit.kind is UnitKind.NOTEBOOK:
        cells = [unit.line_map[n].cell for n, _ in numbered]
        origin = (min(cells), max(cells))
    return Fragment(str(unit.path), granularity, start, end,
                    tuple(t for _, t in numbered), tuple(n for n, _ in numbered), origin)


def extract_blocks(unit: SourceUnit, min_statements: int = 3,
                   tree: ast.Module | None = None) -> list[Fragment]:
    """Candidate blocks: cell bodies, top-level function bodies and maximal runs of
    simple statements, each holding at least ``min_statements`` statements."""
    if not unit.kernel_supported:
        return []
    tree = tree or ast.parse(unit.text)
    text_lines = unit.text.splitlines()
    spans: dict[tuple[int, int], tuple[int, int] | None] = {}

    def real(body):
        return [s for s in body if not unit.is_synthetic(s.lineno)]

    def add(body, origin=None):
        body = real(body)
        if body and _count_statements(body) >= min_statements:
            spans.setdefault((body[0].lineno, body[-1].end_lineno), origin)

    tops = []
    for node in tree.body:
        if unit.kind is UnitKind.NOTEBOOK and unit.is_synthetic(node.lineno):
            first = next((s for s in real(node.body)), None)
            if first is not None:
                cell = unit.line_map[first.lineno].cell
                add(node.body, (cell, cell))
            tops.extend(node.body)
        else:
            tops.append(node)
    for node in tops:
        if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            add(node.body)

    for node in ast.walk(tree):
        for body in _bodies(node):
            run: list[ast.stmt] = []
            for stmt in [*real(body), None]:
                if stmt is not None and not isinstance(stmt, _COMPOUND):
                    run.append(stmt)
                    continue
                if len(run) >= min_statements:
                    add(run)
                run = []

    out = []
    for (start, end), origin in sorted(spans.items()):
        frag = _make_fragment(unit, BLOCK, start, end, text_lines, origin)
        if frag is not None:
            out.append(frag)
    return out


def extract_file_fragment(unit: SourceUnit) -> Fragment | None:
    lines = unit.text.splitlines()
    if not lines or not unit.kernel_supported:
        return None
    return _make_fragment(unit, FILE, 1, len(lines), lines)


# --- grouping -----------------------------------------------------------------

@dataclass(frozen=True)
class CloneClass:
    id: str
    granularity: str
    instances: tuple[Fragment, ...]
    min_similarity: float
    mean_similarity: float
    exact: bool

    @property
    def min_lines(self) -> int:
        return min(len(f) for f in self.instances)

    @property
    def paths(self) -> frozenset[str]:
        return frozenset(f.path for f in self.instances)


def _overlaps(a: Fragment, b: Fragment) -> bool:
    return a.path == b.path and a.start <= b.end and b.start <= a.end


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def clone_links(fragments: Sequence[Fragment], threshold: float = 0.7
                ) -> dict[tuple[int, int], float]:
    """All index pairs ``(i, j)``, ``i < j``, whose similarity reaches ``threshold``.

    Fragments of the same file whose line ranges overlap are never linked.
    Candidates come from a prefix filter over ``(line, occurrence)`` tokens
    ordered rarest first: a pair sharing at least ``threshold * longer``
    lines must share a token in each fragment's prefix. Every candidate is
    then checked with an exact LCS.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    intern: dict[str, int] = {}
    seqs = [tuple(intern.setdefault(ln, len(intern)) for ln in f.normalized_lines)
            for f in fragments]
    token_sets = []
    for seq in seqs:
        seen: Counter = Counter()
        toks = []
        for x in seq:
            toks.append((x, seen[x]))
            seen[x] += 1
        token_sets.append(toks)
    freq = Counter(t for toks in token_sets for t in toks)
    for toks in token_sets:
        toks.sort(key=lambda t: (freq[t], t))

    order = sorted(range(len(fragments)), key=lambda i: (len(seqs[i]), i))
    index: dict[tuple[int, int], list[int]] = {}
    links: dict[tuple[int, int], float] = {}
    as_sets = [frozenset(t) for t in token_sets]
    for i in order:
        li = len(seqs[i])
        if li == 0:
            continue
        prefix = token_sets[i][: li - math.ceil(threshold * li - _EPS) + 1]
        candidates = set()
        for tok in prefix:
            candidates.update(index.get(tok, ()))
        for j in sorted(candidates):
            # j was indexed earlier, so len(seqs[j]) <= li
            if len(seqs[j]) < threshold * li - _EPS or _overlaps(fragments[i], fragments[j]):
                continue
            if len(as_sets[i] & as_sets[j]) < threshold * li - _EPS:
                continue
            common = lcs_length(seqs[j], seqs[i])
            if common >= threshold * li - _EPS:
                links[(min(i, j), max(i, j))] = common / li
        for tok in prefix:
            index.setdefault(tok, []).append(i)
    return links


def detect_clone_classes(fragments: Iterable[Fragment], threshold: float = 0.7
                         ) -> list[CloneClass]:
    frags = sorted(fragments, key=lambda f: (f.granularity, f.key))
    classes: list[CloneClass] = []
    for gran, group in itertools.groupby(frags, key=lambda f: f.granularity):
        group = list(group)
        links = clone_links(group, threshold)
        uf = _UnionFind(len(group))
        for i, j in links:
            uf.union(i, j)
        members: dict[int, list[int]] = {}
        for i in range(len(group)):
            members.setdefault(uf.find(i), []).append(i)
        comps = sorted((sorted(m) for m in members.values() if len(m) >= 2),
                       key=lambda m: group[m[0]].key)
        for n, comp in enumerate(comps, 1):
            sims = []
            for i, j in itertools.combinations(comp, 2):
                sims.append(links[(i, j)] if (i, j) in links else similarity(group[i], group[j]))
            inst = tuple(group[i] for i in comp)
            classes.append(CloneClass(
                id=f"{gran}-{n:04d}",
                granularity=gran,
                instances=inst,
                min_similarity=min(sims),
                mean_similarity=sum(sims) / len(sims),
                exact=all(f.normalized_lines == inst[0].normalized_lines for f in inst),
            ))
    return classes


def filter_high_impact(classes: Iterable[CloneClass], min_lines: int = 10,
                       min_instances: int = 3,
                       file_classes: Iterable[CloneClass] | None = None) -> list[CloneClass]:
    """Classes with at least ``min_instances`` instances of at least ``min_lines``
    normalized lines each. With ``file_classes``, classes lying entirely in
    files that are themselves file-level clones are dropped."""
    cloned_files: set[str] = set()
    for fc in file_classes or ():
        cloned_files |= fc.paths
    out = []
    for c in classes:
        if len(c.instances) < min_instances or c.min_lines < min_lines:
            continue
        if cloned_files and c.paths <= cloned_files:
            continue
        out.append(c)
    return out


# --- file level ---------------------------------------------------------------

@dataclass(frozen=True)
class LineDiff:
    base_line: int | None
    base_text: str | None
    other_line: int | None
    other_text: str | None


@dataclass(frozen=True)
class InstanceDiff:
    path: str
    lines: tuple[LineDiff, ...] = field(default_factory=tuple)


def diff_fragments(base: Fragment, other: Fragment) -> InstanceDiff:
    a, b = base.normalized_lines, other.normalized_lines
    out: list[LineDiff] = []
    matcher = difflib.SequenceMatcher(None, a, b, autojunk=False)
    for tag, i1, i2, j1, j2 in matcher.get_opcodes():
        if tag == "equal":
            continue
        for k in range(max(i2 - i1, j2 - j1)):
            i, j = i1 + k, j1 + k
            out.append(LineDiff(
                base.line_numbers[i] if i < i2 else None, a[i] if i < i2 else None,
                other.line_numbers[j] if j < j2 else None, b[j] if j < j2 else None,
            ))
    return InstanceDiff(other.path, tuple(out))


def detect_file_clones(units: Iterable[SourceUnit] | Iterable[Fragment], threshold: float = 0.7
                       ) -> tuple[list[CloneClass], dict[str, list[InstanceDiff]]]:
    """File-granularity classes plus, for near-miss classes, each instance's
    differing lines against the class's first instance."""
    frags = []
    for u in units:
        f = u if isinstance(u, Fragment) else extract_file_fragment(u)
        if f is not None:
            frags.append(f)
    classes = detect_clone_classes(frags, threshold)
    diffs = {}
    for c in classes:
        if c.exact:
            continue
        base = c.instances[0]
        diffs[c.id] = [diff_fragments(base, f) for f in c.instances[1:]]
    return classes, diffs


def export_for_nicad(units: Iterable[SourceUnit], outdir) -> list[Path]:
    """Write each analyzable unit as ``<outdir>/<stem>.py``; clashing stems get ``_<n>``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    used: set[str] = set()
    for unit in sorted(units, key=lambda u: str(u.path)):
        if not unit.kernel_supported:
            continue
        stem = Path(unit.path).stem
        name, n = stem, 1
        while name in used:
            n += 1
            name = f"{stem}_{n}"
        used.add(name)
        target = outdir / f"{name}.py"
        target.write_text(unit.text, encoding="utf-8")
        written.append(target)
    return written
