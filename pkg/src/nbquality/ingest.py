"""Loading scripts and notebooks into a uniform, line-traceable form.

Notebooks are converted into a plain Python script in which every code cell
becomes a function ``cell_NNNN`` whose body is the cell source indented one
level. ``SourceUnit.line_map`` records, for every emitted body line, the cell
and the 0-based line inside that cell it came from.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

INDENT = "    "
PLACEHOLDER = "pass"

_DIRECTIVE_RE = re.compile(r"^\s*(%%|%|!)")


class IngestError(Exception):
    """Base class for load failures."""


class MalformedContainer(IngestError):
    """The notebook file is not valid JSON or lacks a ``cells`` array."""


class UnsupportedKernel(IngestError):
    """The notebook declares a non-Python language."""


class UnitKind(str, Enum):
    SCRIPT = "script"
    NOTEBOOK = "notebook"


class CellKind(str, Enum):
    CODE = "code"
    MARKDOWN = "markdown"
    RAW = "raw"


@dataclass(frozen=True)
class LineOrigin:
    cell: int
    line: int


@dataclass(frozen=True)
class Cell:
    index: int
    kind: CellKind
    source: tuple[str, ...]
    outputs_present: bool = False


@dataclass(frozen=True)
class SourceUnit:
    path: Path
    kind: UnitKind
    cells: tuple[Cell, ...]
    text: str
    line_map: Mapping[int, LineOrigin] = field(default_factory=dict)
    language: str = "python"
    kernel_supported: bool = True

    @property
    def code_cells(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.kind is CellKind.CODE)

    @property
    def markdown_cells(self) -> tuple[Cell, ...]:
        return tuple(c for c in self.cells if c.kind is CellKind.MARKDOWN)

    def is_synthetic(self, lineno: int) -> bool:
        """True for emitted lines with no originating cell line (wrappers, placeholders)."""
        return lineno not in self.line_map

    def origin_text(self, lineno: int) -> str:
        origin = self.line_map[lineno]
        return self.cells[origin.cell].source[origin.line]


def cell_function_name(index: int) -> str:
    return f"cell_{index:04d}"


def is_directive(line: str) -> bool:
    return _DIRECTIVE_RE.match(line) is not None


def directive_comment(line: str) -> str:
    stripped = line.lstrip()
    return line[: len(line) - len(stripped)] + "# " + stripped


def _split_source(source) -> tuple[str, ...]:
    if isinstance(source, list):
        source = "".join(source)
    if not isinstance(source, str):
        raise MalformedContainer("cell source must be a string or list of strings")
    return tuple(source.splitlines())


def _needs_placeholder(lines: list[str]) -> bool:
    return all(not ln.strip() or ln.lstrip().startswith("#") for ln in lines)


def convert_notebook_to_script(
    cells: tuple[Cell, ...] | SourceUnit,
) -> tuple[str, dict[int, LineOrigin]]:
    """Render code cells as ``cell_NNNN`` functions.

    Returns the script text and a map from 1-based script line numbers to the
    originating cell line. Directive lines (``%``, ``%%``, ``!``) become
    comments so numbering stays aligned; cells with no code get a ``pass``
    placeholder that is left out of the map.
    """
    if isinstance(cells, SourceUnit):
        if cells.kind is not UnitKind.NOTEBOOK:
            raise ValueError("convert_notebook_to_script needs a notebook unit")
        cells = cells.cells
    out: list[str] = []
    line_map: dict[int, LineOrigin] = {}
    for cell in cells:
        if cell.kind is not CellKind.CODE:
            continue
        if out:
            out.append("")
        out.append(f"def {cell_function_name(cell.index)}():")
        body = [directive_comment(ln) if is_directive(ln) else ln for ln in cell.source]
        for i, line in enumerate(body):
            out.append(INDENT + line)
            line_map[len(out)] = LineOrigin(cell.index, i)
        if _needs_placeholder(body):
            out.append(INDENT + PLACEHOLDER)
    text = "\n".join(out) + ("\n" if out else "")
    return text, line_map


def _notebook_language(nb: dict) -> str | None:
    meta = nb.get("metadata") or {}
    kernelspec = meta.get("kernelspec") or {}
    info = meta.get("language_info") or {}
    for value in (kernelspec.get("language"), info.get("name")):
        if isinstance(value, str) and value:
            return value.lower()
    return None


def parse_notebook(path: Path, raw: str) -> SourceUnit:
    try:
        nb = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedContainer(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(nb, dict) or not isinstance(nb.get("cells"), list):
        raise MalformedContainer(f"{path}: missing 'cells' array")

    cells = []
    for i, raw_cell in enumerate(nb["cells"]):
        if not isinstance(raw_cell, dict) or "cell_type" not in raw_cell:
            raise MalformedContainer(f"{path}: cell {i} lacks 'cell_type'")
        try:
            kind = CellKind(raw_cell["cell_type"])
        except ValueError:
            kind = CellKind.RAW
        cells.append(
            Cell(
                index=i,
                kind=kind,
                source=_split_source(raw_cell.get("source", "")),
                outputs_present=bool(raw_cell.get("outputs")),
            )
        )
    cells = tuple(cells)

    language = _notebook_language(nb)
    if language is not None and not language.startswith("python"):
        return SourceUnit(path, UnitKind.NOTEBOOK, cells, "", {},
                          language=language, kernel_supported=False)
    text, line_map = convert_notebook_to_script(cells)
    return SourceUnit(path, UnitKind.NOTEBOOK, cells, text, line_map,
                      language=language or "unknown")


def parse_script(path: Path, raw: str) -> SourceUnit:
    lines = tuple(raw.splitlines())
    line_map = {n: LineOrigin(0, n - 1) for n in range(1, len(lines) + 1)}
    cell = Cell(0, CellKind.CODE, lines)
    return SourceUnit(path, UnitKind.SCRIPT, (cell,), raw, line_map)


def load_source_unit(path) -> SourceUnit:
    """Read a ``.py`` or ``.ipynb`` file.

    Non-Python notebooks are returned with ``kernel_supported=False`` and no
    analyzable text; analysis entry points refuse them with
    :class:`UnsupportedKernel`. I/O failures surface as :class:`OSError`.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in (".py", ".ipynb"):
        raise ValueError(f"unsupported file type: {path}")
    raw = path.read_text(encoding="utf-8", errors="replace")
    if suffix == ".ipynb":
        return parse_notebook(path, raw)
    return parse_script(path, raw)
