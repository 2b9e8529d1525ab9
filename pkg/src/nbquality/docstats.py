"""Documentation counts: Markdown cells and words, inline comments, non-empty LoC."""

from __future__ import annotations

import io
import re
import tokenize
from dataclasses import dataclass

from .ingest import Cell, SourceUnit, UnitKind, is_directive

_CODING_RE = re.compile(r"^[ \t\f]*#.*?coding[:=]")

_NON_CODE = {tokenize.COMMENT, tokenize.NL, tokenize.NEWLINE, tokenize.INDENT,
             tokenize.DEDENT, tokenize.ENDMARKER, tokenize.ENCODING}


@dataclass(frozen=True)
class DocStats:
    markdown_cell_count: int = 0
    markdown_word_count: int = 0
    inline_comment_count: int = 0
    code_loc: int = 0
    code_cell_count: int = 0


def count_words(text: str) -> int:
    """Maximal runs of non-whitespace; Markdown punctuation is part of a word."""
    return len(text.split())


def _tokens(lines: list[str]):
    """Tokenize as far as possible; a tokenizer error ends the stream early."""
    readline = io.StringIO("\n".join(lines) + "\n").readline
    try:
        yield from tokenize.generate_tokens(readline)
    except (tokenize.TokenError, IndentationError, SyntaxError):
        return


def scan_code(lines: list[str], skip_header: bool = False) -> tuple[int, int]:
    """``(comment count, non-empty code lines)`` for one block of source.

    Directive lines count as code, not comments. With ``skip_header``, a
    shebang on line 1 and an encoding declaration on line 1 or 2 are not
    counted as comments.
    """
    lines = list(lines)
    directive_lines = set()
    for i, ln in enumerate(lines):
        if is_directive(ln):
            directive_lines.add(i + 1)
            lines[i] = ""
    ignored = set()
    if skip_header:
        if lines and lines[0].startswith("#!"):
            ignored.add(1)
        for n in (1, 2):
            if n <= len(lines) and _CODING_RE.match(lines[n - 1]):
                ignored.add(n)

    comments = 0
    code_lines = set(directive_lines)
    for tok in _tokens(lines):
        if tok.type == tokenize.COMMENT:
            if tok.start[0] not in ignored:
                comments += 1
        elif tok.type not in _NON_CODE:
            for n in range(tok.start[0], tok.end[0] + 1):
                if n <= len(lines) and lines[n - 1].strip():
                    code_lines.add(n)
    return comments, len(code_lines)


def compute_doc_stats(unit: SourceUnit) -> DocStats:
    markdown = unit.markdown_cells
    code: tuple[Cell, ...] = unit.code_cells
    comments = loc = 0
    for cell in code:
        c, n = scan_code(list(cell.source), skip_header=unit.kind is UnitKind.SCRIPT)
        comments += c
        loc += n
    return DocStats(
        markdown_cell_count=len(markdown),
        markdown_word_count=sum(count_words("\n".join(c.source)) for c in markdown),
        inline_comment_count=comments,
        code_loc=loc,
        code_cell_count=len(code),
    )
