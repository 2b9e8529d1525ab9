"""Command line entry point: ``nbquality analyze|clones|convert|docstats``.

Exit status is 0 on success, 1 on a configuration or I/O error and 2 when a
corpus holds no analyzable files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path, PurePosixPath

from .cfg import build_cfg, parse_scopes
from .clones import (
    detect_clone_classes,
    detect_file_clones,
    export_for_nicad,
    extract_blocks,
    extract_file_fragment,
    filter_high_impact,
)
from .docstats import compute_doc_stats
from .ingest import IngestError, SourceUnit, load_source_unit
from .mutation import SpecTableError
from .report import (
    AnalysisConfig,
    ConfigError,
    EmptyCorpus,
    aggregate_stats,
    analyze_corpus,
    clone_class_dict,
    discover,
    emit_report,
)

log = logging.getLogger("nbquality")

EXIT_OK, EXIT_ERROR, EXIT_EMPTY = 0, 1, 2


def _write(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _json(doc) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode()


def _dump_cfgs(roots: list[str], outdir: str, config: AnalysisConfig) -> None:
    target = Path(outdir)
    target.mkdir(parents=True, exist_ok=True)
    table = config.load_table()
    for root in roots:
        for path in discover(root):
            try:
                scopes = parse_scopes(load_source_unit(path), table)
            except (SyntaxError, IngestError, ValueError):
                continue
            for i, scope in enumerate(scopes):
                name = f"{path.stem}.{i:03d}.{scope.name.strip('<>')}.dot"
                (target / name).write_text(build_cfg(scope).to_dot(), encoding="utf-8")


def cmd_analyze(args) -> int:
    config = AnalysisConfig(
        policy=args.policy, sample=args.sample, seed=args.seed, workers=args.workers,
        spec_table=args.spec_table, clones=not args.no_clones,
    )
    reports = [analyze_corpus(root, config) for root in args.roots]
    if args.dump_cfg:
        _dump_cfgs(args.roots, args.dump_cfg, config)
    _write(emit_report(reports if len(reports) > 1 else reports[0], args.format), args.out)
    return EXIT_OK


def _load_units(roots: list[str]) -> list[SourceUnit]:
    units = []
    for root in roots:
        base = Path(root) if Path(root).is_dir() else Path(root).parent
        prefix = f"{base.name}/" if len(roots) > 1 else ""
        for p in discover(root):
            try:
                unit = load_source_unit(p)
            except (IngestError, OSError, UnicodeError) as exc:
                log.warning("skipping %s: %s", p, exc)
                continue
            units.append(replace(unit, path=PurePosixPath(prefix + p.relative_to(base).as_posix())))
    return units


def cmd_clones(args) -> int:
    config = AnalysisConfig(threshold=args.threshold, min_lines=args.min_lines,
                            min_instances=args.min_instances, min_statements=args.min_statements)
    config.validate()
    units = _load_units(args.roots)
    if not units:
        raise EmptyCorpus("no .py or .ipynb files found")
    blocks, files = [], []
    for unit in units:
        try:
            blocks += extract_blocks(unit, config.min_statements)
        except SyntaxError:
            log.warning("skipping unparsable %s", unit.path)
            continue
        frag = extract_file_fragment(unit)
        if frag is not None:
            files.append(frag)
    block_classes = detect_clone_classes(blocks, config.threshold)
    file_classes, diffs = [], {}
    if args.file_level:
        file_classes, diffs = detect_file_clones(files, config.threshold)
    high = filter_high_impact(block_classes, config.min_lines, config.min_instances,
                              file_classes or None)
    doc = {
        "config": config.echo(),
        "block": [clone_class_dict(c) for c in block_classes],
        "high_impact": [c.id for c in high],
    }
    if args.file_level:
        doc["file"] = [clone_class_dict(c) for c in file_classes]
        doc["file_diffs"] = {k: [asdict(d) for d in v] for k, v in sorted(diffs.items())}
    if args.export_nicad:
        doc["exported"] = [str(p) for p in export_for_nicad(units, args.export_nicad)]
    _write(_json(doc), args.out)
    return EXIT_OK


def cmd_convert(args) -> int:
    unit = load_source_unit(args.notebook)
    if not unit.kernel_supported:
        log.error("%s: language %r is not Python", args.notebook, unit.language)
        return EXIT_ERROR
    _write(unit.text.encode("utf-8"), args.out)
    return EXIT_OK


def cmd_docstats(args) -> int:
    units = []
    for root in args.roots:
        files = discover(root)
        base = Path(root) if Path(root).is_dir() else Path(root).parent
        for p in files:
            rel = p.relative_to(base).as_posix()
            try:
                units.append({"path": rel, **asdict(compute_doc_stats(load_source_unit(p)))})
            except IngestError as exc:
                units.append({"path": rel, "excluded": str(exc)})
    if not units:
        raise EmptyCorpus("no .py or .ipynb files found")
    ok = [u for u in units if "excluded" not in u]
    fields = ("markdown_cell_count", "markdown_word_count", "inline_comment_count",
              "code_loc", "code_cell_count")
    doc = {"units": units, "aggregates": {f: aggregate_stats(u[f] for u in ok) for f in fields}}
    _write(_json(doc), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbquality", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="lifetimes, mutation metrics, doc stats and clones")
    p.add_argument("roots", nargs="+")
    p.add_argument("--policy", choices=["optimistic", "conservative", "both"], default="both")
    p.add_argument("--sample", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--spec-table", help="mutation spec table overriding the built-in one")
    p.add_argument("--no-clones", action="store_true", help="skip clone detection")
    p.add_argument("--dump-cfg", metavar="DIR", help="write one DOT file per scope")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("clones", help="block- and file-level clone classes")
    p.add_argument("roots", nargs="+")
    p.add_argument("--threshold", type=float, default=0.7)
    p.add_argument("--min-lines", type=int, default=10)
    p.add_argument("--min-instances", type=int, default=3)
    p.add_argument("--min-statements", type=int, default=3)
    p.add_argument("--file-level", action="store_true")
    p.add_argument("--export-nicad", metavar="DIR")
    p.add_argument("--out")
    p.set_defaults(func=cmd_clones)

    p = sub.add_parser("convert", help="print a notebook as an analyzable script")
    p.add_argument("notebook")
    p.add_argument("--out")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("docstats", help="Markdown, comment and LoC counts")
    p.add_argument("roots", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_docstats)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EmptyCorpus as exc:
        log.error("%s", exc)
        return EXIT_EMPTY
    except (ConfigError, SpecTableError, IngestError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR
