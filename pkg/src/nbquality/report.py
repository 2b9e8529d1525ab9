"""Corpus walking, per-file orchestration, summary statistics and report output."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path, PurePosixPath
from typing import Iterable, Sequence

from . import __version__
from .cfg import build_cfg, parse_scopes
from .clones import (
    CloneClass,
    Fragment,
    InstanceDiff,
    detect_clone_classes,
    detect_file_clones,
    extract_blocks,
    extract_file_fragment,
    filter_high_impact,
)
from .docstats import DocStats, compute_doc_stats
from .ingest import MalformedContainer, SourceUnit, load_source_unit
from .metrics import MetricsRecord, NonTermination, analyze_scope
from .mutation import MutationSpecTable, Policy, default_table

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUFFIXES = (".py", ".ipynb")

UNIT_METRICS = (
    "code_loc", "code_cell_count", "markdown_cell_count", "markdown_word_count",
    "inline_comment_count", "statement_count",
    "mutating_ratio_opt", "mutating_ratio_cons",
    "diffusion_opt", "diffusion_cons",
    "diffusion_normalized_opt", "diffusion_normalized_cons",
)
SCOPE_METRICS = (
    "mutating_ratio_opt", "mutating_ratio_cons",
    "diffusion_normalized_opt", "diffusion_normalized_cons",
)
CSV_COLUMNS = (
    "dataset", "path", "unit_kind", "scope", "scope_kind", "line", "statement_count",
    "mutating_count_opt", "mutating_count_cons", "mutating_ratio_opt", "mutating_ratio_cons",
    "diffusion_opt", "diffusion_cons", "diffusion_normalized_opt", "diffusion_normalized_cons",
)


class ConfigError(ValueError):
    pass


class EmptyCorpus(Exception):
    pass


@dataclass(frozen=True)
class AnalysisConfig:
    policy: str = "both"
    sample: int | None = None
    seed: int = 0
    threshold: float = 0.7
    min_lines: int = 10
    min_instances: int = 3
    min_statements: int = 3
    workers: int = 1
    spec_table: str | None = None
    clones: bool = True

    def validate(self) -> None:
        if self.policy not in ("optimistic", "conservative", "both"):
            raise ConfigError(f"unknown policy {self.policy!r}")
        if not 0 < self.threshold <= 1:
            raise ConfigError("threshold must lie in (0, 1]")
        if self.sample is not None and self.sample < 1:
            raise ConfigError("sample size must be positive")
        if self.min_lines < 1 or self.min_instances < 2 or self.min_statements < 1:
            raise ConfigError("clone size limits out of range")
        if self.workers < 1:
            raise ConfigError("workers must be positive")

    @property
    def policies(self) -> tuple[Policy, ...]:
        if self.policy == "both":
            return (Policy.OPTIMISTIC, Policy.CONSERVATIVE)
        return (Policy(self.policy),)

    def echo(self) -> dict:
        """Settings that affect results; worker count is deliberately absent."""
        d = asdict(self)
        d.pop("workers")
        return d

    def load_table(self) -> MutationSpecTable:
        return MutationSpecTable.load(self.spec_table) if self.spec_table else default_table()


# --- statistics ---------------------------------------------------------------

def nearest_rank(sorted_values: Sequence[float], q: float) -> float:
    """Smallest value with at least ``q`` of the data at or below it."""
    n = len(sorted_values)
    rank = max(1, math.ceil(q * n))
    return sorted_values[min(rank, n) - 1]


def aggregate_stats(values: Iterable[float | None]) -> dict:
    """n, min, q25, median, mean, q75, max, with nearest-rank quantiles."""
    vals = sorted(v for v in values if v is not None)
    if not vals:
        return {"n": 0, "min": None, "q25": None, "median": None,
                "mean": None, "q75": None, "max": None}
    return {
        "n": len(vals),
        "min": vals[0],
        "q25": nearest_rank(vals, 0.25),
        "median": nearest_rank(vals, 0.5),
        "mean": statistics.fmean(vals),
        "q75": nearest_rank(vals, 0.75),
        "max": vals[-1],
    }


# --- per-file analysis --------------------------------------------------------

@dataclass
class UnitRecord:
    path: str
    kind: str
    language: str
    excluded: str | None = None
    docstats: DocStats | None = None
    scopes: list[MetricsRecord] = field(default_factory=list)
    empty_scopes: int = 0

    def total(self, attr: str) -> int | None:
        vals = [getattr(s, attr) for s in self.scopes]
        if not vals or any(v is None for v in vals):
            return None
        return sum(vals)

    def summary(self) -> dict:
        n = sum(s.statement_count for s in self.scopes)
        out: dict = {"statement_count": n}
        for suffix in ("opt", "cons"):
            count = self.total(f"mutating_count_{suffix}")
            score = self.total(f"diffusion_{suffix}")
            out[f"mutating_count_{suffix}"] = count
            out[f"mutating_ratio_{suffix}"] = count / n if n and count is not None else None
            out[f"diffusion_{suffix}"] = score
            out[f"diffusion_normalized_{suffix}"] = (
                score / n if n and score is not None else None)
        if self.docstats is not None:
            out.update(asdict(self.docstats))
        return out

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "kind": self.kind,
            "language": self.language,
            "excluded": self.excluded,
            "empty_scopes": self.empty_scopes,
            "summary": self.summary() if self.excluded is None else None,
            "scopes": [asdict(s) for s in self.scopes],
        }


@dataclass
class FileResult:
    record: UnitRecord
    blocks: list[Fragment] = field(default_factory=list)
    file_fragment: Fragment | None = None


def analyze_unit(unit: SourceUnit, config: AnalysisConfig,
                 table: MutationSpecTable | None = None) -> FileResult:
    table = table or config.load_table()
    rec = UnitRecord(str(unit.path), unit.kind.value, unit.language)
    if not unit.kernel_supported:
        rec.excluded = f"unsupported kernel: {unit.language}"
        return FileResult(rec)
    try:
        scopes = parse_scopes(unit, table)
    except (SyntaxError, ValueError, RecursionError) as exc:
        rec.excluded = f"syntax error: {exc.msg if isinstance(exc, SyntaxError) else exc}"
        return FileResult(rec)
    rec.docstats = compute_doc_stats(unit)
    try:
        for scope in scopes:
            if not scope.statements:
                rec.empty_scopes += 1
                continue
            scope_rec = analyze_scope(scope, config.policies, build_cfg(scope))
            rec.scopes.append(scope_rec)
    except (NonTermination, RecursionError) as exc:
        rec.excluded = f"analysis failed: {exc}"
        rec.scopes, rec.docstats = [], None
        return FileResult(rec)
    result = FileResult(rec)
    if config.clones:
        result.blocks = extract_blocks(unit, config.min_statements)
        result.file_fragment = extract_file_fragment(unit)
    return result


def analyze_file(path: Path, rel: str, config: AnalysisConfig,
                 table: MutationSpecTable | None = None) -> FileResult:
    """Load and analyze one file; load failures become an excluded record."""
    kind = "notebook" if path.suffix.lower() == ".ipynb" else "script"
    try:
        unit = load_source_unit(path)
    except MalformedContainer as exc:
        return FileResult(UnitRecord(rel, kind, "unknown", excluded=f"malformed container: {exc}"))
    except (OSError, UnicodeError) as exc:
        return FileResult(UnitRecord(rel, kind, "unknown", excluded=f"io error: {exc}"))
    return analyze_unit(replace(unit, path=PurePosixPath(rel)), config, table)


def _analyze_job(args) -> FileResult:
    path, rel, config = args
    return analyze_file(path, rel, config)


# --- corpus -------------------------------------------------------------------

def discover(root) -> list[Path]:
    """``.py``/``.ipynb`` files under ``root`` in sorted order, skipping hidden
    directories such as ``.ipynb_checkpoints``."""
    root = Path(root)
    if root.is_file():
        return [root] if root.suffix.lower() in SUFFIXES else []
    found = []
    for p in root.rglob("*"):
        rel = p.relative_to(root)
        if any(part.startswith(".") for part in rel.parts):
            continue
        if p.is_file() and p.suffix.lower() in SUFFIXES:
            found.append(p)
    return sorted(found, key=lambda p: p.relative_to(root).as_posix())


def select_files(root, config: AnalysisConfig) -> list[Path]:
    files = discover(root)
    if config.sample is not None and config.sample < len(files):
        files = sorted(random.Random(config.seed).sample(files, config.sample))
    return files


@dataclass
class CorpusReport:
    root: str
    config: dict
    units: list[UnitRecord]
    block_classes: list[CloneClass] = field(default_factory=list)
    file_classes: list[CloneClass] = field(default_factory=list)
    high_impact: list[CloneClass] = field(default_factory=list)
    file_diffs: dict[str, list[InstanceDiff]] = field(default_factory=dict)
    tool_version: str = __version__

    @property
    def included(self) -> list[UnitRecord]:
        return [u for u in self.units if u.excluded is None]

    @property
    def excluded(self) -> list[UnitRecord]:
        return [u for u in self.units if u.excluded is not None]

    def aggregates(self) -> dict:
        units = self.included
        summaries = [u.summary() for u in units]
        out = {m: aggregate_stats(s.get(m) for s in summaries) for m in UNIT_METRICS}
        scopes = [s for u in units for s in u.scopes]
        for m in SCOPE_METRICS:
            out[f"scope_{m}"] = aggregate_stats(getattr(s, m) for s in scopes)
        out["variable_lifetime"] = aggregate_stats(
            v for s in scopes for v in s.lifetimes.values())
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": self.tool_version,
            "root": self.root,
            "config": self.config,
            "unit_count": len(self.units),
            "included_count": len(self.included),
            "excluded": [{"path": u.path, "reason": u.excluded} for u in self.excluded],
            "units": [u.to_dict() for u in self.units],
            "aggregates": self.aggregates(),
            "clones": {
                "block": [clone_class_dict(c) for c in self.block_classes],
                "file": [clone_class_dict(c) for c in self.file_classes],
                "high_impact": [c.id for c in self.high_impact],
                "file_diffs": {k: [asdict(d) for d in v]
                               for k, v in sorted(self.file_diffs.items())},
            },
        }


def clone_class_dict(c: CloneClass) -> dict:
    return {
        "id": c.id,
        "granularity": c.granularity,
        "exact": c.exact,
        "min_similarity": c.min_similarity,
        "mean_similarity": c.mean_similarity,
        "min_lines": c.min_lines,
        "instances": [
            {"path": f.path, "start": f.start, "end": f.end, "lines": len(f),
             "origin": list(f.origin) if f.origin else None}
            for f in c.instances
        ],
    }


def run_files(jobs: list[tuple[Path, str]], config: AnalysisConfig) -> list[FileResult]:
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_analyze_job, [(p, r, config) for p, r in jobs],
                                    chunksize=max(1, len(jobs) // (4 * config.workers))))
    else:
        table = config.load_table()
        results = [analyze_file(p, r, config, table) for p, r in jobs]
    return sorted(results, key=lambda r: r.record.path)


def analyze_corpus(root, config: AnalysisConfig | None = None) -> CorpusReport:
    """Analyze every script and notebook under ``root``.

    Output depends only on the file contents, the configuration and the
    sampling seed; per-file failures are recorded as exclusions.
    """
    config = config or AnalysisConfig()
    config.validate()
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(root)
    files = select_files(root, config)
    if not files:
        raise EmptyCorpus(f"no .py or .ipynb files under {root}")
    base = root if root.is_dir() else root.parent
    jobs = [(p, p.relative_to(base).as_posix()) for p in files]
    results = run_files(jobs, config)

    report = CorpusReport(root.name or str(root), config.echo(), [r.record for r in results])
    if config.clones:
        blocks = [f for r in results for f in r.blocks]
        report.block_classes = detect_clone_classes(blocks, config.threshold)
        report.file_classes, report.file_diffs = detect_file_clones(
            [r.file_fragment for r in results if r.file_fragment is not None], config.threshold)
        report.high_impact = filter_high_impact(
            report.block_classes, config.min_lines, config.min_instances, report.file_classes)
    return report


# --- output -------------------------------------------------------------------

def _json_bytes(doc: dict) -> bytes:
    return (json.dumps(doc, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode()


def csv_rows(report: CorpusReport) -> list[dict]:
    rows = []
    for u in report.included:
        for s in u.scopes:
            row = {"dataset": report.root, "path": u.path, "unit_kind": u.kind,
                   "scope": s.scope, "scope_kind": s.kind}
            for col in CSV_COLUMNS[5:]:
                row[col] = getattr(s, col)
            rows.append(row)
    return rows


def _csv_bytes(reports: Sequence[CorpusReport]) -> bytes:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for report in reports:
        for row in csv_rows(report):
            writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buf.getvalue().encode()


def emit_report(report: CorpusReport | Sequence[CorpusReport], format: str = "json") -> bytes:
    """Serialize one report, or several side by side.

    JSON keys are sorted; CSV has one row per (unit, scope) in
    :data:`CSV_COLUMNS` order, with empty cells for absent values.
    """
    reports = [report] if isinstance(report, CorpusReport) else list(report)
    if format == "csv":
        return _csv_bytes(reports)
    if format != "json":
        raise ValueError(f"unknown format {format!r}")
    if len(reports) == 1:
        return _json_bytes(reports[0].to_dict())
    return _json_bytes(compare_reports(reports))


def compare_reports(reports: Sequence[CorpusReport]) -> dict:
    """Side-by-side aggregates for several corpora."""
    docs = [r.to_dict() for r in reports]
    names: list[str] = []
    for d in docs:
        name, n = d["root"], 1
        while name in names:
            n += 1
            name = f"{d['root']}#{n}"
        names.append(name)
    metrics = sorted({m for d in docs for m in d["aggregates"]})
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "comparison": {m: {n: d["aggregates"][m] for n, d in zip(names, docs)} for m in metrics},
        "datasets": docs,
    }
