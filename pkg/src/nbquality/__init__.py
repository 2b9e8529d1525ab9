"""Code-quality measurements for Python scripts and Jupyter notebooks."""

__version__ = "0.1.0"

from .cfg import Cfg, Scope, Statement, build_cfg, parse_scopes  # noqa: E402
from .clones import (  # noqa: E402
    CloneClass,
    Fragment,
    detect_clone_classes,
    detect_file_clones,
    extract_blocks,
    filter_high_impact,
    normalize_code,
    similarity,
)
from .docstats import DocStats, compute_doc_stats  # noqa: E402
from .ingest import SourceUnit, convert_notebook_to_script, load_source_unit  # noqa: E402
from .metrics import (  # noqa: E402
    MetricsRecord,
    compute_lifetimes,
    mutating_statement_ratio,
    mutation_diffusion_score,
    normalize_score,
    run_dataflow,
)
from .mutation import MutationSpecTable, Policy, classify_statement, resolve_call_effect  # noqa: E402
from .report import AnalysisConfig, CorpusReport, aggregate_stats, analyze_corpus, emit_report  # noqa: E402

__all__ = [
    "AnalysisConfig", "Cfg", "CloneClass", "CorpusReport", "DocStats", "Fragment",
    "MetricsRecord", "MutationSpecTable", "Policy", "Scope", "SourceUnit", "Statement",
    "aggregate_stats", "analyze_corpus", "build_cfg", "classify_statement",
    "compute_doc_stats", "compute_lifetimes", "convert_notebook_to_script",
    "detect_clone_classes", "detect_file_clones", "emit_report", "extract_blocks",
    "filter_high_impact", "load_source_unit", "mutating_statement_ratio",
    "mutation_diffusion_score", "normalize_code", "normalize_score", "parse_scopes",
    "resolve_call_effect", "run_dataflow", "similarity",
]
