"""Analyze a directory of scripts and notebooks and summarize it.

Run: python3 demos/05_corpus_report.py [DIR]
(defaults to the test fixture corpus)
"""

import sys
from pathlib import Path

from nbquality import AnalysisConfig, analyze_corpus

root = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parents[1] / "tests" / "fixtures" / "corpus"
report = analyze_corpus(root, AnalysisConfig(workers=2))

print(f"{len(report.included)} analyzed, {len(report.excluded)} excluded")
for u in report.excluded:
    print(f"  skipped {u.path}: {u.excluded}")

aggregates = report.aggregates()
print(f"\n{'metric':<28}{'n':>4}{'min':>8}{'median':>8}{'mean':>8}{'max':>8}")
for name in ("code_loc", "markdown_word_count", "mutating_ratio_opt", "mutating_ratio_cons",
             "diffusion_normalized_opt", "variable_lifetime"):
    s = aggregates[name]
    print(f"{name:<28}{s['n']:>4}{s['min']:>8.2f}{s['median']:>8.2f}{s['mean']:>8.2f}{s['max']:>8.2f}")

print(f"\nblock clone classes: {len(report.block_classes)}, file-level: {len(report.file_classes)}")
