"""Near-miss clones across three notebooks that copy the same cleaning cell.

Run: python3 demos/04_clones.py
"""

import json
import tempfile
from pathlib import Path

from nbquality import detect_clone_classes, extract_blocks, filter_high_impact, load_source_unit

CLEANING = [f"df['c{i}'] = df['c{i}'].astype(float).round({i % 3})" for i in range(12)]


def notebook(lines):
    cell = {"cell_type": "code", "source": "\n".join(lines)}
    return json.dumps({"cells": [cell], "metadata": {}, "nbformat": 4})


with tempfile.TemporaryDirectory() as tmp:
    units = []
    for k in range(3):
        lines = list(CLEANING)
        lines[k * 4] = f"df['c{k * 4}'] = df['c{k * 4}'].fillna(0)  # tweaked in copy {k}"
        p = Path(tmp) / f"analysis_{k}.ipynb"
        p.write_text(notebook(lines))
        units.append(load_source_unit(p))
    fragments = [f for u in units for f in extract_blocks(u)]

classes = detect_clone_classes(fragments, threshold=0.7)
for c in classes:
    print(f"{c.id}: {len(c.instances)} instances, {c.min_lines} lines, "
          f"similarity {c.min_similarity:.2f}..{c.mean_similarity:.2f}, exact={c.exact}")
    for f in c.instances:
        print(f"    {Path(f.path).name} lines {f.start}-{f.end} (cell {f.origin[0]})")
print("high impact:", [c.id for c in filter_high_impact(classes)])
