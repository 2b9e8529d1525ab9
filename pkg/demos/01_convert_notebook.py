"""Turn a notebook into an analyzable script and trace lines back to cells.

Run: python3 demos/01_convert_notebook.py
"""

import json
import tempfile
from pathlib import Path

from nbquality import load_source_unit

cells = [
    {"cell_type": "markdown", "source": "# Loading\nRead the raw numbers."},
    {"cell_type": "code", "source": "%matplotlib inline\nimport statistics\nvalues = [4, 8, 15]"},
    {"cell_type": "code", "source": ""},
    {"cell_type": "code", "source": "!echo done\nvalues.append(16)\nprint(statistics.mean(values))"},
]
notebook = {"cells": cells, "metadata": {"kernelspec": {"language": "python"}}, "nbformat": 4}

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.ipynb"
    path.write_text(json.dumps(notebook))
    unit = load_source_unit(path)

print("converted script:\n")
for n, line in enumerate(unit.text.splitlines(), 1):
    where = unit.line_map.get(n)
    tag = f"cell {where.cell} line {where.line}" if where else "synthetic"
    print(f"{n:3d}  {line:<40} <- {tag}")

# Directive lines became comments, so every cell line keeps its own script line.
# The empty cell got a ``pass`` placeholder that no metric counts.
