import json
from pathlib import Path

import pytest

from nbquality.ingest import parse_script

FIXTURES = Path(__file__).parent / "fixtures"
CORPUS = FIXTURES / "corpus"
NOTEBOOKS = FIXTURES / "notebooks"
OTHER = FIXTURES / "other"

GROUPED = """l = []
l.append(1)  # Mutation 1
l.append(2)  # Mutation 2
s = sum(l)
a = sum(l) / len(l)
m = max(l)
"""

SCATTERED = """l = []
s = sum(l)
l.append(1)  # Mutation 1 (+1)
a = sum(l) / len(l)
m = max(l)
l.append(2)  # Mutation 2 (+2)
"""


def script(text: str, name: str = "snippet.py"):
    return parse_script(Path(name), text)


def notebook_json(*cells, language="python") -> str:
    out = []
    for kind, src in cells:
        cell = {"cell_type": kind, "metadata": {}, "source": src}
        if kind == "code":
            cell["outputs"] = []
        out.append(cell)
    meta = {"kernelspec": {"language": language}} if language else {}
    return json.dumps({"cells": out, "metadata": meta, "nbformat": 4})


@pytest.fixture
def make_notebook(tmp_path):
    def make(*cells, language="python", name="nb.ipynb"):
        p = tmp_path / name
        p.write_text(notebook_json(*cells, language=language))
        return p
    return make


# --- acceptance summary -------------------------------------------------------

_criteria: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    item_marker = getattr(report, "_criterion", None)
    if item_marker is None:
        return
    n, title = item_marker
    ok = report.passed if report.when == "call" else not report.failed
    prev = _criteria.get(n, (title, True))[1]
    _criteria[n] = (title, prev and ok)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result()._criterion = marker.args


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        title, ok = _criteria[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")
