import json

import pytest

from skillsim.catalog import build_catalog


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


@pytest.fixture
def tiny_catalog():
    return build_catalog([
        {"full_name": "pathItems.ellipse", "kind": "method", "description": "draw an ellipse"},
        {"full_name": "pathItems.rectangle", "kind": "method", "description": "draw a rectangle"},
        {"full_name": "document.selection", "kind": "attribute", "description": "selected items"},
    ])


_criteria: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_c" not in report.nodeid:
        return
    name = report.nodeid.rsplit("::", 1)[1]
    if report.failed or (report.when == "call" and name not in _criteria):
        _criteria[name] = "FAIL" if report.failed else "PASS"


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_criteria):
        tag, _, words = name.removeprefix("test_").partition("_")
        terminalreporter.write_line(f"{tag.upper()} {words.replace('_', ' ')}: {_criteria[name]}")
