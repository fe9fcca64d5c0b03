import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hojabr.storage import load_manifest  # noqa: E402
from hojabr.syntax import parse  # noqa: E402

CORPUS = Path(__file__).resolve().parents[1] / "src" / "hojabr" / "corpus"
INDEX = json.loads((CORPUS / "index.json").read_text())


def corpus_text(name: str) -> str:
    return (CORPUS / f"{name}.hjb").read_text()


def corpus_program(name: str):
    return parse(corpus_text(name))


def corpus_db(name: str):
    return load_manifest(CORPUS / INDEX[name])


def fixture_program(name: str):
    return parse((CORPUS / "fixtures" / f"{name}.hjb").read_text())


@pytest.fixture
def corpus():
    return CORPUS


# ---------------------------------------------------------------- acceptance reporting

CRITERIA: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title, limit): an acceptance criterion with a time limit in seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    cid, title, limit = mark.args
    CRITERIA[cid] = {"title": title, "limit": limit, "passed": rep.passed, "elapsed": call.duration}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(CRITERIA, key=lambda c: int(c)):
        r = CRITERIA[cid]
        status = "PASS" if r["passed"] else "FAIL"
        terminalreporter.write_line(
            f"{status} criterion {cid}: {r['title']} ({r['elapsed']:.2f} s, limit {r['limit']} s)"
        )
