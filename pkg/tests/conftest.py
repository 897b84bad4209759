import os
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False,
                     help="also run long jobs (hours to a day)")


def pytest_configure(config):
    config.addinivalue_line("markers", "extended: long-running reproduction job")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended") or os.environ.get("LOCALMODELS_EXTENDED"):
        return
    skip = pytest.mark.skip(reason="extended job; use --extended or LOCALMODELS_EXTENDED=1")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


# one summary line per acceptance criterion ---------------------------------

_CRITERIA: dict = {}
_DETAILS: dict = {}


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the running acceptance criterion."""
    def put(text):
        _DETAILS[request.node.name] = text
        print(text)
    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if not item.name.startswith("test_criterion_"):
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        state = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _CRITERIA[item.name] = state


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: (int(n.split("_")[2]), n)):
        num = name.split("_")[2]
        label = " ".join(name.split("_")[3:])
        extra = _DETAILS.get(name, "")
        terminalreporter.write_line(f"criterion {num} [{_CRITERIA[name]}] {label}: {extra}".rstrip(": "))
