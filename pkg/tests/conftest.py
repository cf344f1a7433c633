import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
FIXTURES = TESTS / "fixtures"
sys.path.insert(0, str(TESTS))


@pytest.fixture(scope="session")
def sib1_text():
    return (FIXTURES / "sib1.txt").read_text()


@pytest.fixture(scope="session")
def msg4_text():
    return (FIXTURES / "msg4.txt").read_text()


@pytest.fixture(scope="session")
def grant_text():
    return (FIXTURES / "dci_grant.txt").read_text()


@pytest.fixture(scope="session")
def cell(sib1_text):
    from rantelemetry.rrc import parse_sib1

    return parse_sib1(sib1_text)


@pytest.fixture(scope="session")
def ue(msg4_text, grant_text):
    from rantelemetry.rrc import parse_msg4

    return parse_msg4(msg4_text, grant_text)


@pytest.fixture(scope="session")
def fixture_dci(grant_text):
    from rantelemetry.dci import dci_from_listing
    from rantelemetry.docparse import parse_listing

    return dci_from_listing(parse_listing(grant_text))


# --- acceptance criteria summary ------------------------------------------------

_criteria: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, label): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    number, label = mark.args
    detail = "; ".join(f"{k} {v}" for k, v in item.user_properties)
    _criteria[number] = ("PASS" if rep.passed else "FAIL", label, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        verdict, label, detail = _criteria[number]
        line = f"{verdict} criterion {number}: {label}"
        terminalreporter.write_line(f"{line} ({detail})" if detail else line)
