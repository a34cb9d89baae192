import numpy as np
import pytest

from basisforge.quadrature import gauss_legendre_rule


@pytest.fixture(scope="session")
def grid1024():
    return gauss_legendre_rule(1024)


@pytest.fixture(scope="session")
def grid256():
    return gauss_legendre_rule(256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number")


def pytest_runtest_logreport(report):
    if report.when not in ("setup", "call"):
        return
    info = dict(report.user_properties).get("criterion")
    if info is None:
        return
    n, title = info
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "seconds": 0.0, "notes": []})
    # setup time includes any pipeline fixture the criterion triggered
    entry["ok"] &= report.outcome == "passed"
    entry["seconds"] += report.duration
    if report.when == "call":
        entry["notes"].extend(v for k, v in report.user_properties if k == "note")


@pytest.fixture(autouse=True)
def _criterion_tag(request, record_property):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        record_property("criterion", marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        e = _CRITERIA[n]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(
            f"criterion {n:2d} {status}  {e['title']}  ({e['seconds']:.1f}s){'  ' + notes if notes else ''}"
        )
