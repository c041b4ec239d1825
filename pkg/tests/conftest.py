import numpy as np
import pytest

from emleak.core import TraceMeta, generate_key
from emleak.synthgen import make_default_leakage_model, synth_trace


@pytest.fixture(scope="session")
def meta():
    return TraceMeta()


@pytest.fixture(scope="session")
def model():
    return make_default_leakage_model(template_seed=7, leakage_strength=2.0, noise_sigma=0.5)


@pytest.fixture(scope="session")
def small_traces(meta, model):
    """Two training recordings, one validation and one test recording, 600 symbols each."""
    k_train = generate_key(600, 11)
    k_test = generate_key(600, 12)
    train = [synth_trace(k_train, model, meta, s) for s in (1, 2)]
    val = synth_trace(k_train, model, meta, 3)
    test = synth_trace(k_test, model, meta, 4)
    return train, val, test


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# --- acceptance reporting: one pass/fail line per criterion -------------------

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = ""
        if report.outcome == "failed" and call.excinfo is not None:
            detail = str(call.excinfo.value).splitlines()[0][:160] if str(call.excinfo.value) else call.excinfo.typename
        _CRITERIA[number] = (title, report.outcome.upper(), detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, outcome, detail = _CRITERIA[number]
        verdict = "PASS" if outcome == "PASSED" else "FAIL"
        line = f"criterion {number:2d} {verdict}  {title}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
