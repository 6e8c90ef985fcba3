import numpy as np
import pytest

from grvq.corpus import write_corpus

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Six 4-second speech-like files at 24 kHz (2406 frames at frame_size 480)."""
    root = tmp_path_factory.mktemp("small_corpus")
    write_corpus(root, n_files=6, duration=4.0, sample_rate=24000, seed=7)
    return root


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE.append((name, report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _ACCEPTANCE:
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {name} ({duration:.2f} s)")
