import re

import numpy as np
import pytest

ACCEPTANCE_TITLES = {
    1: "prox oracles",
    2: "phase-1 noiseless recovery",
    3: "spurious-outlier identification",
    4: "phase-2 consistency",
    5: "orthonormality",
    6: "monotone ALM",
    7: "shaker semantics",
    8: "evaluation arithmetic",
    9: "scalability smoke",
    10: "determinism",
}

_outcomes: dict = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_c(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.failed or report.skipped:
        ok = report.passed if report.when == "call" else False
        prev = _outcomes.get(n, True)
        _outcomes[n] = prev and ok


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_TITLES):
        if n not in _outcomes:
            continue
        status = "PASS" if _outcomes[n] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {ACCEPTANCE_TITLES[n]:<32s} {status}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- solver run recorder --------------------------------------------------------
# Every Phase-1 and Phase-2 fit made anywhere in the session is captured so the
# acceptance checks on orthonormality and monotone descent cover the whole suite.

SOLVER_RUNS: list = []


def _recording(fn, label):
    def wrapper(*args, **kwargs):
        res = fn(*args, **kwargs)
        SOLVER_RUNS.append((label, res))
        return res

    wrapper.__wrapped__ = fn
    return wrapper


@pytest.fixture(scope="session", autouse=True)
def record_solver_runs():
    import sys

    from shakernet import phase1, phase2

    originals = {id(phase1.fit_view): _recording(phase1.fit_view, "phase1"),
                 id(phase2.fit_multiview): _recording(phase2.fit_multiview, "phase2")}
    saved = []
    for key, mod in list(sys.modules.items()):
        if mod is None or not (key.startswith(("shakernet", "test_", "tests")) or key == "conftest"):
            continue
        for name, obj in list(vars(mod).items()):
            if callable(obj) and id(obj) in originals:
                saved.append((mod, name, obj))
                setattr(mod, name, originals[id(obj)])
    yield SOLVER_RUNS
    for mod, name, obj in saved:
        setattr(mod, name, obj)


def pytest_collection_modifyitems(items):
    # acceptance checks run last so the suite-wide checks see every fit
    items.sort(key=lambda it: "test_acceptance.py" in it.nodeid)
