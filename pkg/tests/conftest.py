import numpy as np
import pytest


def random_pd(rng, d, cond=None):
    """Random SPD matrix; with ``cond`` the eigenvalues span that ratio."""
    Qm, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if cond is None:
        w = rng.uniform(0.1, 3.0, d)
    else:
        w = np.geomspace(1.0, cond, d)
    C = (Qm * w) @ Qm.T
    return 0.5 * (C + C.T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion for the summary."""
    lines = []
    yield lines.append
    failed = getattr(request.node, "rep_call", None)
    status = "FAIL" if failed is None or failed.failed else "PASS"
    for text in lines or [request.node.name]:
        ACCEPTANCE_LINES.append(f"{status}  {text}")


@pytest.hookimpl(hookwrapper=True, tryfirst=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
