import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_state(L, rng):
    psi = rng.standard_normal(2**L) + 1j * rng.standard_normal(2**L)
    return psi / np.linalg.norm(psi)


def random_dm(L, rng, rank=None):
    n = 2**L
    k = n if rank is None else rank
    A = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
    rho = A @ A.conj().T
    return rho / np.trace(rho).real


# exit-criteria summary -----------------------------------------------------------

_CRITERIA = {}


@pytest.fixture
def detail(request):
    """Call with a string to attach measured values to the criterion's summary line."""
    def add(text):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    n = int(mark.args[0])
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        passed = rep.outcome == "passed"
        info = "; ".join(v for k, v in item.user_properties if k == "detail")
        prev = _CRITERIA.get(n)
        # a criterion split over several tests passes only if every part passes
        if prev is not None:
            passed = passed and prev[0]
            info = "; ".join(x for x in (prev[1], info) if x)
        _CRITERIA[n] = (passed, info)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("exit criteria")
    for n in sorted(_CRITERIA):
        passed, info = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {info}")
