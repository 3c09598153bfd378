import numpy as np
import pytest

from deconvband import Sample
from deconvband.simulate import DgpSpec, gen_model1, gen_model2


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture(scope="session")
def model1_sample():
    return gen_model1(DgpSpec("model1", "linear", 2.0, 300, 11))


@pytest.fixture(scope="session")
def model2_sample():
    return gen_model2(DgpSpec("model2", "quadratic", 2.0, 300, 12))


@pytest.fixture
def small_sample(rng):
    x = rng.normal(0.0, 1.5, 50)
    w = x + rng.laplace(0.0, 2**-0.5, 50)
    y = np.sin(x) + 0.3 * rng.normal(size=50)
    eta = rng.laplace(0.0, 2**-0.5, 60)
    return Sample(y, w, eta)


ACCEPTANCE_LINES = {}


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion.

    Usage: ``acceptance(number, title)`` then ``acceptance.detail = "..."``;
    the outcome is taken from the test result.
    """

    class Recorder:
        number = None
        title = ""
        detail = ""

        def __call__(self, number, title):
            self.number, self.title = number, title
            return self

    rec = Recorder()
    yield rec
    if rec.number is not None:
        ACCEPTANCE_LINES[(rec.number, request.node.nodeid)] = rec


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call":
        item.stash[_passed_key] = report.passed


_passed_key = pytest.StashKey[bool]()


@pytest.fixture(autouse=True)
def _attach_outcome(request):
    yield
    rec = request.node.funcargs.get("acceptance")
    if rec is not None and rec.number is not None:
        rec.passed = request.node.stash.get(_passed_key, False)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        rec = ACCEPTANCE_LINES[key]
        status = "PASS" if getattr(rec, "passed", False) else "FAIL"
        line = f"criterion {rec.number:>2} [{status}] {rec.title}"
        if rec.detail:
            line += f": {rec.detail}"
        terminalreporter.write_line(line)
