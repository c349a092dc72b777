import numpy as np
import pytest
from hypothesis import settings

from krasovskii.models import BoostParams, RlcZipParams, boost_converter, boost_equilibrium, parallel_rlc_zip

settings.register_profile("repo", deadline=None, max_examples=60, derandomize=True)
settings.load_profile("repo")

# criterion id -> (title, [outcomes]); filled by tests marked `acceptance`
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(cid, title): test belongs to an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    cid, title = mark.args
    entry = _CRITERIA.setdefault(cid, [title, []])
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        entry[1].append(rep.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_CRITERIA, key=lambda c: int(c[2:])):
        title, results = _CRITERIA[cid]
        verdict = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"{cid} {verdict}  {title}  ({sum(results)}/{len(results)} checks)")


@pytest.fixture(scope="session")
def boost():
    p = BoostParams()
    sys_, phs = boost_converter(p)
    return p, sys_, phs


@pytest.fixture(scope="session")
def boost_eq(boost):
    p, sys_, _ = boost
    return boost_equilibrium(p, 24.0, sys_)


@pytest.fixture(scope="session")
def rlc():
    p = RlcZipParams()
    sys_, gsys = parallel_rlc_zip(p)
    return p, sys_, gsys


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
