import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_sparse(rng, n, m=None, density=0.2):
    m = n if m is None else m
    return sp.random(n, m, density=density, format="csr", random_state=rng,
                     data_rvs=lambda k: rng.standard_normal(k))


def random_triangular(rng, n, shape="lower", density=0.3, unit=False, dominant=False):
    M = random_sparse(rng, n, n, density)
    part = sp.tril(M, k=-1) if shape == "lower" else sp.triu(M, k=1)
    if unit:
        return sp.csr_matrix(part)
    d = rng.uniform(0.5, 2.0, n) * rng.choice([-1.0, 1.0], n)
    if dominant:
        rowsum = np.asarray(abs(part).sum(axis=1)).ravel()
        d = np.sign(d) * (rowsum + rng.uniform(0.5, 2.0, n))
    return sp.csr_matrix(part + sp.diags(d))


def random_dd(rng, n, density=0.2, symmetric=False):
    """Diagonally dominant sparse matrix with nonzero diagonal."""
    M = random_sparse(rng, n, n, density)
    if symmetric:
        M = M + M.T
    M = M - sp.diags(M.diagonal())
    rowsum = np.asarray(abs(M).sum(axis=1)).ravel()
    return sp.csr_matrix(M + sp.diags(rowsum + 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance criteria report: one line per criterion at the end of the run

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    number, title = mark.args
    ok = rep.passed and _CRITERIA.get(number, (title, True))[1]
    if rep.when == "call" or not rep.passed:
        _CRITERIA[number] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")
