import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dmmot.cost import QuadraticCost
from dmmot.solver import K_operator, SolverParams, estimate_opnorm

settings.register_profile("dmmot", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dmmot")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}
N_CRITERIA = 10


def safe_params(cost: QuadraticCost, g, iterations: int, product: float = 0.9, ratio: float = 850.0,
                log_every: int = 10) -> SolverParams:
    """Steps with ``sigma * tau * ||K||^2 = product`` and ``sigma / tau = ratio``.

    The ratio matches the default configuration (85 / 0.1); only the product
    is brought below one.
    """
    L = estimate_opnorm(K_operator(cost, g))
    st = product / L**2
    return SolverParams(sigma=float(np.sqrt(st * ratio)), tau=float(np.sqrt(st / ratio)),
                        iterations=iterations, log_every=log_every)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@pytest.fixture
def record_acceptance(capsys):
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE[number] = (bool(passed), detail)
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    ran = any("test_acceptance" in str(getattr(r, "nodeid", ""))
              for reports in terminalreporter.stats.values() for r in reports)
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d}: FAIL  (no result recorded)")
