import numpy as np
import pytest

from raretrack.flux import make_flux


@pytest.fixture
def burgers():
    return make_flux("burgers")


@pytest.fixture
def quartic():
    return make_flux("quartic")


@pytest.fixture
def bl():
    return make_flux("buckley_leverett", mobility_ratio=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


from hypothesis import settings

# fixed example streams so that the property suites are reproducible
settings.register_profile("repro", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("repro")


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, ok, detail in sorted(results):
        terminalreporter.write_line(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
