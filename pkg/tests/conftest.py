import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")

# (criterion, passed, detail) lines collected by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
            terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
