import pytest
from hypothesis import HealthCheck, settings

from symdp.model import TINY_CHAIN, FactoredMdp, parse_model

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def tiny() -> FactoredMdp:
    return parse_model(TINY_CHAIN)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
