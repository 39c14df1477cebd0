import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("ci", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def d2():
    from circledirac.checks import derivation
    return derivation(2)


@pytest.fixture(scope="session")
def d1():
    from circledirac.checks import derivation
    return derivation(1)


@pytest.fixture(scope="session")
def ct2(d2):
    from circledirac.quantum import quantize
    return quantize(d2.particle_table, d2.phase_space)


ACCEPTANCE_LINES = {}


@pytest.fixture
def verdict():
    """Record a one-line verdict for an acceptance criterion."""
    def record(n, passed, detail):
        line = f"criterion {n:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
