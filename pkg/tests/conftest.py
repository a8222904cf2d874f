import pytest

from calabilab import TorusModel, hirzebruch_trapezoid, interval, toric_model, unit_square


@pytest.fixture(scope="session")
def torus64():
    return TorusModel(n=64)


@pytest.fixture(scope="session")
def torus32():
    return TorusModel(n=32)


@pytest.fixture(scope="session")
def interval_model():
    return toric_model(interval(), 129)


@pytest.fixture(scope="session")
def interval_small():
    return toric_model(interval(), 33)


@pytest.fixture(scope="session")
def square_model():
    return toric_model(unit_square(), 17)


@pytest.fixture(scope="session")
def trapezoid_model():
    return toric_model(hirzebruch_trapezoid(), 17)



def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
