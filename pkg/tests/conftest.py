import pytest

from gqkd import preset
from gqkd.analysis import REFERENCE_POINT_25KM, calibrate


@pytest.fixture(scope="session")
def sspd():
    return preset("SSPD_3G3")


@pytest.fixture(scope="session")
def spad():
    return preset("SISPAD_2G")


@pytest.fixture(scope="session")
def calibrated_sspd():
    return calibrate(preset("SSPD_3G3"), [REFERENCE_POINT_25KM]).config


def pytest_terminal_summary(terminalreporter):
    from verdicts import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
