import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ntk_transfer.checks import flat_spectrum, relu_spectrum  # noqa: E402


@pytest.fixture(scope="session")
def flat():
    return flat_spectrum()


@pytest.fixture(scope="session")
def relu10():
    return relu_spectrum(10, 100)


@pytest.fixture(scope="session")
def relu20():
    return relu_spectrum(20, 60)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
