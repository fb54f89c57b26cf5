import numpy as np
import pytest

from alphadynamo.fields import TorusSpec, random_field

# acceptance results, filled by test_acceptance and printed at the end of the run
ACCEPTANCE: dict = {}


def report(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def unit3():
    return TorusSpec((1, 1, 1), 3)


def small_flow(seed: int, K: int = 3, radius: int = 1, amplitude: float = 1.0):
    return random_field(TorusSpec((1, 1, 1), K), radius, np.random.default_rng(seed),
                        amplitude=amplitude)
