import numpy as np
import pytest

from robustlm.dataset import Dataset

D0_X = [0, 0, 0, 0, 1, 1, 1, 1]
D0_Y = [1, 2, 3, 4, 3, 5, 7, 9]

SEED = 12345

_acceptance_lines: list[str] = []


def record_acceptance(label: str, passed: bool, detail: str = "") -> None:
    _acceptance_lines.append(f"{'PASS' if passed else 'FAIL'}  {label}  {detail}".rstrip())


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def d0():
    return Dataset.from_arrays(D0_X, D0_Y, names=["x"])


@pytest.fixture
def rng_np():
    return np.random.default_rng(SEED)
