import numpy as np
import pytest
from hypothesis import settings

from jobshop.graph import Solution
from jobshop.instances import Instance, OpId

settings.register_profile("suite", deadline=None, max_examples=30)
settings.load_profile("suite")


@pytest.fixture
def cross_instance() -> Instance:
    # two jobs crossing two machines with opposite routes
    return Instance(2, 2, (((0, 2), (1, 3)), ((1, 2), (0, 4))))


@pytest.fixture
def cross_solution() -> Solution:
    # machine 0 runs job0 then job1's second op; machine 1 the mirror
    return Solution(((OpId(0, 0), OpId(1, 1)), (OpId(1, 0), OpId(0, 1))))


@pytest.fixture
def three_job_instance() -> Instance:
    return Instance(3, 2, (((0, 3), (1, 1)), ((0, 2), (1, 3)), ((0, 1), (1, 2))))


@pytest.fixture
def three_job_solution() -> Solution:
    return Solution((
        (OpId(0, 0), OpId(1, 0), OpId(2, 0)),
        (OpId(0, 1), OpId(1, 1), OpId(2, 1)),
    ))


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_report():
    def record(line: str) -> None:
        _ACCEPTANCE_LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def rng(seed: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed)
