import numpy as np
import pytest

from swingcorr.grid import Bus, GridCase, Line, build_model, chain_case, load_case

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def wscc9():
    return build_model(load_case("wscc9.case"))


@pytest.fixture(scope="session")
def two_gen():
    """M = I, K = 2[[1,-1],[-1,1]], gamma = 0.2 (lambda = 0, 4)."""
    case = GridCase((Bus(1, True, 1.0, 0.2), Bus(2, True, 1.0, 0.2)), (Line(1, 2, 2.0),),
                    base_hz=1 / (2 * np.pi))
    return build_model(case)


@pytest.fixture(scope="session")
def chain5():
    return build_model(chain_case(5, inertia=1.0, susceptance=2.0, gamma=0.2))
