import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_cost(rng, n_pred, n_gt, c_bg=0.8):
    cost = np.empty((n_pred, n_gt + 1))
    cost[:, :n_gt] = rng.uniform(0.0, 1.0, size=(n_pred, n_gt))
    cost[:, -1] = c_bg
    return cost


def random_sizes(rng, max_pred=8, min_gt=0):
    n = int(rng.integers(max(1, min_gt), max_pred + 1))
    return n, int(rng.integers(min_gt, n + 1))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion."""

    def _report(number: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
