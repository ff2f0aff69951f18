import numpy as np
import pytest

from panelqboot import PanelDataset

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_panel(rng, N=3, T=6, p=1, scale=1.0):
    y = rng.normal(size=(N, T)) * scale
    x = rng.normal(size=(N, T, p))
    return PanelDataset.from_arrays(y, x)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
