import numpy as np
import pytest

from ssimrc.media_io import LumaFrame

# lines recorded by the acceptance module, echoed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def textured(h=64, w=64, seed=0, amp=40.0) -> np.ndarray:
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    base = 128 + 30 * np.sin(xx / 5.0) * np.cos(yy / 7.0) + amp * (r.random((h, w)) - 0.5)
    return np.clip(np.rint(base), 0, 255).astype(np.uint8)


@pytest.fixture
def tex_frame():
    return LumaFrame(textured(64, 128, seed=5))
