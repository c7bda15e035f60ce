import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dovmodem.framing import CipherSession, FrameConfig, frame_codebook  # noqa: E402
from dovmodem.modem import WaveformCodebook  # noqa: E402
from dovmodem.quatcode import codebook_search  # noqa: E402


@pytest.fixture(scope="session")
def quat64():
    return codebook_search(8, 64, seed=0)


@pytest.fixture(scope="session")
def cb64(quat64):
    return WaveformCodebook.build(quat64, N=20, k0=1)


@pytest.fixture(scope="session")
def cb_low():
    return frame_codebook(FrameConfig.low())


@pytest.fixture(scope="session")
def cb_high():
    return frame_codebook(FrameConfig.high())


@pytest.fixture(scope="session")
def session():
    return CipherSession(bytes(range(32)), bytes(range(100, 113)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record a PASS/FAIL line for the summary, then assert."""
    def record(number, ok, detail):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        assert ok, detail
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":").split("/")[0])):
            terminalreporter.write_line(line)
