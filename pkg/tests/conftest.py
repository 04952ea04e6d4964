import numpy as np
import pytest

ACCEPTANCE_RESULTS = []


def naive_dft2(x):
    """O(N^2) direct 2-D DFT via explicit DFT matrices (independent of numpy.fft)."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    fh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    fw = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return fh @ x @ fw.T


def naive_idft2(s):
    h, w = s.shape[-2:]
    fh = np.exp(2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    fw = np.exp(2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return (fh @ s @ fw.T) / (h * w)


def checkerboard(h, w):
    i, j = np.mgrid[0:h, 0:w]
    return np.where((i + j) % 2 == 0, 1.0, -1.0).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(line)
