import os
from pathlib import Path

import numpy as np
import pytest

MNIST_DIR = Path(os.environ.get("LAPPRUNE_DATA", "/root/data/mnist"))


def mnist_available() -> bool:
    return (MNIST_DIR / "train-images-idx3-ubyte").is_file() and (MNIST_DIR / "t10k-images-idx3-ubyte").is_file()


requires_mnist = pytest.mark.skipif(
    not mnist_available(), reason=f"MNIST IDX files not found in {MNIST_DIR} (set LAPPRUNE_DATA)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def report(number: int, passed: bool, detail: str):
    ACCEPTANCE_LINES.append((number, f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
