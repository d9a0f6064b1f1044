import functools
from pathlib import Path

import numpy as np
import pytest

from acnn import evaluation as ev
from acnn import mnist_io as mi
from acnn import network as nw

DATA_DIR = Path(__file__).resolve().parents[1] / "data"
IMAGES = DATA_DIR / "t10k-images-idx3-ubyte.gz"
LABELS = DATA_DIR / "t10k-labels-idx1-ubyte.gz"

# criterion lines collected by the acceptance suite, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


@functools.lru_cache(maxsize=None)
def mnist_test():
    return mi.load_idx_images(IMAGES), mi.load_idx_labels(LABELS)


@functools.lru_cache(maxsize=None)
def built(config: str, seed: int):
    images, labels = mnist_test()
    return nw.build_network(mi.select_exemplars(images, labels, seed=seed), ev.REFERENCE_CONFIGS[config])


@pytest.fixture(scope="session")
def mnist():
    if not IMAGES.exists():
        pytest.skip("bundled MNIST test files missing")
    return mnist_test()


@pytest.fixture(scope="session")
def net_a(mnist):
    return built("A", 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
