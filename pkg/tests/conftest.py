import os
from pathlib import Path

import pytest

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")


def find_idx_set(env_var: str):
    """Locate the four IDX files under ``$env_var``, accepting optional ``.gz`` suffixes."""
    root = os.environ.get(env_var)
    if not root:
        return None
    found = []
    for name in MNIST_FILES:
        for cand in (Path(root) / name, Path(root) / f"{name}.gz"):
            if cand.exists():
                found.append(cand)
                break
        else:
            return None
    return dict(zip(("train_images", "train_labels", "test_images", "test_labels"), found))


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
