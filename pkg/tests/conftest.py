from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from facet.annotations import save_via  # noqa: E402
from facet.fixtures import facade_dataset, write_images  # noqa: E402


@pytest.fixture(scope="session")
def full_dataset():
    """100 images, 1540 windows, 1024x1024 canvases."""
    return facade_dataset(100, 1540, 1024, 1024, seed=0)


@pytest.fixture(scope="session")
def small_dataset():
    return facade_dataset(20, seed=3, width=320, height=240)


@pytest.fixture
def via_fixture(tmp_path, small_dataset):
    """A VIA file plus a directory of real PNGs for the small dataset."""
    d = write_images(small_dataset, tmp_path / "images")
    path = tmp_path / "via.json"
    save_via(d, path)
    return path, tmp_path / "images", d


_RESULTS_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; the summary lists them after the run."""
    lines = request.config.stash.setdefault(_RESULTS_KEY, [])

    def record(name: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_RESULTS_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
