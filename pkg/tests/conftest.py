import os
import tempfile

import pytest

# keep constructed lattices out of the user's cache
os.environ.setdefault("QMCIS_CACHE_DIR", tempfile.mkdtemp(prefix="qmcis-test-cache-"))

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    path = tmp_path / "cache"
    monkeypatch.setenv("QMCIS_CACHE_DIR", str(path))
    return path


@pytest.fixture(scope="session", autouse=True)
def compiled_kernels():
    """Trigger numba compilation once so timed tests measure run time only."""
    from qmcis import lattice, rkhs
    lattice.cbc_construct(8, 2, lattice.make_pod_weights(2), rkhs.WeightScheme.gaussian(4.0))
