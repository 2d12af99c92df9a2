import numpy as np
import pytest

from madman.mnist import load_digits


@pytest.fixture(scope="session")
def digits():
    return load_digits()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def some_digits(digits):
    """A fixed handful of canonicalized training digits, one per class."""
    return [digits.get("train", digits.index_of("train", d, 0)) for d in range(10)]


@pytest.fixture
def cache(tmp_path, monkeypatch):
    root = tmp_path / "cache"
    monkeypatch.setenv("MADMAN_CACHE", str(root))
    return root


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(results):
        ok, detail = results[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
