import numpy as np
import pytest

from ldpquant.pivot import PivotKind, build_pivot_table


@pytest.fixture(scope="session")
def pivot_cache(request):
    return request.config.cache.mkdir("ldpquant-pivot")


@pytest.fixture(scope="session")
def small_pivot(pivot_cache):
    """Coarse table, adequate for unit tests that only need plausible values."""
    return build_pivot_table(PivotKind.SQUARED_INTEGRAL, paths=20_000, grid_steps=1000,
                             seed=11, cache_dir=pivot_cache)


@pytest.fixture(scope="session")
def full_pivot(pivot_cache):
    """Production-scale table: 2e5 paths on a 4096-step grid."""
    return build_pivot_table(PivotKind.SQUARED_INTEGRAL, cache_dir=pivot_cache)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(label, ok, detail):
        lines.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split()[1]):
            terminalreporter.write_line(line)
