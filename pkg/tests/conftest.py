import numpy as np
import pytest

from ksmix.grid import PhysicalField, SpectralField, TorusGrid, fft, ifft_real


def band_limited(grid: TorusGrid, seed: int, band: int = 4, mean: float = 0.0) -> PhysicalField:
    """Real random field with modes |k|_inf <= band."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(grid.shape)
    c = np.where(grid.kmax_abs <= band, fft(v), 0)
    c[grid.zero_index()] = mean
    return PhysicalField(grid, ifft_real(c))


def hermitian_random(grid: TorusGrid, seed: int) -> SpectralField:
    rng = np.random.default_rng(seed)
    return SpectralField(grid, fft(rng.standard_normal(grid.shape)))


@pytest.fixture
def grid2():
    return TorusGrid(2, 32)


# --- acceptance reporting ---------------------------------------------------

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per criterion; printed in the terminal summary."""

    def emit(tag: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
