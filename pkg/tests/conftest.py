import numpy as np
import pytest

from cpburn.raster import C2Raster


def random_psd_c2(n: int, rng: np.random.Generator, rank_one_fraction: float = 0.2) -> C2Raster:
    """Sample covariances as averages of 1-4 outer products of complex channel pairs."""
    looks = rng.integers(1, 5, size=n)
    looks[: int(rank_one_fraction * n)] = 1
    scale = 10.0 ** rng.uniform(-3, 1, size=n)
    c11 = np.zeros(n)
    c22 = np.zeros(n)
    c12 = np.zeros(n, complex)
    for k in range(4):
        use = looks > k
        h = rng.normal(size=n) + 1j * rng.normal(size=n)
        v = rng.normal(size=n) + 1j * rng.normal(size=n)
        c11 += use * np.abs(h) ** 2
        c22 += use * np.abs(v) ** 2
        c12 += use * h * np.conj(v)
    c11, c22, c12 = (scale * c11 / looks, scale * c22 / looks, scale * c12 / looks)
    return C2Raster(c11[None], c22[None], c12.real[None], c12.imag[None])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
