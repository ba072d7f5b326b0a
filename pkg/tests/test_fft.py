import cmath

import numpy as np
import pytest

from dyntmoe import fft


def naive_dft(x):
    n = len(x)
    return np.array(
        [sum(x[t] * cmath.exp(-2j * cmath.pi * k * t / n) for t in range(n)) for k in range(n)]
    )


@pytest.mark.parametrize("n", [1, 2, 3, 5, 7, 8, 12, 16, 31, 33, 64, 100])
def test_fft_matches_naive_dft(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    np.testing.assert_allclose(fft.fft(x), naive_dft(x), atol=1e-10)


@pytest.mark.parametrize("n", [3, 17, 45, 100, 511])
def test_bluestein_path(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((2, n))
    ref = np.fft.fft(x)
    np.testing.assert_allclose(fft.fft_bluestein(x), ref, atol=1e-9)


def test_radix2_rejects_odd_length():
    with pytest.raises(ValueError):
        fft.fft_radix2(np.ones(6))


def test_constant_signal_is_dc_only():
    c, n = 2.5, 10
    X = fft.rfft(np.full(n, c))
    assert X[0].real == pytest.approx(n * c)
    np.testing.assert_allclose(X[1:], 0.0, atol=1e-12)


@pytest.mark.parametrize("n", [7, 8, 64, 129, 256, 512])
def test_rfft_roundtrip(n):
    x = np.random.default_rng(n).standard_normal((3, n))
    np.testing.assert_allclose(fft.irfft(fft.rfft(x), n), x, atol=1e-10)


@pytest.mark.parametrize("n", [2, 5, 8, 11, 16])
def test_parseval_with_symmetric_fold(n):
    x = np.random.default_rng(100 + n).standard_normal(n)
    X = naive_dft(x)[: n // 2 + 1]
    w = np.full(n // 2 + 1, 2.0)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    np.testing.assert_allclose(fft.rfft(x), X, atol=1e-10)
    assert np.sum(x**2) == pytest.approx(np.sum(w * np.abs(X) ** 2) / n, abs=1e-9)


def test_irfft_length_mismatch():
    with pytest.raises(ValueError):
        fft.irfft(np.ones(4, dtype=complex), 10)
