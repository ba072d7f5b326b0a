"""Discrete Fourier transforms over the last axis.

Power-of-two lengths use an iterative radix-2 decimation-in-time transform.
Short odd lengths use the direct DFT matrix; longer ones go through
Bluestein's chirp-z reformulation, which reuses the radix-2 path.
"""

import numpy as np

from .errors import DimensionError, ParameterError

_DIRECT_MAX = 32


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_radix2(x):
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ParameterError(f"radix-2 transform needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    y = x[..., _bit_reverse(n)]
    m = 1
    while m < n:
        tw = np.exp(-2j * np.pi * np.arange(m) / (2 * m))
        y = y.reshape(lead + (n // (2 * m), 2, m))
        even = y[..., 0, :]
        odd = y[..., 1, :] * tw
        y = np.concatenate([even + odd, even - odd], axis=-1)
        m *= 2
    return y.reshape(lead + (n,))


def dft_direct(x):
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    k = np.arange(n)
    mat = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return x @ mat.T


def fft_bluestein(x):
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase accurate for large n
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)
    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    if n > 1:
        b[-(n - 1):] = np.conj(chirp[1:][::-1])
    conv = ifft(fft_radix2(a) * fft_radix2(b))
    return conv[..., :n] * chirp


def fft(x):
    """Unnormalized forward DFT along the last axis."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if n < 1:
        raise ParameterError("transform length must be >= 1")
    if _is_pow2(n):
        return fft_radix2(x)
    if n <= _DIRECT_MAX:
        return dft_direct(x)
    return fft_bluestein(x)


def ifft(X):
    X = np.asarray(X, dtype=np.complex128)
    n = X.shape[-1]
    return np.conj(fft(np.conj(X))) / n


def rfft(x):
    """Half spectrum of a real signal: bins 0..n//2."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    return fft(x)[..., : n // 2 + 1]


def hermitian_extend(X, n):
    """Rebuild the full length-n spectrum from its half, dropping the
    imaginary parts of the DC and (even n) Nyquist bins."""
    X = np.asarray(X, dtype=np.complex128)
    if X.shape[-1] != n // 2 + 1:
        raise DimensionError(
            f"half spectrum of length {X.shape[-1]} does not match n={n} "
            f"(expected {n // 2 + 1})"
        )
    full = np.zeros(X.shape[:-1] + (n,), dtype=np.complex128)
    full[..., : n // 2 + 1] = X
    full[..., 0] = X[..., 0].real
    if n % 2 == 0:
        full[..., n // 2] = X[..., n // 2].real
    tail = np.arange(n // 2 + 1, n)
    full[..., tail] = np.conj(X[..., n - tail])
    return full


def irfft(X, n):
    return ifft(hermitian_extend(X, n)).real
