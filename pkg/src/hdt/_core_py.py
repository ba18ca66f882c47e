"""Pure numpy versions of the compiled kernels in ``_core.pyx``."""

import numpy as np


def _bit_reverse(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft_pow2(a, twiddles, inverse):
    """Transform each row of ``a`` in place (unnormalized, decimation in time)."""
    rows, n = a.shape
    if n & (n - 1):
        raise ValueError(f"row length {n} is not a power of two")
    if len(twiddles) < n // 2:
        raise ValueError("twiddle table too short")
    tw = np.conj(twiddles) if inverse else np.asarray(twiddles)
    work = a[:, _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        w = tw[: n // 2 : n // size][:half]
        blocks = work.reshape(rows, n // size, size)
        even = blocks[:, :, :half]
        odd = blocks[:, :, half:] * w
        work = np.concatenate([even + odd, even - odd], axis=2).reshape(rows, n)
        size *= 2
    a[:, :] = work


def moving_average(x, kernel_size):
    """Centered moving average along axis 0 with edge replication."""
    x = np.asarray(x, dtype=np.float64)
    h = (kernel_size - 1) // 2
    padded = np.concatenate([np.repeat(x[:1], h, axis=0), x, np.repeat(x[-1:], h, axis=0)])
    csum = np.concatenate([np.zeros((1, x.shape[1])), np.cumsum(padded, axis=0)])
    return (csum[kernel_size:] - csum[:-kernel_size]) / kernel_size


def moving_average_adjoint(g, kernel_size):
    """Transpose of :func:`moving_average` applied to ``g``."""
    g = np.asarray(g, dtype=np.float64)
    length, cols = g.shape
    h = (kernel_size - 1) // 2
    # gp[p] = sum of g[n] over max(0, p - 2h) <= n <= min(length - 1, p)
    csum = np.concatenate([np.zeros((1, cols)), np.cumsum(g, axis=0)])
    p = np.arange(length + 2 * h)
    hi = np.minimum(length - 1, p) + 1
    lo = np.maximum(0, p - 2 * h)
    gp = (csum[hi] - csum[lo]) / kernel_size
    out = gp[h : h + length].copy()
    out[0] += gp[:h].sum(axis=0)
    out[-1] += gp[h + length :].sum(axis=0)
    return out
