# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: radix-2 FFT butterflies and moving-average filters.

Every function here has a numpy twin in ``_core_py`` with the same signature;
``hdt.kernels`` picks one at import time.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def fft_pow2(double complex[:, ::1] a, double complex[::1] twiddles, bint inverse):
    """Transform each row of ``a`` in place (unnormalized, decimation in time).

    ``twiddles[q] = exp(-2j*pi*q/n)`` for ``q < n/2``. Row length must be a
    power of two.
    """
    cdef Py_ssize_t rows = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    cdef Py_ssize_t r, i, j, bit, size, half, step, start, q
    cdef double complex u, v, w

    if n & (n - 1):
        raise ValueError(f"row length {n} is not a power of two")
    if twiddles.shape[0] < n // 2:
        raise ValueError("twiddle table too short")

    with nogil:
        for r in range(rows):
            j = 0
            for i in range(1, n):
                bit = n >> 1
                while j & bit:
                    j ^= bit
                    bit >>= 1
                j |= bit
                if i < j:
                    u = a[r, i]
                    a[r, i] = a[r, j]
                    a[r, j] = u

            size = 2
            while size <= n:
                half = size >> 1
                step = n // size
                start = 0
                while start < n:
                    for q in range(half):
                        w = twiddles[q * step]
                        if inverse:
                            w = w.conjugate()
                        u = a[r, start + q]
                        v = a[r, start + q + half] * w
                        a[r, start + q] = u + v
                        a[r, start + q + half] = u - v
                    start += size
                size <<= 1


def moving_average(double[:, ::1] x, Py_ssize_t kernel_size):
    """Centered moving average along axis 0 with edge replication."""
    cdef Py_ssize_t length = x.shape[0]
    cdef Py_ssize_t cols = x.shape[1]
    cdef Py_ssize_t h = (kernel_size - 1) // 2
    cdef Py_ssize_t n, m, c, src
    cdef double inv = 1.0 / kernel_size
    out = np.zeros((length, cols), dtype=np.float64)
    cdef double[:, ::1] o = out

    with nogil:
        for n in range(length):
            for m in range(n - h, n + h + 1):
                src = m
                if src < 0:
                    src = 0
                elif src > length - 1:
                    src = length - 1
                for c in range(cols):
                    o[n, c] += x[src, c]
            for c in range(cols):
                o[n, c] *= inv
    return out


def moving_average_adjoint(double[:, ::1] g, Py_ssize_t kernel_size):
    """Transpose of :func:`moving_average` applied to ``g``."""
    cdef Py_ssize_t length = g.shape[0]
    cdef Py_ssize_t cols = g.shape[1]
    cdef Py_ssize_t h = (kernel_size - 1) // 2
    cdef Py_ssize_t n, m, c, dst
    cdef double inv = 1.0 / kernel_size
    out = np.zeros((length, cols), dtype=np.float64)
    cdef double[:, ::1] o = out

    with nogil:
        for n in range(length):
            for m in range(n - h, n + h + 1):
                dst = m
                if dst < 0:
                    dst = 0
                elif dst > length - 1:
                    dst = length - 1
                for c in range(cols):
                    o[dst, c] += g[n, c] * inv
    return out
