"""Real-input DFT, harmonic selection and PSD/ACF estimators.

Conventions: the forward transform is unnormalized,
``F[j] = sum_n x[n] exp(-2j*pi*j*n/M)``, and the inverse carries ``1/M``.
Spectra are stored one-sided (``M//2 + 1`` bins) along axis 0; any further
axes are independent channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import BrokenHermitianSymmetry, IndexOutOfRange, LagOutOfRange, LengthTooSmall

HERMITIAN_TOL = 1e-9


def n_bins(m: int) -> int:
    return m // 2 + 1


@lru_cache(maxsize=64)
def _twiddles(n: int) -> np.ndarray:
    q = np.arange(max(n // 2, 1))
    return np.exp(-2j * np.pi * q / n)


@lru_cache(maxsize=64)
def _bluestein_plan(m: int):
    size = 1
    while size < 2 * m - 1:
        size *= 2
    n = np.arange(m)
    # n^2 reduced mod 2m keeps the phase argument small and exact
    chirp = np.exp(-1j * np.pi * ((n * n) % (2 * m)) / m)
    b = np.zeros(size, dtype=np.complex128)
    b[:m] = np.conj(chirp)
    b[size - m + 1 :] = np.conj(chirp[1:][::-1])
    b_hat = b[None, :].copy()
    kernels.fft_pow2(b_hat, _twiddles(size), False)
    return size, chirp, b_hat[0]


def _fft_pow2_rows(a: np.ndarray, inverse: bool) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.complex128).copy()
    kernels.fft_pow2(out, _twiddles(out.shape[1]), inverse)
    return out


def fft_rows(a: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Unnormalized complex DFT of each row of a 2-D array.

    ``inverse`` flips the exponent sign; no ``1/n`` scaling is applied.
    """
    a = np.asarray(a, dtype=np.complex128)
    rows, m = a.shape
    if m & (m - 1) == 0:
        return _fft_pow2_rows(a, inverse)
    size, chirp, b_hat = _bluestein_plan(m)
    if inverse:
        # inverse DFT = conj(DFT(conj(a)))
        return np.conj(fft_rows(np.conj(a), inverse=False))
    work = np.zeros((rows, size), dtype=np.complex128)
    work[:, :m] = a * chirp
    kernels.fft_pow2(work, _twiddles(size), False)
    work *= b_hat
    kernels.fft_pow2(work, _twiddles(size), True)
    return work[:, :m] / size * chirp


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided DFT coefficients of a length-``source_length`` real series."""

    coeffs: np.ndarray
    source_length: int

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=np.complex128)
        if coeffs.shape[0] != n_bins(self.source_length):
            raise ValueError(
                f"{coeffs.shape[0]} bins cannot describe a length-{self.source_length} series"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def n_bins(self) -> int:
        return self.coeffs.shape[0]

    def pinned_bins(self) -> list[int]:
        """Bins whose coefficient must be real: DC, plus Nyquist for even M."""
        m = self.source_length
        return [0, m // 2] if m % 2 == 0 else [0]


@dataclass(frozen=True)
class HarmonicSet:
    indices: tuple
    k: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError("duplicate harmonic indices")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __contains__(self, i):
        return i in self.indices


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    values: np.ndarray
    source_length: int

    @property
    def frequencies(self) -> np.ndarray:
        return 2 * np.pi * np.arange(len(self.values)) / self.source_length


@dataclass(frozen=True, eq=False)
class AcfEstimate:
    values: np.ndarray

    @property
    def max_lag(self) -> int:
        return len(self.values) - 1


def _rows_view(x: np.ndarray) -> tuple[np.ndarray, tuple]:
    """Move axis 0 (time/frequency) last and flatten the rest into rows."""
    rest = x.shape[1:]
    return np.moveaxis(x, 0, -1).reshape(-1, x.shape[0]), rest


def rfft(seq) -> Spectrum:
    x = np.asarray(seq, dtype=np.float64)
    m = x.shape[0]
    if m < 2:
        raise LengthTooSmall(f"need at least 2 samples, got {m}")
    rows, rest = _rows_view(x)
    full = fft_rows(rows)[:, : n_bins(m)]
    full[:, 0] = full[:, 0].real
    if m % 2 == 0:
        full[:, m // 2] = full[:, m // 2].real
    coeffs = np.moveaxis(full.reshape(*rest, n_bins(m)), -1, 0)
    return Spectrum(coeffs, m)


def check_hermitian(spec: Spectrum, tol: float = HERMITIAN_TOL) -> None:
    scale = 1.0 + float(np.max(np.abs(spec.coeffs), initial=0.0))
    for b in spec.pinned_bins():
        if np.max(np.abs(spec.coeffs[b].imag), initial=0.0) > tol * scale:
            raise BrokenHermitianSymmetry(f"bin {b} must be real for M={spec.source_length}")


def two_sided(spec: Spectrum) -> np.ndarray:
    """Full length-M spectrum reconstructed by conjugate symmetry."""
    m = spec.source_length
    c = spec.coeffs
    mirror = np.conj(c[1 : (m + 1) // 2][::-1])
    return np.concatenate([c, mirror], axis=0)


def irfft_coeffs(coeffs: np.ndarray, m: int) -> np.ndarray:
    """Inverse transform of one-sided coefficients, ignoring the imaginary
    parts of the pinned bins. Linear in ``(Re, Im)``."""
    c = np.array(coeffs, dtype=np.complex128)
    c[0] = c[0].real
    if m % 2 == 0:
        c[m // 2] = c[m // 2].real
    full = two_sided(Spectrum(c, m))
    rows, rest = _rows_view(full)
    x = fft_rows(rows, inverse=True).real / m
    return np.moveaxis(x.reshape(*rest, m), -1, 0)


def irfft(spec: Spectrum) -> np.ndarray:
    check_hermitian(spec)
    return irfft_coeffs(spec.coeffs, spec.source_length)


def bin_weights(m: int) -> np.ndarray:
    """Multiplicity of each one-sided bin in the two-sided spectrum."""
    w = np.full(n_bins(m), 2.0)
    w[0] = 1.0
    if m % 2 == 0:
        w[-1] = 1.0
    return w


def irfft_adjoint(v: np.ndarray, m: int) -> np.ndarray:
    """Adjoint of :func:`irfft_coeffs` w.r.t. the real pairs ``(Re, Im)``.

    Returns a complex array whose real/imaginary parts are the cotangents of
    the real/imaginary coefficient parts.
    """
    v = np.asarray(v, dtype=np.float64)
    rows, rest = _rows_view(v)
    f = fft_rows(rows)[:, : n_bins(m)]
    f = np.moveaxis(f.reshape(*rest, n_bins(m)), -1, 0)
    w = bin_weights(m).reshape((-1,) + (1,) * (v.ndim - 1))
    out = w * f / m
    out[0] = out[0].real
    if m % 2 == 0:
        out[m // 2] = out[m // 2].real
    return out


def amplitudes(spec: Spectrum) -> np.ndarray:
    return np.abs(spec.coeffs)


def top_k_indices(amp: np.ndarray, k: int, exclude_dc: bool = False) -> np.ndarray:
    """Indices of the ``k`` largest entries of a 1-D array, ties to the lower
    index, returned sorted."""
    if k < 1:
        raise ValueError("k must be at least 1")
    candidates = np.arange(len(amp))
    if exclude_dc:
        candidates = candidates[1:]
    order = candidates[np.argsort(-amp[candidates], kind="stable")]
    return np.sort(order[:k])


def select_harmonics(spec: Spectrum, k: int, exclude_dc: bool = False):
    """Top-``k`` amplitude bins. A multichannel spectrum yields one set per
    channel."""
    amp = amplitudes(spec)
    if amp.ndim == 1:
        return HarmonicSet(tuple(top_k_indices(amp, k, exclude_dc)), k)
    flat = amp.reshape(amp.shape[0], -1)
    return [HarmonicSet(tuple(top_k_indices(flat[:, c], k, exclude_dc)), k) for c in range(flat.shape[1])]


def harmonic_mask(amp: np.ndarray, k: int, exclude_dc: bool = False) -> np.ndarray:
    """Boolean mask (same shape as ``amp``) of the per-channel top-k bins."""
    flat = amp.reshape(amp.shape[0], -1)
    mask = np.zeros(flat.shape, dtype=bool)
    for c in range(flat.shape[1]):
        mask[top_k_indices(flat[:, c], k, exclude_dc), c] = True
    return mask.reshape(amp.shape)


def mask_of(h, spec: Spectrum) -> np.ndarray:
    shape = spec.coeffs.shape
    sets = [h] if isinstance(h, HarmonicSet) else list(h)
    flat = np.zeros((shape[0], len(sets)), dtype=bool)
    for c, s in enumerate(sets):
        idx = np.asarray(s.indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= shape[0]):
            raise IndexOutOfRange(f"harmonic index outside [0, {shape[0] - 1}]")
        flat[idx, c] = True
    if isinstance(h, HarmonicSet):
        return np.broadcast_to(flat[:, :1].reshape((shape[0],) + (1,) * (len(shape) - 1)), shape)
    return flat.reshape(shape)


def filter(spec: Spectrum, h) -> Spectrum:  # noqa: A001 - mirrors the operation name
    """Keep coefficients on ``h`` (one set, or one per channel); zero the rest."""
    mask = mask_of(h, spec)
    return Spectrum(np.where(mask, spec.coeffs, 0), spec.source_length)


def periodogram(seq) -> PsdEstimate:
    x = np.asarray(seq, dtype=np.float64)
    m = x.shape[0]
    if m < 2:
        raise LengthTooSmall(f"need at least 2 samples, got {m}")
    f = rfft(x - x.mean(axis=0)).coeffs
    return PsdEstimate(np.abs(f) ** 2 / m, m)


def acf_circular(seq, max_lag: int) -> AcfEstimate:
    """Circular ACF of the demeaned series, via the inverse DFT of the
    two-sided periodogram."""
    x = np.asarray(seq, dtype=np.float64)
    m = x.shape[0]
    if m < 2:
        raise LengthTooSmall(f"need at least 2 samples, got {m}")
    if not 0 <= max_lag <= m - 1:
        raise LagOutOfRange(f"max lag {max_lag} outside [0, {m - 1}]")
    psd = periodogram(x)
    r = irfft_coeffs(psd.values.astype(np.complex128), m)
    return AcfEstimate(r[: max_lag + 1])
