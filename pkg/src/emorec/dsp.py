"""Deterministic signal-processing kernels: FFT, STFT, mel filterbank, DCT, MFCC.

Everything here is a pure function of its inputs.  The FFT is a radix-2
iterative Cooley-Tukey kernel (power-of-two lengths only; callers zero-pad),
the cepstral transform is an orthonormal DCT-II, and the mel scale is

    mel(f) = 2595 * log10(1 + f/700)

The 2595 constant is only consistent with a base-10 log, so log10 it is.

Conventions fixed here:
  * Hann window, periodic form w[n] = 0.5 - 0.5*cos(2*pi*n/N).
  * STFT frames are zero-padded to the next power of two before the FFT;
    magnitudes keep bins 0 .. frame_length//2.
  * Log floor eps = 1e-10 keeps silent frames finite.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip
from .errors import ConfigError

LOG_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------

def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@functools.lru_cache(maxsize=32)
def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    rev.setflags(write=False)
    return rev


@functools.lru_cache(maxsize=64)
def _twiddles(size: int) -> np.ndarray:
    half = size // 2
    w = np.exp(-2j * math.pi * np.arange(half) / size)
    w.setflags(write=False)
    return w


def fft(x) -> np.ndarray:
    """Radix-2 DFT over the last axis: X[k] = sum_n x[n] exp(-2i*pi*k*n/N).

    The last-axis length must be a power of two; callers zero-pad.  Leading
    axes are batched.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"fft length {n} is not a power of two; zero-pad first")
    y = np.array(x[..., _bit_reverse_indices(n)], dtype=np.complex128)
    size = 2
    while size <= n:
        half = size // 2
        tw = _twiddles(size)
        y = y.reshape(x.shape[:-1] + (n // size, size))
        odd = y[..., half:] * tw
        even = y[..., :half].copy()
        y[..., :half] = even + odd
        y[..., half:] = even - odd
        size *= 2
    return y.reshape(x.shape)


def ifft(x) -> np.ndarray:
    """Inverse of :func:`fft`; ifft(fft(v)) == v to ~1e-9 relative."""
    x = np.asarray(x)
    return np.conj(fft(np.conj(x))) / x.shape[-1]


# ---------------------------------------------------------------------------
# Mel scale
# ---------------------------------------------------------------------------

def mel_scale(f):
    """Hz -> mel, 2595 * log10(1 + f/700).  f must be >= 0."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("mel_scale domain is f >= 0")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def inverse_mel_scale(m):
    """mel -> Hz, 700 * (10**(m/2595) - 1).  m must be >= 0."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("inverse_mel_scale domain is m >= 0")
    out = 700.0 * (np.power(10.0, m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# STFT
# ---------------------------------------------------------------------------

@dataclass
class Spectrogram:
    """Magnitude STFT: n_frames x n_bins, n_bins = frame_length//2 + 1.

    fft_length records the (power-of-two) transform size actually used, which
    fixes the bin center frequencies at k * sample_rate / fft_length.
    """

    magnitudes: np.ndarray
    frame_length: int
    hop_length: int
    sample_rate: int
    fft_length: int

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]

    @property
    def n_bins(self) -> int:
        return self.magnitudes.shape[1]

    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.n_bins) * (self.sample_rate / self.fft_length)


def hann_window(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * math.pi * np.arange(n) / n)


def next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def stft(clip: AudioClip, frame_length: int, hop_length: int,
         window: str = "hann") -> Spectrogram:
    """Hann-windowed magnitude STFT.

    n_frames = 1 + (len - frame_length) // hop_length; each frame is windowed,
    zero-padded to the next power of two, and reduced to |FFT| on bins
    0 .. frame_length//2.
    """
    if window != "hann":
        raise ValueError(f"unsupported window {window!r}")
    if hop_length < 1:
        raise ValueError(f"hop_length must be >= 1, got {hop_length}")
    x = clip.samples
    if frame_length > len(x):
        raise ValueError(
            f"clip of {len(x)} samples shorter than one frame ({frame_length}); pad first")

    n_frames = 1 + (len(x) - frame_length) // hop_length
    n_fft = next_pow2(frame_length)
    n_bins = frame_length // 2 + 1

    offsets = np.arange(n_frames) * hop_length
    frames = x[offsets[:, None] + np.arange(frame_length)]
    frames = frames * hann_window(frame_length)
    if n_fft > frame_length:
        frames = np.pad(frames, ((0, 0), (0, n_fft - frame_length)))
    mags = np.abs(fft(frames))[:, :n_bins]
    return Spectrogram(mags, frame_length, hop_length, clip.sample_rate, n_fft)


# ---------------------------------------------------------------------------
# Mel filterbank
# ---------------------------------------------------------------------------

@dataclass
class MelFilterbank:
    """Triangular filters on the mel axis, each row peak-normalized to 1.0."""

    weights: np.ndarray        # n_mels x n_bins, entries in [0, 1]
    centers_hz: np.ndarray     # n_mels center frequencies, strictly increasing
    f_min: float
    f_max: float
    sample_rate: int

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]


@functools.lru_cache(maxsize=64)
def _filterbank_cached(n_mels, n_bins, sample_rate, f_min, f_max, fft_length):
    lo, hi = mel_scale(f_min), mel_scale(f_max)
    breaks_hz = inverse_mel_scale(np.linspace(lo, hi, n_mels + 2))
    bin_freqs = np.arange(n_bins) * (sample_rate / fft_length)

    weights = np.zeros((n_mels, n_bins))
    for j in range(n_mels):
        left, center, right = breaks_hz[j], breaks_hz[j + 1], breaks_hz[j + 2]
        rising = (bin_freqs - left) / (center - left)
        falling = (right - bin_freqs) / (right - center)
        tri = np.minimum(rising, falling)
        weights[j] = np.maximum(0.0, tri)
        peak = weights[j].max()
        if peak <= 0.0:
            raise ConfigError(
                f"mel filter {j} has no support: {n_bins} bins cannot resolve "
                f"{n_mels} mel bands over [{f_min}, {f_max}] Hz")
        weights[j] /= peak
    weights.setflags(write=False)
    centers = breaks_hz[1:-1].copy()
    centers.setflags(write=False)
    return weights, centers


def mel_filterbank(n_mels: int, n_fft_bins: int, sample_rate: int,
                   f_min: float = 0.0, f_max: float | None = None,
                   fft_length: int | None = None) -> MelFilterbank:
    """Build n_mels triangular filters over [f_min, f_max].

    n_mels + 2 break frequencies are spaced equally on the mel axis, mapped
    back to Hz; row j is the triangle over (break[j], break[j+1], break[j+2])
    sampled at bin center frequencies and peak-normalized.

    fft_length defaults to 2*(n_fft_bins - 1), the full-spectrum case; pass
    the true transform size when the bins are a truncated slice.
    """
    if n_mels < 1:
        raise ValueError(f"n_mels must be >= 1, got {n_mels}")
    if f_max is None:
        f_max = sample_rate / 2
    if f_max > sample_rate / 2:
        raise ValueError(f"f_max {f_max} above Nyquist {sample_rate / 2}")
    if not f_min < f_max:
        raise ValueError(f"need f_min < f_max, got [{f_min}, {f_max}]")
    if fft_length is None:
        fft_length = 2 * (n_fft_bins - 1)
    weights, centers = _filterbank_cached(
        n_mels, n_fft_bins, sample_rate, float(f_min), float(f_max), fft_length)
    return MelFilterbank(weights, centers, float(f_min), float(f_max), sample_rate)


# ---------------------------------------------------------------------------
# DCT-II
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=32)
def _dct2_matrix(n: int) -> np.ndarray:
    # orthonormal DCT-II basis: D[k, m] = s(k) cos(pi k (2m+1) / (2n))
    k = np.arange(n)[:, None]
    m = np.arange(n)[None, :]
    d = np.cos(math.pi * k * (2 * m + 1) / (2 * n))
    d[0] *= math.sqrt(1.0 / n)
    d[1:] *= math.sqrt(2.0 / n)
    d.setflags(write=False)
    return d


def dct2(v, n_out: int | None = None) -> np.ndarray:
    """Orthonormal DCT-II of a vector, truncated to the first n_out coefficients."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("dct2 of empty input")
    n = v.shape[-1]
    if n_out is None:
        n_out = n
    if n_out > n:
        raise ValueError(f"n_out {n_out} exceeds input length {n}")
    return v @ _dct2_matrix(n)[:n_out].T


def idct2(c, n: int | None = None) -> np.ndarray:
    """Inverse of the orthonormal DCT-II (transpose of the basis)."""
    c = np.asarray(c, dtype=np.float64)
    if n is None:
        n = c.shape[-1]
    return c @ _dct2_matrix(n)[: c.shape[-1]]


# ---------------------------------------------------------------------------
# MFCC
# ---------------------------------------------------------------------------

@dataclass
class MfccMatrix:
    """n_mfcc x n_frames cepstral coefficients plus the config that made them."""

    coeffs: np.ndarray
    frame_length: int
    hop_length: int
    n_mels: int
    n_mfcc: int

    @property
    def n_frames(self) -> int:
        return self.coeffs.shape[1]

    def to_csv(self) -> str:
        """One row per coefficient, one column per frame, shortest round-trip floats."""
        lines = [",".join(repr(float(v)) for v in row) for row in self.coeffs]
        return "\n".join(lines) + "\n"


def mfcc(clip: AudioClip, n_mfcc: int, frame_length: int, hop_length: int,
         n_mels: int = 26, f_min: float = 0.0,
         f_max: float | None = None) -> MfccMatrix:
    """MFCCs: |STFT| -> mel filterbank -> log -> DCT-II, truncated to n_mfcc rows."""
    if n_mfcc > n_mels:
        raise ValueError(f"n_mfcc {n_mfcc} exceeds n_mels {n_mels}")
    spec = stft(clip, frame_length, hop_length)
    fb = mel_filterbank(n_mels, spec.n_bins, clip.sample_rate, f_min, f_max,
                        fft_length=spec.fft_length)
    mel_energy = spec.magnitudes @ fb.weights.T            # n_frames x n_mels
    log_energy = np.log(mel_energy + LOG_FLOOR)
    coeffs = dct2(log_energy, n_mfcc).T                    # n_mfcc x n_frames
    return MfccMatrix(coeffs, frame_length, hop_length, n_mels, n_mfcc)
