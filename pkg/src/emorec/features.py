"""Clip -> classifier-ready feature window.

The canonical unit fed to both classifiers is an ``n_mfcc x 26`` MFCC matrix
(13 x 26 by default): clips are z-scored per clip, zero-padded head and tail
to a fixed ``target_length``, run through the MFCC front end with a hop
derived so the STFT yields at least 26 frames, cut to the first 26 frames,
and finally z-scored over all entries of the window.

Augmentations: time reversal and polarity inversion.  Inversion leaves the
magnitude spectrum, hence the feature window, bit-identical to the original;
anything consuming augmented manifests is told about these duplicates rather
than having them silently dropped.

Feature cache on disk: 16-byte header (8-byte magic ``EMOFEATC``, u32
version, u32 record count), then per record a u16-length-prefixed UTF-8 id,
u8 label code, u16 n_mfcc, u16 n_frames, and the row-major float32 matrix.
All integers and floats little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip
from .dsp import mfcc
from .errors import ConfigError, FormatError

N_FRAMES = 26

CACHE_MAGIC = b"EMOFEATC"
CACHE_VERSION = 1


@dataclass(frozen=True)
class PipelineConfig:
    """Frozen preprocessing constants shared by training and inference.

    target_length is normally the longest clip in the training manifest;
    hop_length is derived from it so the STFT yields >= 26 frames.
    """

    n_mfcc: int = 13
    target_length: int = 0
    frame_length: int = 2048
    n_mels: int = 26
    f_min: float = 0.0
    f_max: float | None = None
    augmentations: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.n_mfcc < 1:
            raise ConfigError(f"n_mfcc must be >= 1, got {self.n_mfcc}")
        if self.n_mels < self.n_mfcc:
            raise ConfigError(
                f"n_mels {self.n_mels} smaller than n_mfcc {self.n_mfcc}")
        if self.target_length < self.frame_length:
            raise ConfigError(
                f"target_length {self.target_length} below frame_length {self.frame_length}")
        if self.hop_length < 1:
            raise ConfigError(
                f"target_length {self.target_length} too short to produce "
                f"{N_FRAMES} frames of {self.frame_length} samples")
        bad = set(self.augmentations) - {"reverse", "invert"}
        if bad:
            raise ConfigError(f"unknown augmentations {sorted(bad)}")

    @property
    def hop_length(self) -> int:
        return (self.target_length - self.frame_length) // (N_FRAMES - 1)

    def to_dict(self) -> dict:
        return {
            "n_mfcc": self.n_mfcc,
            "target_length": self.target_length,
            "frame_length": self.frame_length,
            "n_mels": self.n_mels,
            "f_min": self.f_min,
            "f_max": self.f_max,
            "augmentations": sorted(self.augmentations),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        d["augmentations"] = frozenset(d.get("augmentations", ()))
        return cls(**d)


@dataclass
class FeatureWindow:
    """n_mfcc x 26 matrix, z-scored over all entries unless degenerate."""

    matrix: np.ndarray
    n_mfcc: int
    standardized: bool = True

    def __post_init__(self):
        if self.matrix.shape != (self.n_mfcc, N_FRAMES):
            raise ValueError(
                f"window shape {self.matrix.shape} != ({self.n_mfcc}, {N_FRAMES})")


def normalize_loudness(clip: AudioClip) -> AudioClip:
    """Per-clip z-score: (x - mean) / population std; constant clips go to zero."""
    x = clip.samples
    mu = x.mean()
    sigma = x.std()
    if sigma < 1e-12:
        y = np.zeros_like(x)
    else:
        y = (x - mu) / sigma
    return AudioClip(y, clip.sample_rate, source_id=clip.source_id)


def pad_to_length(clip: AudioClip, target: int) -> AudioClip:
    """Zero-pad head and tail to reach target; head gets the odd extra sample."""
    n = len(clip)
    if n > target:
        raise ValueError(
            f"clip of {n} samples exceeds target {target}; truncate explicitly")
    pad = target - n
    head = (pad + 1) // 2
    y = np.concatenate([np.zeros(head), clip.samples, np.zeros(pad - head)])
    return AudioClip(y, clip.sample_rate, source_id=clip.source_id)


def truncate_to_length(clip: AudioClip, target: int) -> AudioClip:
    """Keep the centered target-sample slice, dropping the head-heavy excess.

    Exact inverse of pad_to_length on padded clips.
    """
    n = len(clip)
    if n < target:
        raise ValueError(f"clip of {n} samples shorter than target {target}")
    start = (n - target + 1) // 2
    return AudioClip(clip.samples[start : start + target].copy(),
                     clip.sample_rate, source_id=clip.source_id)


def augment_reverse(clip: AudioClip) -> AudioClip:
    return AudioClip(clip.samples[::-1].copy(), clip.sample_rate,
                     source_id=clip.source_id)


def augment_invert(clip: AudioClip) -> AudioClip:
    return AudioClip(-clip.samples, clip.sample_rate, source_id=clip.source_id)


# Inverted clips produce bit-identical feature windows (|FFT(-x)| == |FFT(x)|),
# so augmented datasets carry duplicate features for every "invert" record.
AUGMENTATIONS = {"reverse": augment_reverse, "invert": augment_invert}
FEATURE_PRESERVING_AUGMENTATIONS = frozenset({"invert"})


def make_feature_window(clip: AudioClip, cfg: PipelineConfig) -> FeatureWindow:
    """MFCC the (already normalized and padded) clip and z-score the window.

    The clip must be exactly cfg.target_length samples; the first 26 STFT
    frames are kept.
    """
    if len(clip) != cfg.target_length:
        raise ValueError(
            f"clip of {len(clip)} samples is not padded to target_length "
            f"{cfg.target_length}")
    # silence carries no information; its window is defined as all zeros
    # (the MFCC of silence is a nonzero constant in coefficient 0 only)
    if not np.any(clip.samples):
        return FeatureWindow(np.zeros((cfg.n_mfcc, N_FRAMES)), cfg.n_mfcc)
    m = mfcc(clip, cfg.n_mfcc, cfg.frame_length, cfg.hop_length,
             n_mels=cfg.n_mels, f_min=cfg.f_min, f_max=cfg.f_max)
    window = m.coeffs[:, :N_FRAMES]
    mu = window.mean()
    sigma = window.std()
    if sigma < 1e-12:
        window = np.zeros_like(window)
    else:
        window = (window - mu) / sigma
    return FeatureWindow(window, cfg.n_mfcc)


def extract_window(clip: AudioClip, cfg: PipelineConfig) -> FeatureWindow:
    """Full per-clip pipeline: normalize, truncate if over-long, pad, window."""
    clip = normalize_loudness(clip)
    if len(clip) > cfg.target_length:
        clip = truncate_to_length(clip, cfg.target_length)
    clip = pad_to_length(clip, cfg.target_length)
    return make_feature_window(clip, cfg)


def flatten(window: FeatureWindow) -> np.ndarray:
    """Row-major vector of length n_mfcc * 26; entry (i, j) lands at i*26 + j."""
    return window.matrix.reshape(-1).copy()


# ---------------------------------------------------------------------------
# Feature cache
# ---------------------------------------------------------------------------

def save_feature_cache(path, records):
    """Write (sample_id, label_code, matrix) records to the binary cache."""
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", CACHE_VERSION, len(records)))
        for sample_id, label, matrix in records:
            ident = sample_id.encode("utf-8")
            n_mfcc, n_frames = matrix.shape
            fh.write(struct.pack("<H", len(ident)))
            fh.write(ident)
            fh.write(struct.pack("<BHH", label, n_mfcc, n_frames))
            fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())


def load_feature_cache(path):
    """Read the binary cache back as a list of (sample_id, label_code, matrix)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CACHE_MAGIC:
        raise FormatError(f"bad feature cache magic {data[:8]!r}")
    version, count = struct.unpack_from("<II", data, 8)
    if version != CACHE_VERSION:
        raise FormatError(f"feature cache version {version}, expected {CACHE_VERSION}")
    pos = 16
    out = []
    for _ in range(count):
        (id_len,) = struct.unpack_from("<H", data, pos)
        pos += 2
        sample_id = data[pos : pos + id_len].decode("utf-8")
        pos += id_len
        label, n_mfcc, n_frames = struct.unpack_from("<BHH", data, pos)
        pos += 5
        n_bytes = n_mfcc * n_frames * 4
        matrix = np.frombuffer(data[pos : pos + n_bytes], dtype="<f4")
        matrix = matrix.reshape(n_mfcc, n_frames).astype(np.float64)
        pos += n_bytes
        out.append((sample_id, label, matrix))
    if pos != len(data):
        raise FormatError(f"feature cache has {len(data) - pos} trailing bytes")
    return out
