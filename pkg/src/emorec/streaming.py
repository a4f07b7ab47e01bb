"""Sliding-window streaming inference over live or file audio.

A ring buffer holds the most recent window (default 3 s); every hop
(default 0.5 s) of newly arrived audio triggers one classification of the
buffered window: normalize -> pad/truncate to the training target length ->
feature window -> model scores.  Event emission depends only on cumulative
sample counts, so the same audio produces the same events regardless of
chunking or processing speed; a slow consumer delays events, it never drops
them.

Latency is wall-clock per event; the run summary reports p50/p95/max latency
and the real-time factor (processing time / audio duration).  RTF < 1 means
faster than real time; this artifact's service target is RTF < 0.25 on a
desktop CPU.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from . import features, nn, svm
from .audio_io import AudioClip
from .errors import ConfigError


@dataclass(frozen=True)
class StreamConfig:
    window_seconds: float = 3.0
    hop_seconds: float = 0.5
    emit_format: str = "text"        # "text" | "csv"
    model_path: str | None = None    # provenance; the engine takes the object

    def __post_init__(self):
        if not 0 < self.hop_seconds <= self.window_seconds:
            raise ConfigError(
                f"need 0 < hop ({self.hop_seconds}) <= window ({self.window_seconds})")
        if self.emit_format not in ("text", "csv"):
            raise ConfigError(f"unknown emit format {self.emit_format!r}")


@dataclass
class StreamEvent:
    t_start: float
    t_end: float
    probs: np.ndarray
    label: int
    latency_ms: float

    def text_line(self, class_names=None) -> str:
        name = class_names[self.label] if class_names else str(self.label)
        return (f"[{self.t_start:8.2f}s .. {self.t_end:8.2f}s] {name:<10} "
                f"p={self.probs[self.label]:.3f} latency={self.latency_ms:.1f}ms")

    def csv_row(self):
        return ([repr(self.t_start), repr(self.t_end)]
                + [repr(float(p)) for p in self.probs]
                + [self.label, repr(self.latency_ms)])


@dataclass
class StreamSummary:
    n_events: int
    audio_seconds: float
    processing_seconds: float
    latency_p50_ms: float
    latency_p95_ms: float
    latency_max_ms: float

    @property
    def rtf(self) -> float:
        return self.processing_seconds / self.audio_seconds if self.audio_seconds else 0.0

    def to_text(self) -> str:
        return (f"events: {self.n_events}\n"
                f"audio: {self.audio_seconds:.2f}s  processing: {self.processing_seconds:.3f}s  "
                f"RTF: {self.rtf:.4f}\n"
                f"latency ms: p50={self.latency_p50_ms:.2f} "
                f"p95={self.latency_p95_ms:.2f} max={self.latency_max_ms:.2f}\n")


class _RingBuffer:
    """Fixed-capacity sample buffer keeping the most recent `capacity` samples."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._buf = np.zeros(capacity)
        self._pos = 0
        self.total = 0

    def push(self, samples: np.ndarray):
        n = len(samples)
        if n >= self.capacity:
            self._buf[:] = samples[-self.capacity:]
            self._pos = 0
        else:
            first = min(n, self.capacity - self._pos)
            self._buf[self._pos : self._pos + first] = samples[:first]
            rest = n - first
            if rest:
                self._buf[:rest] = samples[first:]
            self._pos = (self._pos + n) % self.capacity
        self.total += n

    def window(self) -> np.ndarray:
        """Samples in arrival order; zero-prefixed until the buffer fills."""
        return np.concatenate([self._buf[self._pos:], self._buf[:self._pos]])


class StreamingClassifier:
    """Push audio chunks, get classification events back.

    The model bundle must carry the pipeline config it was trained with;
    feature geometry mismatches fail here, at construction.
    """

    def __init__(self, model, pipeline_cfg: features.PipelineConfig,
                 stream_cfg: StreamConfig, sample_rate: int):
        if sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {sample_rate}")
        expected = pipeline_cfg.n_mfcc * features.N_FRAMES
        if isinstance(model, nn.CnnModel):
            if model.input_shape[0] != pipeline_cfg.n_mfcc:
                raise ConfigError(
                    f"model expects {model.input_shape[0]} coefficients, "
                    f"pipeline produces {pipeline_cfg.n_mfcc}")
        elif isinstance(model, svm.SvmModel):
            if model.n_features != expected:
                raise ConfigError(
                    f"model expects {model.n_features} features, "
                    f"pipeline produces {expected}")
        else:
            raise ConfigError(f"unknown model type {type(model).__name__}")
        self.model = model
        self.pipeline_cfg = pipeline_cfg
        self.cfg = stream_cfg
        self.sample_rate = sample_rate
        self.window_samples = int(round(stream_cfg.window_seconds * sample_rate))
        self.hop_samples = int(round(stream_cfg.hop_seconds * sample_rate))
        if self.window_samples < 1 or self.hop_samples < 1:
            raise ConfigError("window/hop shorter than one sample")
        self._ring = _RingBuffer(self.window_samples)
        self._next_trigger = self.window_samples
        self.processing_seconds = 0.0
        self.latencies_ms: list[float] = []

    def _classify(self) -> StreamEvent:
        t0 = time.perf_counter()
        clip = AudioClip(self._ring.window(), self.sample_rate, source_id="stream")
        window = features.extract_window(clip, self.pipeline_cfg)
        if isinstance(self.model, nn.CnnModel):
            probs = nn.predict_proba(self.model, window.matrix[None, ..., None])[0]
        else:
            scores = svm.decision_values(self.model, features.flatten(window)[None])
            probs = nn.softmax(scores)[0]  # display squash; not calibrated
        elapsed = time.perf_counter() - t0
        self.processing_seconds += elapsed
        latency_ms = elapsed * 1000.0
        self.latencies_ms.append(latency_ms)
        end = self._ring.total / self.sample_rate
        return StreamEvent(t_start=end - self.cfg.window_seconds, t_end=end,
                           probs=probs, label=int(np.argmax(probs)),
                           latency_ms=latency_ms)

    def push(self, chunk) -> list[StreamEvent]:
        """Feed new samples; returns the events they complete, in time order."""
        chunk = np.asarray(chunk, dtype=np.float64)
        events = []
        pos = 0
        while pos < len(chunk):
            take = min(len(chunk) - pos, self._next_trigger - self._ring.total)
            self._ring.push(chunk[pos : pos + take])
            pos += take
            if self._ring.total == self._next_trigger:
                events.append(self._classify())
                self._next_trigger += self.hop_samples
        return events

    def summary(self) -> StreamSummary:
        lat = np.asarray(self.latencies_ms) if self.latencies_ms else np.zeros(1)
        return StreamSummary(
            n_events=len(self.latencies_ms),
            audio_seconds=self._ring.total / self.sample_rate,
            processing_seconds=self.processing_seconds,
            latency_p50_ms=float(np.percentile(lat, 50)),
            latency_p95_ms=float(np.percentile(lat, 95)),
            latency_max_ms=float(np.max(lat)))


def stream_infer(clip: AudioClip, model, pipeline_cfg: features.PipelineConfig,
                 stream_cfg: StreamConfig,
                 chunk_size: int = 4096) -> tuple[list[StreamEvent], StreamSummary]:
    """File-feed streaming: push the clip through in chunks.

    A D-second clip with window W and hop H yields floor((D-W)/H) + 1 events,
    the first at t_end = W.
    """
    engine = StreamingClassifier(model, pipeline_cfg, stream_cfg,
                                 clip.sample_rate)
    events = []
    for start in range(0, len(clip), chunk_size):
        events.extend(engine.push(clip.samples[start : start + chunk_size]))
    return events, engine.summary()


def events_csv(events) -> str:
    n_classes = len(events[0].probs) if events else 8
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t_start", "t_end"] + [f"p{i}" for i in range(n_classes)]
               + ["label", "latency_ms"])
    for e in events:
        w.writerow(e.csv_row())
    return buf.getvalue()
