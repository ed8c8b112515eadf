"""Synthetic ECG source, ADC quantizer and the sample-stream CSV format.

Each beat is the sum of five Gaussian bumps (P, Q, R, S, T).  Wave
boundaries are defined on the continuous template as the point where a
bump's slope has fallen to 10% of its peak slope, i.e. ``EDGE_SIGMAS``
standard deviations from its centre.  The generator places the bumps so
those boundaries realize the requested PR/QRS/QT durations, which makes
the returned annotations usable as ground truth downstream.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

from .errors import FormatError, ParameterError

CSV_HEADER = ("counter", "timestamp_ms", "value")


def _edge_sigmas(fraction: float = 0.1) -> float:
    # |d/du exp(-u^2/2)| = u exp(-u^2/2), peaks at u=1; find u>1 where it
    # drops to `fraction` of the peak.
    target = fraction * math.exp(-0.5)
    lo, hi = 1.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * math.exp(-0.5 * mid * mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


EDGE_SIGMAS = _edge_sigmas()

# (amplitude in normalized units, gaussian sigma in ms)
DEFAULT_WAVES = {
    "P": (0.15, 15.0),
    "Q": (-0.15, 5.0),
    "R": (1.0, 7.0),
    "S": (-0.15, 5.0),
    "T": (0.3, 30.0),
}


@dataclass(frozen=True)
class EcgSynthParams:
    fs_hz: float = 200.0
    rr_ms: float = 800.0
    pr_ms: float = 160.0
    qrs_ms: float = 90.0
    qt_ms: float = 380.0
    waves: Mapping[str, tuple] = field(default_factory=lambda: dict(DEFAULT_WAVES))
    # DC level added so the negative Q/S deflections stay inside the ADC range
    baseline: float = 0.175
    noise_std: float = 0.0
    duration_s: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if not self.fs_hz > 0:
            raise ParameterError(f"fs_hz must be > 0, got {self.fs_hz}")
        if not self.duration_s >= 0:
            raise ParameterError(f"duration_s must be >= 0, got {self.duration_s}")
        for name in ("rr_ms", "pr_ms", "qrs_ms", "qt_ms"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        if not self.pr_ms < self.rr_ms:
            raise ParameterError("pr_ms must be < rr_ms")
        if not self.qt_ms < self.rr_ms:
            raise ParameterError("qt_ms must be < rr_ms")
        if not self.noise_std >= 0:
            raise ParameterError(f"noise_std must be >= 0, got {self.noise_std}")
        missing = set("PQRST") - set(self.waves)
        if missing:
            raise ParameterError(f"wave profile missing {sorted(missing)}")
        for name, (_, sigma) in self.waves.items():
            if not sigma > 0:
                raise ParameterError(f"wave {name} width must be > 0")
        # Q and S minima must sit inside the QRS, either side of R
        half_qrs = self.qrs_ms / 2
        if EDGE_SIGMAS * max(self.waves["Q"][1], self.waves["S"][1]) >= half_qrs:
            raise ParameterError("qrs_ms too short for the Q/S widths")


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 10
    full_scale: float = 1.2

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise ParameterError(f"bits must be in [1, 16], got {self.bits}")
        if not self.full_scale > 0:
            raise ParameterError(f"full_scale must be > 0, got {self.full_scale}")

    @property
    def max_code(self) -> int:
        return (1 << self.bits) - 1


@dataclass(frozen=True)
class EcgSample:
    counter: int
    timestamp_ms: int
    value: int


@dataclass(frozen=True)
class BeatAnnotation:
    beat_index: int
    r_time_ms: float
    pr_ms: float
    qrs_ms: float
    qt_ms: float


class SampleStream:
    """Ordered ECG samples held as three parallel integer arrays."""

    def __init__(self, counters, timestamps_ms, values, fs_hz: float = 200.0):
        self.counters = np.asarray(counters, dtype=np.int64)
        self.timestamps_ms = np.asarray(timestamps_ms, dtype=np.int64)
        self.values = np.asarray(values, dtype=np.int64)
        self.fs_hz = float(fs_hz)
        n = len(self.counters)
        if len(self.timestamps_ms) != n or len(self.values) != n:
            raise ParameterError("counters, timestamps and values differ in length")
        if n and self.counters[0] < 0:
            raise ParameterError("counters must be non-negative")
        if n > 1:
            if np.any(np.diff(self.counters) != 1):
                raise ParameterError("counters must increase by exactly 1")
            if np.any(np.diff(self.timestamps_ms) < 0):
                raise ParameterError("timestamps must be non-decreasing")

    @classmethod
    def from_values(cls, values, fs_hz: float = 200.0, start_counter: int = 0):
        values = np.asarray(values, dtype=np.int64)
        counters = np.arange(start_counter, start_counter + len(values), dtype=np.int64)
        return cls(counters, counter_timestamps(counters, fs_hz), values, fs_hz)

    @classmethod
    def from_samples(cls, samples, fs_hz: float = 200.0):
        samples = list(samples)
        return cls(
            [s.counter for s in samples],
            [s.timestamp_ms for s in samples],
            [s.value for s in samples],
            fs_hz,
        )

    @classmethod
    def concatenate(cls, streams, fs_hz: float = 200.0):
        streams = list(streams)
        if not streams:
            return cls([], [], [], fs_hz)
        return cls(
            np.concatenate([s.counters for s in streams]),
            np.concatenate([s.timestamps_ms for s in streams]),
            np.concatenate([s.values for s in streams]),
            streams[0].fs_hz,
        )

    def __len__(self) -> int:
        return len(self.counters)

    def __iter__(self) -> Iterator[EcgSample]:
        for c, t, v in zip(self.counters.tolist(), self.timestamps_ms.tolist(), self.values.tolist()):
            yield EcgSample(c, t, v)

    def __getitem__(self, item):
        if isinstance(item, slice):
            return SampleStream(self.counters[item], self.timestamps_ms[item], self.values[item], self.fs_hz)
        return EcgSample(int(self.counters[item]), int(self.timestamps_ms[item]), int(self.values[item]))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleStream):
            return NotImplemented
        return (
            self.fs_hz == other.fs_hz
            and np.array_equal(self.counters, other.counters)
            and np.array_equal(self.timestamps_ms, other.timestamps_ms)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"SampleStream(n={len(self)}, fs_hz={self.fs_hz})"


def counter_timestamps(counters, fs_hz: float) -> np.ndarray:
    """Millisecond timestamps for sample counters, rounded to whole ms."""
    counters = np.asarray(counters, dtype=np.int64)
    return np.floor(counters * (1000.0 / fs_hz) + 0.5).astype(np.int64)


def quantize(analog_value: float, cfg: AdcConfig = AdcConfig()) -> int:
    """Map a normalized value onto an ADC code, rounding half up and saturating."""
    code = math.floor(analog_value / cfg.full_scale * cfg.max_code + 0.5)
    return min(max(code, 0), cfg.max_code)


def quantize_array(values, cfg: AdcConfig = AdcConfig()) -> np.ndarray:
    codes = np.floor(np.asarray(values, dtype=float) / cfg.full_scale * cfg.max_code + 0.5)
    return np.clip(codes, 0, cfg.max_code).astype(np.int64)


def wave_centers(params: EcgSynthParams, r_time_ms: float) -> dict:
    """Centre time (ms) of every bump of the beat whose R peak is at ``r_time_ms``."""
    w = params.waves
    onset = r_time_ms - params.qrs_ms / 2
    offset = r_time_ms + params.qrs_ms / 2
    return {
        "P": onset - params.pr_ms + EDGE_SIGMAS * w["P"][1],
        "Q": onset + EDGE_SIGMAS * w["Q"][1],
        "R": r_time_ms,
        "S": offset - EDGE_SIGMAS * w["S"][1],
        "T": onset + params.qt_ms - EDGE_SIGMAS * w["T"][1],
    }


def r_peak_times(params: EcgSynthParams) -> np.ndarray:
    """R times every ``rr_ms``, offset by half an interval so no beat is cut at t=0."""
    duration_ms = params.duration_s * 1000.0
    n_beats = max(0, math.ceil(duration_ms / params.rr_ms - 0.5))
    return (np.arange(n_beats) + 0.5) * params.rr_ms


def synthesize_analog(params: EcgSynthParams):
    """Noisy normalized waveform (before quantization) plus beat annotations."""
    params.validate()
    n = int(round(params.duration_s * params.fs_hz))
    t_ms = np.arange(n) * (1000.0 / params.fs_hz)
    signal = np.full(n, params.baseline, dtype=float)
    annotations = []
    for k, r_time in enumerate(r_peak_times(params)):
        for name, center in wave_centers(params, r_time).items():
            amp, sigma = params.waves[name]
            lo = np.searchsorted(t_ms, center - 6 * sigma)
            hi = np.searchsorted(t_ms, center + 6 * sigma)
            if hi > lo:
                x = (t_ms[lo:hi] - center) / sigma
                signal[lo:hi] += amp * np.exp(-0.5 * x * x)
        annotations.append(BeatAnnotation(k, float(r_time), params.pr_ms, params.qrs_ms, params.qt_ms))
    if params.noise_std > 0:
        rng = np.random.default_rng(params.seed)
        signal += rng.normal(0.0, params.noise_std, n)
    return signal, annotations


def synthesize(params: EcgSynthParams, adc: AdcConfig = AdcConfig()):
    """Return ``(stream, annotations)`` for a quantized synthetic recording."""
    analog, annotations = synthesize_analog(params)
    stream = SampleStream.from_values(quantize_array(analog, adc), params.fs_hz)
    return stream, annotations


def write_csv(stream: SampleStream, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        writer.writerows(zip(stream.counters.tolist(), stream.timestamps_ms.tolist(), stream.values.tolist()))
    return path


def _infer_fs(timestamps) -> float | None:
    if len(timestamps) < 2 or timestamps[-1] == timestamps[0]:
        return None
    return round(1000.0 * (len(timestamps) - 1) / (timestamps[-1] - timestamps[0]), 6)


def load_csv(path, fs_hz: float | None = None) -> SampleStream:
    """Read a ``counter,timestamp_ms,value`` file.

    When ``fs_hz`` is not given it is inferred from the timestamp span
    (200 Hz for files with fewer than two samples).
    """
    path = Path(path)
    counters, stamps, values = [], [], []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise FormatError("missing header row", line=1)
        header = [h.strip() for h in header]
        missing = [c for c in CSV_HEADER if c not in header]
        if missing:
            raise FormatError(f"missing columns {missing}", line=1)
        idx = [header.index(c) for c in CSV_HEADER]
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                c, t, v = (int(row[i].strip()) for i in idx)
            except (ValueError, IndexError):
                raise FormatError(f"expected integer counter,timestamp_ms,value, got {row!r}", line=lineno) from None
            if counters and c != counters[-1] + 1:
                raise FormatError(f"counter {c} does not follow {counters[-1]}", line=lineno)
            if counters and t < stamps[-1]:
                raise FormatError(f"timestamp {t} goes backwards", line=lineno)
            if c < 0:
                raise FormatError("negative counter", line=lineno)
            counters.append(c)
            stamps.append(t)
            values.append(v)
    if fs_hz is None:
        fs_hz = _infer_fs(stamps) or 200.0
    return SampleStream(counters, stamps, values, fs_hz)


def write_annotations(annotations, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps([a.__dict__ for a in annotations], indent=1) + "\n")
    return path


def load_annotations(path) -> list:
    return [BeatAnnotation(**row) for row in json.loads(Path(path).read_text())]
