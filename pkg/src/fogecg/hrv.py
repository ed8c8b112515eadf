"""R-peak detection with a dynamic threshold sweep and time-domain HRV measures.

The detector follows the moving-average approach popularised by van Gent's
heart-rate analysis toolkit: the signal is compared against its own rolling
mean raised by a sweep of percentages, each region above the raised mean
contributes its maximum as a candidate R peak, and the percentage whose peak
set has the most regular rhythm (lowest RR standard deviation) at a
plausible heart rate wins.  A second pass rejects peaks that arrive too
early relative to the running mean RR interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientBeats, InsufficientData, NoPlausiblePeaks, ParameterError

DEFAULT_SWEEP = (5, 10, 15, 20, 25, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120, 150, 200)


@dataclass(frozen=True)
class PeakDetectionConfig:
    ma_window_s: float = 0.75
    threshold_sweep_pct: tuple = DEFAULT_SWEEP
    bpm_min: float = 40.0
    bpm_max: float = 180.0
    outlier_rr_pct: float = 30.0

    def __post_init__(self):
        if not self.ma_window_s > 0:
            raise ParameterError("ma_window_s must be > 0")
        if len(self.threshold_sweep_pct) == 0:
            raise ParameterError("threshold sweep must not be empty")
        if not 0 < self.bpm_min < self.bpm_max:
            raise ParameterError("need 0 < bpm_min < bpm_max")
        if not self.outlier_rr_pct > 0:
            raise ParameterError("outlier_rr_pct must be > 0")


@dataclass
class PeakList:
    peak_indices: list
    rejected_indices: list = field(default_factory=list)
    rr_ms: list = field(default_factory=list)
    chosen_threshold_pct: float | None = None
    fs_hz: float = 200.0

    @property
    def bpm(self) -> float:
        return 60000.0 / float(np.mean(self.rr_ms)) if self.rr_ms else float("nan")


@dataclass(frozen=True)
class HrvMeasures:
    bpm: float
    ibi_ms: float
    sdnn_ms: float
    rmssd_ms: float
    pnn50_pct: float
    # False when only one RR interval exists: rmssd/pnn50 are then reported as 0
    successive_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "bpm": self.bpm,
            "ibi_ms": self.ibi_ms,
            "sdnn_ms": self.sdnn_ms,
            "rmssd_ms": self.rmssd_ms,
            "pnn50_pct": self.pnn50_pct,
        }

    @classmethod
    def from_dict(cls, d: dict, successive_defined: bool = True) -> "HrvMeasures":
        return cls(d["bpm"], d["ibi_ms"], d["sdnn_ms"], d["rmssd_ms"], d["pnn50_pct"], successive_defined)


@dataclass(frozen=True)
class VitalStatus:
    state: str
    reasons: tuple = ()

    @property
    def abnormal(self) -> bool:
        return self.state == "abnormal"


NORMAL_VITALS = VitalStatus("normal")

# measure -> (low, high); None leaves that side unbounded
DEFAULT_VITAL_BOUNDS = {"bpm": (50.0, 120.0)}


def moving_average(values, window: int) -> np.ndarray:
    """Centred rolling mean; the window shrinks at both ends of the signal."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    half = max(int(window), 1) // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    lo = np.clip(idx - half, 0, n)
    hi = np.clip(idx + half + 1, 0, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def _region_peaks(x: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    above = x > threshold
    if not above.any():
        return np.empty(0, dtype=np.int64)
    edges = np.diff(above.astype(np.int8), prepend=0, append=0)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return np.array([s + int(np.argmax(x[s:e])) for s, e in zip(starts, stops)], dtype=np.int64)


def _reject_early_peaks(peaks: np.ndarray, fs_hz: float, outlier_pct: float):
    """Split candidates into accepted and rejected peaks.

    A peak closer to its predecessor than ``(1 - outlier_pct)`` of the
    running mean RR is uncertain.  Of the two peaks involved, the one whose
    removal leaves the interval from the preceding accepted beat closest to
    the running mean is dropped.  Long gaps are kept as they are.
    """
    if len(peaks) < 3:
        return list(peaks), []
    to_ms = 1000.0 / fs_hz
    ref = float(np.median(np.diff(peaks))) * to_ms
    accepted = [int(peaks[0])]
    accepted_rr = []
    rejected = []
    band = outlier_pct / 100.0
    for p in peaks[1:]:
        p = int(p)
        interval = (p - accepted[-1]) * to_ms
        if interval >= (1 - band) * ref:
            accepted_rr.append(interval)
            accepted.append(p)
            ref = float(np.mean(accepted_rr))
            continue
        if len(accepted) >= 2:
            before = accepted[-2]
            keep_last = abs((accepted[-1] - before) * to_ms - ref)
            keep_new = abs((p - before) * to_ms - ref)
            if keep_new < keep_last:
                rejected.append(accepted.pop())
                accepted_rr.pop()
                accepted_rr.append((p - before) * to_ms)
                accepted.append(p)
                ref = float(np.mean(accepted_rr))
                continue
        rejected.append(p)
    return accepted, sorted(rejected)


def detect_peaks_array(values, fs_hz: float, cfg: PeakDetectionConfig = PeakDetectionConfig()) -> PeakList:
    x = np.asarray(values, dtype=float)
    window = int(round(cfg.ma_window_s * fs_hz))
    if len(x) < 2 * window:
        raise InsufficientData(f"need at least {2 * window} samples, got {len(x)}")
    ma = moving_average(x, window)
    to_ms = 1000.0 / fs_hz

    best = None
    for pct in cfg.threshold_sweep_pct:
        cand = _region_peaks(x, ma * (1.0 + pct / 100.0))
        if len(cand) < 3:
            continue
        rr = np.diff(cand) * to_ms
        bpm = 60000.0 / rr.mean()
        if not cfg.bpm_min <= bpm <= cfg.bpm_max:
            continue
        rrsd = float(rr.std())
        if best is None or rrsd < best[0]:
            best = (rrsd, pct, cand)
    if best is None:
        raise NoPlausiblePeaks("no threshold in the sweep gives a plausible heart rate")

    _, pct, cand = best
    accepted, rejected = _reject_early_peaks(cand, fs_hz, cfg.outlier_rr_pct)
    rr_ms = (np.diff(accepted) * to_ms).tolist()
    return PeakList(accepted, rejected, rr_ms, pct, fs_hz)


def detect_peaks(stream, cfg: PeakDetectionConfig = PeakDetectionConfig()) -> PeakList:
    """Locate R peaks in a :class:`~fogecg.signal.SampleStream`."""
    return detect_peaks_array(stream.values, stream.fs_hz, cfg)


def measures_from_rr(rr_ms) -> HrvMeasures:
    rr = np.asarray(rr_ms, dtype=float)
    if len(rr) < 1:
        raise InsufficientBeats("need at least two peaks")
    ibi = float(rr.mean())
    sdnn = float(rr.std())
    if len(rr) < 2:
        return HrvMeasures(60000.0 / ibi, ibi, sdnn, 0.0, 0.0, successive_defined=False)
    diffs = np.diff(rr)
    rmssd = float(np.sqrt(np.mean(diffs**2)))
    pnn50 = 100.0 * float(np.count_nonzero(np.abs(diffs) > 50.0)) / len(diffs)
    return HrvMeasures(60000.0 / ibi, ibi, sdnn, rmssd, pnn50)


def compute_measures(peaks: PeakList) -> HrvMeasures:
    if len(peaks.peak_indices) < 2:
        raise InsufficientBeats(f"need at least two accepted peaks, got {len(peaks.peak_indices)}")
    return measures_from_rr(peaks.rr_ms)


def assess_vitals(m: HrvMeasures, bounds: dict | None = None) -> VitalStatus:
    """Flag every measure outside its configured ``(low, high)`` range."""
    bounds = DEFAULT_VITAL_BOUNDS if bounds is None else bounds
    reasons = []
    for name, (lo, hi) in bounds.items():
        value = getattr(m, name)
        if lo is not None and value < lo:
            reasons.append((name, f"<{lo:g}"))
        if hi is not None and value > hi:
            reasons.append((name, f">{hi:g}"))
    if reasons:
        return VitalStatus("abnormal", tuple(reasons))
    return NORMAL_VITALS
