"""Per-beat PR/QRS/QT measurement and classification against normal ranges.

Fiducials for each beat (R at sample ``r``):

* Q, S: minima in (R - 60 ms, R) and (R, R + 60 ms).
* P, T: maxima in (R - 250 ms, R - 80 ms) and (R + 80 ms, R + 400 ms).
* QRS onset, P onset: walking left along the leading flank of Q / P from
  its steepest point, the first point where |slope| falls below 10% of that
  flank's maximum |slope|.  QRS offset and T offset mirror this on the
  trailing flank of S / T.  Crossings are linearly interpolated between
  samples.

A beat whose search window is clipped by the stream edge, whose extremum
sits on a window boundary, or whose P/T wave does not stand clear of the
noise floor is kept but marked low-confidence and left out of the means.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPeriod, InsufficientBeats, ParameterError

SLOPE_FRACTION = 0.10
FLANK_MS = {"Q": 40.0, "S": 40.0, "P": 60.0, "T": 120.0}
# P and T must exceed this many noise standard deviations above baseline
PROMINENCE_SIGMAS = 3.0
# slopes are taken on a band-limited reconstruction this many times denser
# than the input; at 200 Hz the narrow Q/S waves span only a few samples
UPSAMPLE = 8

PARAMETERS = ("RR", "QT", "PR", "QRS")
_FIELD = {"RR": "rr_ms", "QT": "qt_ms", "PR": "pr_ms", "QRS": "qrs_ms"}


@dataclass(frozen=True)
class NormalRanges:
    rr_ms: tuple = (600.0, 1200.0)
    qt_ms: tuple = (320.0, 440.0)
    pr_ms: tuple = (120.0, 200.0)
    qrs_ms: tuple = (80.0, 100.0)

    def __post_init__(self):
        for name in ("rr_ms", "qt_ms", "pr_ms", "qrs_ms"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ParameterError(f"{name}: lower bound must be below upper bound")

    def for_parameter(self, parameter: str) -> tuple:
        return getattr(self, _FIELD[parameter])


@dataclass(frozen=True)
class BeatInterval:
    r_index: int
    rr_ms: float | None
    pr_ms: float | None
    qrs_ms: float | None
    qt_ms: float | None
    confident: bool = True


@dataclass
class BeatIntervals:
    beats: list = field(default_factory=list)

    def __len__(self):
        return len(self.beats)

    @property
    def confident_beats(self) -> list:
        return [b for b in self.beats if b.confident]

    @property
    def excluded_count(self) -> int:
        return sum(not b.confident for b in self.beats)

    def to_dict(self) -> dict:
        return {"beats": [b.__dict__ for b in self.beats], "excluded": self.excluded_count}


@dataclass(frozen=True)
class PeriodMeans:
    rr_ms: float
    pr_ms: float
    qrs_ms: float
    qt_ms: float

    def value(self, parameter: str) -> float:
        return getattr(self, _FIELD[parameter])

    def to_dict(self) -> dict:
        return {"rr_ms": self.rr_ms, "pr_ms": self.pr_ms, "qrs_ms": self.qrs_ms, "qt_ms": self.qt_ms}


@dataclass(frozen=True)
class Violation:
    parameter: str
    period: int
    value: float
    lo: float
    hi: float

    def to_dict(self) -> dict:
        return {"parameter": self.parameter, "period": self.period, "value": self.value, "range": [self.lo, self.hi]}


@dataclass(frozen=True)
class HeartVerdict:
    status: str
    violations: tuple = ()
    periods: tuple = ()

    @property
    def healthy(self) -> bool:
        return self.status == "healthy"

    def to_dict(self) -> dict:
        return {
            "periods": [p.to_dict() for p in self.periods],
            "status": self.status,
            "violations": [v.to_dict() for v in self.violations],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeartVerdict":
        periods = tuple(PeriodMeans(**p) for p in d["periods"])
        violations = tuple(
            Violation(v["parameter"], v["period"], v["value"], v["range"][0], v["range"][1]) for v in d["violations"]
        )
        return cls(d["status"], violations, periods)


def _extremum(x, lo: int, hi: int, find_max: bool):
    """Index of the max/min strictly inside (lo, hi); None if ambiguous."""
    a, b = lo + 1, hi
    if b - a < 3 or a < 0 or b > len(x):
        return None
    seg = x[a:b]
    i = int(np.argmax(seg) if find_max else np.argmin(seg))
    if i == 0 or i == len(seg) - 1:
        return None
    return a + i


def _flank_edge(slope, peak: int, flank: int, direction: int):
    """Fractional index where the flank beside ``peak`` flattens out.

    ``direction`` is -1 for the leading flank, +1 for the trailing one.
    """
    # slope[i] is x[i+1] - x[i], located half a sample after i
    if direction < 0:
        lo, hi = peak - flank, peak
    else:
        lo, hi = peak, peak + flank
    if lo < 1 or hi > len(slope) - 1:
        return None
    mag = np.abs(slope[lo:hi])
    steep = lo + int(np.argmax(mag))
    threshold = SLOPE_FRACTION * mag.max()
    if threshold <= 0:
        return None
    i = steep
    while lo <= i + direction < hi:
        nxt = i + direction
        s_in, s_out = abs(slope[i]), abs(slope[nxt])
        if s_out < threshold:
            frac = (s_in - threshold) / (s_in - s_out)
            return i + 0.5 + direction * frac
        i = nxt
    return None


def _upsample(x, factor: int):
    """Band-limited interpolation by zero-padding the spectrum.

    The trace is mirrored first so its periodic extension has no jump at
    the ends.  Output sample ``factor * i`` coincides with input sample ``i``.
    """
    n = len(x)
    if factor == 1 or n < 2:
        return np.asarray(x, dtype=float)
    spectrum = np.fft.rfft(np.concatenate([x, x[::-1]]))
    padded = np.zeros(n * factor + 1, dtype=complex)
    padded[: len(spectrum)] = spectrum
    return np.fft.irfft(padded, 2 * n * factor)[: n * factor] * factor


def _noise_sigma(x) -> float:
    d = np.diff(x)
    mad = np.median(np.abs(d - np.median(d)))
    return 1.4826 * mad / np.sqrt(2.0)


def _delineate_beat(x, slope, r: int, fs_hz: float, noise: float):
    n = lambda ms: int(round(ms * fs_hz / 1000.0))  # noqa: E731
    to_ms = 1000.0 / fs_hz
    q = _extremum(x, r - n(60), r, find_max=False)
    s = _extremum(x, r, r + n(60), find_max=False)
    p = _extremum(x, r - n(250), r - n(80), find_max=True)
    t = _extremum(x, r + n(80), r + n(400), find_max=True)
    if None in (q, s, p, t):
        return None
    qrs_on = _flank_edge(slope, q, n(FLANK_MS["Q"]), -1)
    qrs_off = _flank_edge(slope, s, n(FLANK_MS["S"]), +1)
    p_on = _flank_edge(slope, p, n(FLANK_MS["P"]), -1)
    t_off = _flank_edge(slope, t, n(FLANK_MS["T"]), +1)
    if None in (qrs_on, qrs_off, p_on, t_off):
        return None
    lo, hi = max(0, r - n(400)), min(len(x), r + n(600))
    base = float(np.median(x[lo:hi]))
    floor = PROMINENCE_SIGMAS * max(noise, 1.0)
    if x[p] - base < floor or x[t] - base < floor:
        return None
    pr = (qrs_on - p_on) * to_ms
    qrs = (qrs_off - qrs_on) * to_ms
    qt = (t_off - qrs_on) * to_ms
    if min(pr, qrs, qt) <= 0 or qrs >= qt:
        return None
    return pr, qrs, qt


def delineate(stream, peaks) -> BeatIntervals:
    """Measure PR, QRS and QT for every accepted peak of ``peaks``."""
    idx = list(peaks.peak_indices)
    if len(idx) < 2:
        raise InsufficientBeats(f"need at least two peaks, got {len(idx)}")
    x = np.asarray(stream.values, dtype=float)
    noise = _noise_sigma(x)
    xu = _upsample(x, UPSAMPLE)
    slope = np.diff(xu)
    to_ms = 1000.0 / stream.fs_hz
    beats = []
    for k, r in enumerate(idx):
        rr = (r - idx[k - 1]) * to_ms if k > 0 else None
        found = _delineate_beat(xu, slope, r * UPSAMPLE, stream.fs_hz * UPSAMPLE, noise)
        if found is None or (rr is not None and found[0] >= rr):
            beats.append(BeatInterval(r, rr, None, None, None, confident=False))
        else:
            beats.append(BeatInterval(r, rr, *found))
    return BeatIntervals(beats)


def _mean(values) -> float | None:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def summarize_periods(b: BeatIntervals, n_periods: int = 4) -> list:
    """Split beats into ``n_periods`` contiguous groups and average each.

    Groups share ``len // n_periods`` beats; the remainder goes to the last.
    """
    if n_periods < 1:
        raise ParameterError("n_periods must be >= 1")
    if len(b.beats) < n_periods:
        raise ParameterError(f"{len(b.beats)} beats cannot form {n_periods} periods")
    size = len(b.beats) // n_periods
    out = []
    for g in range(n_periods):
        stop = (g + 1) * size if g < n_periods - 1 else len(b.beats)
        group = [beat for beat in b.beats[g * size : stop] if beat.confident]
        means = [_mean(getattr(beat, f) for beat in group) for f in ("rr_ms", "pr_ms", "qrs_ms", "qt_ms")]
        if not group or None in means:
            raise EmptyPeriod(g + 1)
        out.append(PeriodMeans(*means))
    return out


def classify(period_means, ranges: NormalRanges = NormalRanges()) -> HeartVerdict:
    """Healthy iff every period's mean lies in its inclusive normal range."""
    period_means = list(period_means)
    violations = []
    for i, pm in enumerate(period_means, start=1):
        for parameter in PARAMETERS:
            lo, hi = ranges.for_parameter(parameter)
            value = pm.value(parameter)
            if not lo <= value <= hi:
                violations.append(Violation(parameter, i, value, lo, hi))
    status = "out_of_range" if violations else "healthy"
    return HeartVerdict(status, tuple(violations), tuple(period_means))
