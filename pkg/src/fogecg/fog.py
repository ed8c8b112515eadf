"""Fog-layer node: batching, per-batch analysis, local storage and alerting."""

from __future__ import annotations

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from .delineation import NormalRanges, classify, delineate, summarize_periods, HeartVerdict
from .errors import (
    EmptyPeriod,
    InsufficientBeats,
    InsufficientData,
    NoPlausiblePeaks,
    ParameterError,
    SequenceGap,
)
from .hrv import (
    NORMAL_VITALS,
    HrvMeasures,
    PeakDetectionConfig,
    VitalStatus,
    assess_vitals,
    compute_measures,
    detect_peaks,
)
from .signal import EcgSample, SampleStream

logger = logging.getLogger(__name__)

OFFLINE = "offline"
ONLINE = "online"

QUALITY_OK = "ok"
QUALITY_SINGLE_INTERVAL = "single_interval"
QUALITY_NO_VERDICT = "no_verdict"
QUALITY_UNANALYZABLE = "unanalyzable"


@dataclass(frozen=True)
class FogConfig:
    batch_size: int = 1500
    fs_hz: float = 200.0
    # documented serial link rate; informational only
    serial_baud_bps: int = 115200
    n_periods: int = 1

    def __post_init__(self):
        if self.batch_size < 2:
            raise ParameterError("batch_size must be >= 2")
        if not self.fs_hz > 0:
            raise ParameterError("fs_hz must be > 0")
        if self.n_periods < 1:
            raise ParameterError("n_periods must be >= 1")

    @property
    def nominal_send_period_s(self) -> float:
        return self.batch_size / self.fs_hz


@dataclass(frozen=True)
class BatchRecord:
    batch_id: int
    counters: tuple
    timestamps: tuple
    samples: tuple

    def __post_init__(self):
        if not len(self.counters) == len(self.timestamps) == len(self.samples):
            raise ParameterError("batch lists differ in length")

    def to_stream(self, fs_hz: float = 200.0) -> SampleStream:
        return SampleStream(self.counters, self.timestamps, self.samples, fs_hz)


@dataclass(frozen=True)
class ProcessedBatch:
    record: BatchRecord
    hrv: HrvMeasures | None
    verdict: HeartVerdict | None
    vital: VitalStatus
    quality: str
    produced_at_ms: float

    @property
    def batch_id(self) -> int:
        return self.record.batch_id

    def to_dict(self) -> dict:
        return {
            "batch_id": self.record.batch_id,
            "counters": list(self.record.counters),
            "timestamps": list(self.record.timestamps),
            "samples": list(self.record.samples),
            "hrv": None if self.hrv is None else self.hrv.to_dict(),
            "verdict": None if self.verdict is None else self.verdict.to_dict(),
            "vital": {"state": self.vital.state, "reasons": [list(r) for r in self.vital.reasons]},
            "quality": self.quality,
            "produced_at_ms": self.produced_at_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "ProcessedBatch":
        record = BatchRecord(d["batch_id"], tuple(d["counters"]), tuple(d["timestamps"]), tuple(d["samples"]))
        hrv = None
        if d.get("hrv") is not None:
            hrv = HrvMeasures.from_dict(d["hrv"], d["quality"] != QUALITY_SINGLE_INTERVAL)
        verdict = None if d.get("verdict") is None else HeartVerdict.from_dict(d["verdict"])
        v = d.get("vital") or {"state": "normal", "reasons": []}
        vital = VitalStatus(v["state"], tuple(tuple(r) for r in v["reasons"]))
        return cls(record, hrv, verdict, vital, d["quality"], d.get("produced_at_ms", 0.0))


@dataclass(frozen=True)
class AlertRecord:
    batch_id: int
    reasons: tuple
    sink: str
    delivered: bool
    error: str | None = None

    def to_dict(self) -> dict:
        d = {"batch_id": self.batch_id, "reasons": [list(r) for r in self.reasons], "sink": self.sink,
             "delivered": self.delivered}
        if self.error is not None:
            d["error"] = self.error
        return d


class AlertSink:
    """Alert destination stub.

    ``kind`` is one of ``log``, ``webhook-stub`` or ``sms-stub``.  Setting
    ``fail=True`` makes every delivery attempt fail, for exercising the
    isolation rule.
    """

    KINDS = ("log", "webhook-stub", "sms-stub")

    def __init__(self, kind: str, fail: bool = False):
        if kind not in self.KINDS:
            raise ParameterError(f"unknown sink kind {kind!r}")
        self.kind = kind
        self.fail = fail
        self.records: list[AlertRecord] = []

    def send(self, batch_id: int, reasons) -> None:
        if self.fail:
            raise ConnectionError(f"{self.kind} unreachable")
        if self.kind == "log":
            logger.warning("abnormal vitals in batch %d: %s", batch_id, reasons)

    def __repr__(self):
        return f"AlertSink({self.kind!r})"


def default_sinks() -> list:
    return [AlertSink(kind) for kind in AlertSink.KINDS]


def dispatch_alerts(vital: VitalStatus, sinks, batch_id: int) -> list:
    """Send one alert per sink for an abnormal status; failures are recorded, never raised."""
    if not vital.abnormal:
        return []
    out = []
    for sink in sinks:
        try:
            sink.send(batch_id, vital.reasons)
            rec = AlertRecord(batch_id, vital.reasons, sink.kind, True)
        except Exception as exc:  # a broken sink must not stall the pipeline
            rec = AlertRecord(batch_id, vital.reasons, sink.kind, False, str(exc))
        sink.records.append(rec)
        out.append(rec)
    return out


@dataclass
class FogState:
    mode: str = OFFLINE
    # batch_id -> ProcessedBatch, in production order, until acknowledged
    pending: OrderedDict = field(default_factory=OrderedDict)
    local_store: list = field(default_factory=list)
    flush_requested: bool = False


def transition(state: FogState, vital: VitalStatus) -> FogState:
    """Go online on the first abnormal status; never goes back by itself."""
    if vital.abnormal and state.mode == OFFLINE:
        state.mode = ONLINE
        state.flush_requested = True
    return state


def analyze_record(
    record: BatchRecord,
    fs_hz: float,
    peak_cfg: PeakDetectionConfig = PeakDetectionConfig(),
    ranges: NormalRanges = NormalRanges(),
    n_periods: int = 1,
):
    """Run detection, HRV measures, delineation and classification on one batch.

    Returns ``(hrv, verdict, quality)``.
    """
    stream = record.to_stream(fs_hz)
    try:
        peaks = detect_peaks(stream, peak_cfg)
        hrv = compute_measures(peaks)
    except (NoPlausiblePeaks, InsufficientData, InsufficientBeats):
        return None, None, QUALITY_UNANALYZABLE
    try:
        verdict = classify(summarize_periods(delineate(stream, peaks), n_periods), ranges)
    except (InsufficientBeats, EmptyPeriod, ParameterError):
        return hrv, None, QUALITY_NO_VERDICT
    quality = QUALITY_OK if hrv.successive_defined else QUALITY_SINGLE_INTERVAL
    return hrv, verdict, quality


class FogNode:
    """Single-owner state machine turning a sample feed into processed batches."""

    def __init__(
        self,
        cfg: FogConfig = FogConfig(),
        peak_cfg: PeakDetectionConfig = PeakDetectionConfig(),
        ranges: NormalRanges = NormalRanges(),
        vital_bounds: dict | None = None,
        sinks=None,
        mode: str = OFFLINE,
        store_path=None,
    ):
        if mode not in (OFFLINE, ONLINE):
            raise ParameterError(f"unknown mode {mode!r}")
        self.cfg = cfg
        self.peak_cfg = peak_cfg
        self.ranges = ranges
        self.vital_bounds = vital_bounds
        self.sinks = list(sinks) if sinks is not None else []
        self.state = FogState(mode=mode)
        self.store_path = Path(store_path) if store_path is not None else None
        if self.store_path is not None:
            self.store_path.write_text("")
        self.alerts: list[AlertRecord] = []
        self.in_flight: set = set()
        self._next_counter: int | None = None
        self._next_batch_id = 0
        self._open = ([], [], [])
        self.discarded_samples = 0

    # -- acquisition --------------------------------------------------------

    def ingest(self, sample: EcgSample) -> BatchRecord | None:
        expected = self._next_counter
        if expected is not None and sample.counter != expected:
            raise SequenceGap(expected, sample.counter)
        self._open[0].append(sample.counter)
        self._open[1].append(sample.timestamp_ms)
        self._open[2].append(sample.value)
        self._next_counter = sample.counter + 1
        if len(self._open[0]) < self.cfg.batch_size:
            return None
        return self._emit()

    def ingest_stream(self, stream: SampleStream) -> list:
        """Bulk equivalent of calling :meth:`ingest` on every sample in order."""
        if not len(stream):
            return []
        expected = self._next_counter
        first = int(stream.counters[0])
        if expected is not None and first != expected:
            raise SequenceGap(expected, first)
        out = []
        pos = 0
        n = len(stream)
        while pos < n:
            stop = pos + self.cfg.batch_size - len(self._open[0])
            for lst, arr in zip(self._open, (stream.counters, stream.timestamps_ms, stream.values)):
                lst.extend(arr[pos:stop].tolist())
            pos = min(stop, n)
            self._next_counter = self._open[0][-1] + 1
            if len(self._open[0]) == self.cfg.batch_size:
                out.append(self._emit())
        return out

    def restart_sequence(self) -> int:
        """Drop the partially filled batch and accept any next counter."""
        dropped = len(self._open[0])
        if dropped:
            logger.warning("sequence restart discards %d buffered samples", dropped)
        self.discarded_samples += dropped
        self._open = ([], [], [])
        self._next_counter = None
        return dropped

    @property
    def open_batch_len(self) -> int:
        return len(self._open[0])

    def _emit(self) -> BatchRecord:
        counters, timestamps, samples = self._open
        self._open = ([], [], [])
        rec = BatchRecord(self._next_batch_id, tuple(counters), tuple(timestamps), tuple(samples))
        self._next_batch_id += 1
        return rec

    # -- processing ---------------------------------------------------------

    def process_batch(self, record: BatchRecord, now_ms: float = 0.0) -> ProcessedBatch:
        hrv, verdict, quality = analyze_record(record, self.cfg.fs_hz, self.peak_cfg, self.ranges,
                                               self.cfg.n_periods)
        vital = assess_vitals(hrv, self.vital_bounds) if hrv is not None else NORMAL_VITALS
        pb = ProcessedBatch(record, hrv, verdict, vital, quality, now_ms)
        self.state.local_store.append(pb)
        self.state.pending[pb.batch_id] = pb
        if self.store_path is not None:
            with self.store_path.open("a") as fh:
                fh.write(pb.to_json() + "\n")
        return pb

    def handle(self, record: BatchRecord, now_ms: float = 0.0) -> ProcessedBatch:
        """Process a batch, then apply the mode transition and alerting it triggers."""
        pb = self.process_batch(record, now_ms)
        transition(self.state, pb.vital)
        self.alerts.extend(dispatch_alerts(pb.vital, self.sinks, pb.batch_id))
        return pb

    # -- forwarding ---------------------------------------------------------

    @property
    def mode(self) -> str:
        return self.state.mode

    def go_online(self) -> None:
        if self.state.mode == OFFLINE:
            self.state.mode = ONLINE
            self.state.flush_requested = True

    def go_offline(self) -> None:
        self.state.mode = OFFLINE

    def sendable(self) -> list:
        """Pending batches not yet handed to the link; empty while offline."""
        self.state.flush_requested = False
        if self.state.mode != ONLINE:
            return []
        return [pb for bid, pb in self.state.pending.items() if bid not in self.in_flight]

    def mark_in_flight(self, batch_id: int) -> None:
        self.in_flight.add(batch_id)

    def release(self, batch_id: int) -> None:
        """Return a batch the link refused to the sendable pool."""
        self.in_flight.discard(batch_id)

    def acknowledge(self, batch_id: int) -> None:
        self.state.pending.pop(batch_id, None)
        self.in_flight.discard(batch_id)


def load_local_store(path) -> list:
    with Path(path).open() as fh:
        return [ProcessedBatch.from_dict(json.loads(line)) for line in fh if line.strip()]

