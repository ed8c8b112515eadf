"""Intermittent fog-to-cloud link on a virtual clock, plus the ordered cloud store.

Nothing here sleeps: time only moves when the event loop pops the next
scheduled event, and every random draw comes from one seeded generator.
"""

from __future__ import annotations

import csv
import heapq
import itertools
import json
import random
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DegenerateSpan, IncompleteRange, ParameterError
from .signal import SampleStream


class EventLoop:
    """Minimal discrete-event scheduler keyed on virtual milliseconds."""

    def __init__(self, start_ms: float = 0.0):
        self.now = float(start_ms)
        self._queue: list = []
        self._seq = itertools.count()

    def schedule(self, at_ms: float, fn: Callable, *args) -> None:
        if at_ms < self.now:
            raise ParameterError(f"cannot schedule in the past ({at_ms} < {self.now})")
        heapq.heappush(self._queue, (at_ms, next(self._seq), fn, args))

    def run(self, until_ms: float | None = None) -> None:
        while self._queue:
            at, _, fn, args = self._queue[0]
            if until_ms is not None and at > until_ms:
                break
            heapq.heappop(self._queue)
            self.now = at
            fn(*args)
        if until_ms is not None:
            self.now = max(self.now, until_ms)

    def __len__(self):
        return len(self._queue)


@dataclass(frozen=True)
class LinkModel:
    base_latency_ms: float = 80.0
    jitter_ms: float = 0.0
    # half-open [start_ms, end_ms) intervals with no connectivity
    disconnect_windows: tuple = ()
    seed: int = 0
    # None = unbounded store-and-forward buffer
    max_buffer: int | None = None

    def __post_init__(self):
        windows = tuple((float(s), float(e)) for s, e in self.disconnect_windows)
        object.__setattr__(self, "disconnect_windows", windows)
        if self.base_latency_ms < 0 or self.jitter_ms < 0:
            raise ParameterError("latencies must be >= 0")
        prev_end = float("-inf")
        for s, e in windows:
            if not s < e:
                raise ParameterError(f"empty disconnect window [{s}, {e})")
            if s < prev_end:
                raise ParameterError("disconnect windows must be sorted and non-overlapping")
            prev_end = e
        if self.max_buffer is not None and self.max_buffer < 1:
            raise ParameterError("max_buffer must be >= 1")

    def window_at(self, t_ms: float):
        """The window containing ``t_ms``, or None while connected."""
        for s, e in self.disconnect_windows:
            if s <= t_ms < e:
                return (s, e)
            if s > t_ms:
                break
        return None


@dataclass
class PacketRecord:
    batch_id: int
    send_t_ms: float
    recv_t_ms: float | None
    size_bytes: int
    duplicate: bool = False


@dataclass
class PacketTrace:
    packets: list = field(default_factory=list)

    def record_send(self, batch_id: int, send_t_ms: float, size_bytes: int) -> PacketRecord:
        if size_bytes <= 0:
            raise ParameterError("packet size must be > 0")
        rec = PacketRecord(batch_id, send_t_ms, None, size_bytes)
        self.packets.append(rec)
        return rec

    @property
    def sent(self) -> int:
        return len(self.packets)

    @property
    def delivered(self) -> int:
        return sum(p.recv_t_ms is not None for p in self.packets)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["batch_id", "send_t_ms", "recv_t_ms", "size_bytes"])
            for p in self.packets:
                w.writerow([p.batch_id, _fmt(p.send_t_ms), "" if p.recv_t_ms is None else _fmt(p.recv_t_ms),
                            p.size_bytes])
        return path


def _fmt(t: float) -> str:
    return f"{t:.3f}"


@dataclass(frozen=True)
class Delivery:
    batch_id: int
    key: int
    payload: dict
    send_t_ms: float
    recv_t_ms: float


class Link:
    """Store-and-forward link driven by an :class:`EventLoop`.

    A packet sent while the link is down waits in the buffer until the
    window closes and then leaves in FIFO order.  A packet whose arrival
    would land inside a window is held back the same way, so no delivery
    ever happens while disconnected.
    """

    def __init__(self, model: LinkModel, loop: EventLoop, on_deliver: Callable, trace: PacketTrace | None = None):
        self.model = model
        self.loop = loop
        self.on_deliver = on_deliver
        self.trace = trace if trace is not None else PacketTrace()
        self.rng = random.Random(model.seed)
        self.buffer: deque = deque()
        self._flush_scheduled_for = None
        self._last_flush_arrival = float("-inf")

    def latency(self) -> float:
        j = self.model.jitter_ms
        jitter = self.rng.uniform(-j, j) if j > 0 else 0.0
        return max(0.0, self.model.base_latency_ms + jitter)

    def transmit(self, batch_id: int, payload: dict, size_bytes: int | None = None) -> bool:
        """Hand a payload to the link at the current virtual time.

        Returns False only in bounded-buffer mode when the buffer is full;
        the caller keeps the batch and retries later.
        """
        now = self.loop.now
        window = self.model.window_at(now)
        if window is not None and self.model.max_buffer is not None and len(self.buffer) >= self.model.max_buffer:
            return False
        if size_bytes is None:
            size_bytes = payload_size(payload)
        rec = self.trace.record_send(batch_id, now, size_bytes)
        if window is not None:
            self._enqueue(rec, payload, window)
            return True
        arrival = now + self.latency()
        held = self.model.window_at(arrival)
        if held is not None:
            self._enqueue(rec, payload, held)
        else:
            self.loop.schedule(arrival, self._deliver, rec, payload)
        return True

    def _enqueue(self, rec: PacketRecord, payload: dict, window) -> None:
        self.buffer.append((rec, payload))
        _, end = window
        if self._flush_scheduled_for != end:
            self._flush_scheduled_for = end
            self.loop.schedule(max(end, self.loop.now), self._flush)

    def _flush(self) -> None:
        self._flush_scheduled_for = None
        while self.buffer:
            rec, payload = self.buffer.popleft()
            arrival = max(self.loop.now + self.latency(), self._last_flush_arrival)
            window = self.model.window_at(arrival)
            if window is not None:
                # link dropped again before this packet got through
                self.buffer.appendleft((rec, payload))
                self._flush_scheduled_for = window[1]
                self.loop.schedule(window[1], self._flush)
                return
            self._last_flush_arrival = arrival
            self.loop.schedule(arrival, self._deliver, rec, payload)

    def _deliver(self, rec: PacketRecord, payload: dict) -> None:
        if rec.recv_t_ms is not None:
            rec.duplicate = True
        rec.recv_t_ms = self.loop.now
        self.on_deliver(Delivery(rec.batch_id, rec.batch_id, payload, rec.send_t_ms, self.loop.now))


def payload_size(payload: dict) -> int:
    return len(json.dumps(payload, separators=(",", ":")).encode())


class CloudStore:
    """Cloud-side key/value store whose iteration order is the send order."""

    def __init__(self):
        self._entries: dict = {}
        self.duplicates: list = []
        self.arrival_order: list = []

    def store(self, delivery: Delivery) -> bool:
        """Insert a delivery; returns True if the key was already present."""
        dup = delivery.key in self._entries
        if dup:
            self.duplicates.append(delivery.key)
        self._entries[delivery.key] = delivery.payload
        self.arrival_order.append(delivery.key)
        return dup

    def keys(self) -> list:
        return sorted(self._entries)

    def __iter__(self):
        for k in self.keys():
            yield k, self._entries[k]

    def __len__(self):
        return len(self._entries)

    def __getitem__(self, key):
        return self._entries[key]


def reassemble(cloud: CloudStore, expected_ids=None, fs_hz: float = 200.0) -> SampleStream:
    """Concatenate stored batches in key order back into one stream.

    ``expected_ids`` defaults to the span between the lowest and highest
    stored key; any id in it that is missing raises IncompleteRange.
    """
    keys = cloud.keys()
    if expected_ids is None:
        expected_ids = range(keys[0], keys[-1] + 1) if keys else []
    holes = sorted(set(expected_ids) - set(keys))
    if holes:
        raise IncompleteRange(holes)
    parts = [cloud[k] for k in keys]
    if not parts:
        return SampleStream([], [], [], fs_hz)
    return SampleStream(
        np.concatenate([np.asarray(p["counters"], dtype=np.int64) for p in parts]),
        np.concatenate([np.asarray(p["timestamps"], dtype=np.int64) for p in parts]),
        np.concatenate([np.asarray(p["samples"], dtype=np.int64) for p in parts]),
        fs_hz,
    )


@dataclass(frozen=True)
class BandwidthReport:
    packet_count: int
    total_bytes: int
    span_s: float
    bytes_per_s: float
    bits_per_s: float
    loss_pct: float

    @property
    def avg_size_bytes(self) -> float:
        return self.total_bytes / self.packet_count if self.packet_count else 0.0

    @property
    def kilobytes_per_s(self) -> float:
        return self.bytes_per_s / 1000.0

    def to_dict(self) -> dict:
        return {
            "packet_count": self.packet_count,
            "span_s": self.span_s,
            "avg_size_bytes": self.avg_size_bytes,
            "total_bytes": self.total_bytes,
            "bytes_per_s": self.bytes_per_s,
            "bits_per_s": self.bits_per_s,
            "loss_pct": self.loss_pct,
        }


def bandwidth_from_totals(total_bytes: int, span_s: float, packet_count: int = 0, delivered: int | None = None):
    """Average throughput as total bytes over the measured time span."""
    if not span_s > 0:
        raise DegenerateSpan(f"time span must be > 0, got {span_s}")
    delivered = packet_count if delivered is None else delivered
    loss = 100.0 * (packet_count - delivered) / packet_count if packet_count else 0.0
    bps = total_bytes / span_s
    return BandwidthReport(packet_count, total_bytes, span_s, bps, 8.0 * bps, loss)


def bandwidth(trace: PacketTrace, span_s: float | None = None) -> BandwidthReport:
    """Bandwidth report for a trace.

    The span runs from the first send to the last receive unless an
    explicit measurement span is given.
    """
    packets = trace.packets
    if span_s is None:
        received = [p.recv_t_ms for p in packets if p.recv_t_ms is not None]
        if not packets or not received:
            raise DegenerateSpan("trace has no delivered packets to define a span")
        span_s = (max(received) - min(p.send_t_ms for p in packets)) / 1000.0
    return bandwidth_from_totals(sum(p.size_bytes for p in packets), span_s, len(packets), trace.delivered)
