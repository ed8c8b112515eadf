import csv
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogecg.errors import DegenerateSpan, IncompleteRange, ParameterError
from fogecg.netsim import (
    CloudStore,
    Delivery,
    EventLoop,
    Link,
    LinkModel,
    PacketTrace,
    bandwidth,
    bandwidth_from_totals,
    reassemble,
)
from fogecg.signal import SampleStream


def _run(model, sends, payload=None):
    """Send batch ids at the given times; returns (trace, cloud)."""
    loop = EventLoop()
    cloud = CloudStore()
    link = Link(model, loop, cloud.store)
    for t, bid in sends:
        loop.schedule(t, link.transmit, bid, payload or {"id": bid})
    loop.run()
    return link.trace, cloud


def test_event_loop_orders_by_time_then_insertion():
    loop, seen = EventLoop(), []
    loop.schedule(5, seen.append, "b")
    loop.schedule(1, seen.append, "a")
    loop.schedule(5, seen.append, "c")
    loop.run()
    assert seen == ["a", "b", "c"] and loop.now == 5
    with pytest.raises(ParameterError):
        loop.schedule(1, seen.append, "late")


def test_fixed_latency_in_order():
    trace, cloud = _run(LinkModel(base_latency_ms=80), [(i * 7500, i) for i in range(5)])
    assert cloud.arrival_order == [0, 1, 2, 3, 4]
    for p in trace.packets:
        assert p.recv_t_ms == p.send_t_ms + 80


def test_packets_sent_during_outage_arrive_after_it():
    model = LinkModel(base_latency_ms=50, disconnect_windows=[(0, 100_000)])
    trace, cloud = _run(model, [(i * 7500, i) for i in range(10)])
    assert trace.delivered == 10 == len(cloud)
    assert all(p.recv_t_ms >= 100_000 for p in trace.packets)
    assert cloud.arrival_order == list(range(10))
    assert bandwidth(trace).loss_pct == 0


def test_arrival_inside_window_is_held():
    model = LinkModel(base_latency_ms=100, disconnect_windows=[(1050, 2000)])
    trace, _ = _run(model, [(1000, 0)])
    assert trace.packets[0].recv_t_ms == 2100


def test_no_delivery_while_disconnected():
    model = LinkModel(base_latency_ms=80, jitter_ms=60, disconnect_windows=[(10_000, 30_000), (45_000, 46_000)], seed=3)
    trace, _ = _run(model, [(i * 1500, i) for i in range(40)])
    for p in trace.packets:
        assert model.window_at(p.recv_t_ms) is None


def test_window_validation():
    with pytest.raises(ParameterError):
        LinkModel(disconnect_windows=[(10, 10)])
    with pytest.raises(ParameterError):
        LinkModel(disconnect_windows=[(0, 20), (10, 30)])
    with pytest.raises(ParameterError):
        LinkModel(jitter_ms=-1)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.floats(0, 500), st.floats(0, 200))
def test_exactly_once_under_jitter(seed, base, jitter):
    rng = random.Random(seed)
    starts = sorted(rng.sample(range(0, 100_000, 1000), 3))
    windows = [(s, s + rng.randint(1, 900)) for s in starts]
    model = LinkModel(base_latency_ms=base, jitter_ms=jitter, disconnect_windows=windows, seed=seed)
    trace, cloud = _run(model, [(i * 2500, i) for i in range(40)])
    assert cloud.keys() == list(range(40))
    assert cloud.duplicates == []
    assert all(p.recv_t_ms >= p.send_t_ms for p in trace.packets)


def test_seeded_link_is_reproducible():
    model = LinkModel(jitter_ms=40, seed=9, disconnect_windows=[(5000, 9000)])
    a, _ = _run(model, [(i * 1000, i) for i in range(20)])
    b, _ = _run(model, [(i * 1000, i) for i in range(20)])
    assert a == b


def test_bounded_buffer_refuses_when_full():
    model = LinkModel(disconnect_windows=[(0, 10_000)], max_buffer=2)
    loop = EventLoop()
    link = Link(model, loop, lambda d: None)
    assert [link.transmit(i, {"i": i}) for i in range(3)] == [True, True, False]
    assert link.trace.sent == 2


# cloud store


def _delivery(key, payload=None):
    return Delivery(key, key, payload if payload is not None else {"k": key}, 0.0, 1.0)


def test_store_iterates_in_key_order():
    cloud = CloudStore()
    for k in (2, 0, 1):
        cloud.store(_delivery(k))
    assert [k for k, _ in cloud] == [0, 1, 2]
    assert cloud.arrival_order == [2, 0, 1]


def test_empty_store():
    cloud = CloudStore()
    assert list(cloud) == [] and len(reassemble(cloud)) == 0


def test_duplicate_is_flagged():
    cloud = CloudStore()
    assert cloud.store(_delivery(3)) is False
    assert cloud.store(_delivery(3)) is True
    assert cloud.duplicates == [3] and len(cloud) == 1


def _batches(n, size=1500, start=0):
    src = SampleStream.from_values((np.arange(n * size) * 7) % 1024, start_counter=start)
    payloads = []
    for i in range(n):
        part = src[i * size : (i + 1) * size]
        payloads.append(
            {
                "counters": part.counters.tolist(),
                "timestamps": part.timestamps_ms.tolist(),
                "samples": part.values.tolist(),
            }
        )
    return src, payloads


def test_reassemble_permuted_batches():
    src, payloads = _batches(9)
    order = list(range(9))
    random.Random(1).shuffle(order)
    cloud = CloudStore()
    for k in order:
        cloud.store(_delivery(k, payloads[k]))
    assert reassemble(cloud) == src


def test_single_batch_identity():
    src, payloads = _batches(1, start=42)
    cloud = CloudStore()
    cloud.store(_delivery(0, payloads[0]))
    assert reassemble(cloud) == src


def test_hole_is_reported():
    _, payloads = _batches(9, size=10)
    cloud = CloudStore()
    for k in range(9):
        if k != 5:
            cloud.store(_delivery(k, payloads[k]))
    with pytest.raises(IncompleteRange) as err:
        reassemble(cloud)
    assert err.value.holes == [5]
    with pytest.raises(IncompleteRange):
        reassemble(cloud, expected_ids=range(10))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.randoms(use_true_random=False))
def test_reassembly_is_order_independent(n, rnd):
    src, payloads = _batches(n, size=20)
    order = list(range(n))
    rnd.shuffle(order)
    cloud = CloudStore()
    for k in order:
        cloud.store(_delivery(k, payloads[k]))
    assert reassemble(cloud) == src


# bandwidth


def test_bandwidth_examples():
    assert bandwidth_from_totals(47_541_669, 8186.977).bytes_per_s == pytest.approx(5807, abs=1)
    assert bandwidth_from_totals(0, 10).bytes_per_s == 0
    r = bandwidth_from_totals(1000, 2, packet_count=4, delivered=3)
    assert r.bytes_per_s == 500 and r.bits_per_s == 4000
    assert r.loss_pct == 25 and r.avg_size_bytes == 250


@pytest.mark.parametrize("span", [0, -1])
def test_degenerate_span(span):
    with pytest.raises(DegenerateSpan):
        bandwidth_from_totals(100, span)


def test_empty_trace_has_no_span():
    with pytest.raises(DegenerateSpan):
        bandwidth(PacketTrace())


@given(st.integers(0, 10**9), st.floats(0.001, 1e6), st.floats(0.01, 100))
def test_bandwidth_homogeneous(total, span, k):
    a = bandwidth_from_totals(total, span).bytes_per_s
    b = bandwidth_from_totals(total * k, span * k).bytes_per_s
    assert b == pytest.approx(a, rel=1e-9)
    assert a >= 0


def test_trace_span_and_csv(tmp_path):
    trace, _ = _run(LinkModel(base_latency_ms=100), [(0, 0), (1900, 1)], payload={"x": 1})
    rep = bandwidth(trace)
    assert rep.span_s == 2.0
    assert rep.bytes_per_s == pytest.approx(rep.total_bytes / 2.0)
    rows = list(csv.DictReader(trace.to_csv(tmp_path / "t.csv").open()))
    assert [r["batch_id"] for r in rows] == ["0", "1"]
    assert rows[1]["recv_t_ms"] == "2000.000"
    assert int(rows[0]["size_bytes"]) == len('{"x":1}')
