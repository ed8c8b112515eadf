import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fogecg.delineation import (
    BeatInterval,
    BeatIntervals,
    NormalRanges,
    PeriodMeans,
    classify,
    delineate,
    summarize_periods,
)
from fogecg.errors import EmptyPeriod, InsufficientBeats, ParameterError
from fogecg.hrv import PeakList, detect_peaks
from fogecg.signal import SampleStream


def _mean_intervals(stream):
    b = delineate(stream, detect_peaks(stream))
    good = b.confident_beats
    return b, {f: np.mean([getattr(x, f) for x in good]) for f in ("pr_ms", "qrs_ms", "qt_ms")}


def test_noiseless_trace_within_10ms(make_stream):
    stream, _ = make_stream(rr_ms=800, pr_ms=160, qrs_ms=90, qt_ms=380, duration_s=30)
    b, m = _mean_intervals(stream)
    assert b.excluded_count <= 2
    assert m["pr_ms"] == pytest.approx(160, abs=10)
    assert m["qrs_ms"] == pytest.approx(90, abs=10)
    assert m["qt_ms"] == pytest.approx(380, abs=10)


@pytest.mark.parametrize(
    "pr,qrs,qt,rr",
    [(120, 80, 320, 1000), (200, 100, 440, 1000), (140, 85, 360, 1187), (180, 95, 420, 1013)],
)
def test_interval_grid(make_stream, pr, qrs, qt, rr):
    stream, _ = make_stream(rr_ms=rr, pr_ms=pr, qrs_ms=qrs, qt_ms=qt, duration_s=30)
    _, m = _mean_intervals(stream)
    assert abs(m["pr_ms"] - pr) <= 10
    assert abs(m["qrs_ms"] - qrs) <= 10
    assert abs(m["qt_ms"] - qt) <= 10


def test_noisy_trace_flags_beats(make_stream):
    stream, _ = make_stream(rr_ms=1000, duration_s=30, noise_std=0.1, seed=5)
    b = delineate(stream, detect_peaks(stream))
    assert b.excluded_count > 0
    assert all(x.pr_ms is None for x in b.beats if not x.confident)


def test_edge_beat_is_low_confidence():
    stream = SampleStream.from_values(np.zeros(400, dtype=int))
    b = delineate(stream, PeakList([2, 200]))
    assert not b.beats[0].confident


def test_single_peak():
    with pytest.raises(InsufficientBeats):
        delineate(SampleStream.from_values(np.zeros(400, dtype=int)), PeakList([200]))


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 150))
def test_translation_equivariance(make_stream, k):
    stream, _ = make_stream(rr_ms=800, duration_s=12)
    x = stream.values
    shifted = SampleStream.from_values(np.concatenate([np.full(k, x[0]), x]))
    peaks = detect_peaks(stream)
    a = delineate(stream, peaks)
    b = delineate(shifted, PeakList([p + k for p in peaks.peak_indices]))
    for u, v in zip(a.beats, b.beats):
        if u.confident and v.confident:
            assert v.r_index == u.r_index + k
            # the interpolated trace depends weakly on the whole record
            assert (v.pr_ms, v.qrs_ms, v.qt_ms) == pytest.approx((u.pr_ms, u.qrs_ms, u.qt_ms), abs=0.5)


# period means


def _beats(rrs, pr=160.0, qrs=90.0, qt=380.0):
    return BeatIntervals([BeatInterval(i * 100, rr, pr, qrs, qt) for i, rr in enumerate(rrs)])


def test_constant_beats():
    means = summarize_periods(_beats([800.0] * 8), 4)
    assert len(means) == 4
    assert all(m == PeriodMeans(800, 160, 90, 380) for m in means)


def test_split_halves():
    means = summarize_periods(_beats([700.0] * 4 + [900.0] * 4), 2)
    assert [m.rr_ms for m in means] == [700, 900]


def test_remainder_goes_to_last_group():
    rrs = [float(i) for i in range(1, 10)]
    means = summarize_periods(_beats(rrs), 4)
    assert [m.rr_ms for m in means] == [1.5, 3.5, 5.5, 8.0]


def test_single_period_is_global_mean():
    rrs = [700.0, 810.0, 905.0, 760.0, 820.0]
    (m,) = summarize_periods(_beats(rrs), 1)
    assert m.rr_ms == pytest.approx(np.mean(rrs))


def test_period_of_excluded_beats():
    b = _beats([800.0] * 8)
    b.beats[2:4] = [BeatInterval(0, None, None, None, None, confident=False)] * 2
    with pytest.raises(EmptyPeriod) as err:
        summarize_periods(b, 4)
    assert err.value.period == 2


def test_too_few_beats_for_periods():
    with pytest.raises(ParameterError):
        summarize_periods(_beats([800.0] * 3), 4)


# classification


def test_healthy_example():
    v = classify([PeriodMeans(810, 120, 85, 332)] * 4)
    assert v.status == "healthy" and v.violations == ()


def test_short_pr_example():
    v = classify([PeriodMeans(810, 120, 85, 332), PeriodMeans(810, 115, 85, 332)])
    assert v.status == "out_of_range"
    (viol,) = v.violations
    assert (viol.parameter, viol.period, viol.value) == ("PR", 2, 115)


def test_bounds_are_inclusive():
    assert classify([PeriodMeans(600, 200, 100, 440)]).healthy
    assert classify([PeriodMeans(1200, 120, 80, 320)]).healthy


def test_verdict_dict_roundtrip():
    v = classify([PeriodMeans(810, 115, 85, 332)])
    assert type(v).from_dict(v.to_dict()) == v


def test_ranges_validated():
    with pytest.raises(ParameterError):
        NormalRanges(pr_ms=(200, 120))


_val = st.floats(50, 1500)


@given(_val, _val, _val, _val, st.floats(0, 100), st.floats(0, 100))
def test_widening_ranges_never_adds_violations(rr, pr, qrs, qt, dlo, dhi):
    pm = [PeriodMeans(rr, pr, qrs, qt)]
    base = NormalRanges()
    wide = NormalRanges(
        *((lo - dlo, hi + dhi) for lo, hi in (base.rr_ms, base.qt_ms, base.pr_ms, base.qrs_ms))
    )
    assert len(classify(pm, wide).violations) <= len(classify(pm, base).violations)
