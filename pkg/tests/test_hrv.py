import statistics

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fogecg.errors import InsufficientBeats, InsufficientData, NoPlausiblePeaks, ParameterError
from fogecg.hrv import (
    HrvMeasures,
    PeakDetectionConfig,
    PeakList,
    assess_vitals,
    compute_measures,
    detect_peaks,
    detect_peaks_array,
    measures_from_rr,
    moving_average,
)
from fogecg.signal import SampleStream


def _annotated_indices(ann, fs=200.0):
    return [round(a.r_time_ms * fs / 1000) for a in ann]


def test_detects_every_annotated_beat(make_stream):
    stream, ann = make_stream(rr_ms=750, duration_s=30)
    peaks = detect_peaks(stream)
    assert len(peaks.peak_indices) == 40
    assert peaks.peak_indices == _annotated_indices(ann)
    assert abs(compute_measures(peaks).bpm - 80) <= 1
    assert peaks.rejected_indices == []


def test_all_zero_stream():
    with pytest.raises(NoPlausiblePeaks):
        detect_peaks(SampleStream.from_values(np.zeros(3000, dtype=int)))


def test_too_short():
    with pytest.raises(InsufficientData):
        detect_peaks(SampleStream.from_values(np.ones(200, dtype=int)))


def test_spike_in_diastole_is_rejected(make_stream):
    stream, ann = make_stream(rr_ms=1000, duration_s=30)
    values = stream.values.copy()
    r = _annotated_indices(ann)
    spike = (r[10] + r[11]) // 2
    values[spike] = 1023
    peaks = detect_peaks(SampleStream.from_values(values))
    assert spike in peaks.rejected_indices
    assert spike not in peaks.peak_indices
    assert abs(compute_measures(peaks).bpm - 60) <= 2


def test_missed_beat_keeps_following_beats():
    # a long gap is a real (if unusual) interval: later peaks must not be thrown away
    from fogecg.hrv import _reject_early_peaks

    peaks = np.array([0, 200, 400, 800, 1000, 1200])
    accepted, rejected = _reject_early_peaks(peaks, 200.0, 30.0)
    assert accepted == list(peaks) and rejected == []


def test_moving_average_edges():
    ma = moving_average([0, 0, 3, 0, 0], 3)
    assert np.allclose(ma, [0, 1, 1, 1, 0])
    assert np.allclose(moving_average([2, 4], 5), [3, 3])


def test_config_validation():
    with pytest.raises(ParameterError):
        PeakDetectionConfig(ma_window_s=0)
    with pytest.raises(ParameterError):
        PeakDetectionConfig(threshold_sweep_pct=())
    with pytest.raises(ParameterError):
        PeakDetectionConfig(bpm_min=100, bpm_max=50)


@pytest.mark.parametrize("c", [0.5, 2.0, 3.7])
def test_scale_invariance(make_stream, c):
    stream, _ = make_stream(rr_ms=800, duration_s=20, noise_std=0.03, seed=3)
    base = detect_peaks(stream)
    scaled = detect_peaks_array(stream.values * c, stream.fs_hz)
    assert scaled.peak_indices == base.peak_indices


@pytest.mark.parametrize("k", [1, 17, 60])
def test_time_shift_equivariance(make_stream, k):
    stream, _ = make_stream(rr_ms=800, duration_s=20)
    x = stream.values
    shifted = np.concatenate([np.full(k, x[0]), x])
    a = detect_peaks_array(x, 200.0).peak_indices
    b = detect_peaks_array(shifted, 200.0).peak_indices
    warmup = int(0.75 * 200)
    assert [p + k for p in a if p > warmup] == [p for p in b if p > warmup + k]


@pytest.mark.parametrize("rr", [600, 800, 1000, 1200])
def test_measures_against_generator(make_stream, rr):
    stream, _ = make_stream(rr_ms=rr, duration_s=30)
    m = compute_measures(detect_peaks(stream))
    assert abs(m.bpm - 60000 / rr) <= 1
    assert m.sdnn_ms <= 2


# measures


def test_constant_series():
    m = measures_from_rr([800] * 10)
    assert (m.bpm, m.sdnn_ms, m.rmssd_ms, m.pnn50_pct) == (75, 0, 0, 0)


def test_alternating_series_against_statistics_module():
    rr = [800, 860, 800, 860]
    m = measures_from_rr(rr)
    diffs = [b - a for a, b in zip(rr, rr[1:])]
    assert m.ibi_ms == statistics.fmean(rr) == 830
    assert m.sdnn_ms == pytest.approx(statistics.pstdev(rr)) and m.sdnn_ms == pytest.approx(30)
    assert m.rmssd_ms == pytest.approx(statistics.fmean(d * d for d in diffs) ** 0.5) and m.rmssd_ms == 60
    assert m.pnn50_pct == 100


def test_single_interval_is_flagged():
    m = compute_measures(PeakList([0, 150], rr_ms=[750.0]))
    assert m.bpm == 80 and m.sdnn_ms == 0
    assert m.rmssd_ms == 0 and m.pnn50_pct == 0
    assert m.successive_defined is False


def test_fewer_than_two_peaks():
    with pytest.raises(InsufficientBeats):
        compute_measures(PeakList([10]))


def test_pnn50_is_strict():
    assert measures_from_rr([800, 850, 800]).pnn50_pct == 0
    assert measures_from_rr([800, 851, 800]).pnn50_pct == 100


def test_json_shape():
    assert set(measures_from_rr([800, 810]).to_dict()) == {"bpm", "ibi_ms", "sdnn_ms", "rmssd_ms", "pnn50_pct"}


@given(st.lists(st.floats(300, 2000), min_size=1, max_size=60))
def test_measures_properties(rr):
    m = measures_from_rr(rr)
    assert m.bpm == pytest.approx(60000 / m.ibi_ms)
    assert m.sdnn_ms >= 0 and m.rmssd_ms >= 0 and 0 <= m.pnn50_pct <= 100
    constant = len(set(rr)) == 1
    assert (m.sdnn_ms == 0) == constant or m.sdnn_ms < 1e-9
    if len(rr) > 1:
        assert (m.rmssd_ms == 0) == constant


# vitals


def _m(bpm):
    return HrvMeasures(bpm, 60000 / bpm, 10, 10, 5)


def test_vitals_examples():
    assert assess_vitals(_m(80)).state == "normal"
    s = assess_vitals(_m(190))
    assert s.state == "abnormal" and s.reasons == (("bpm", ">120"),)
    s = assess_vitals(_m(45))
    assert s.state == "abnormal" and s.reasons == (("bpm", "<50"),)


def test_vitals_multiple_reasons():
    s = assess_vitals(_m(130), {"bpm": (50, 120), "sdnn_ms": (20, None)})
    assert s.reasons == (("bpm", ">120"), ("sdnn_ms", "<20"))


@given(
    st.floats(20, 250),
    st.floats(30, 100),
    st.floats(100, 200),
    st.floats(0, 50),
    st.floats(0, 50),
)
def test_vitals_monotone_in_bounds(bpm, lo, hi, widen_lo, widen_hi):
    narrow = assess_vitals(_m(bpm), {"bpm": (lo, hi)})
    wide = assess_vitals(_m(bpm), {"bpm": (lo - widen_lo, hi + widen_hi)})
    assert not (narrow.state == "normal" and wide.state == "abnormal")
    assert (narrow.state == "abnormal") == bool(narrow.reasons)
