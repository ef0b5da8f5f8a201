"""Variance-trajectory segmentation and RMS normalization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import window_variances_oracle
from magprint.errors import (
    NoResponseDetected,
    ParseError,
    SegmentTooShort,
    SignalTooShort,
    ZeroSegment,
)
from magprint.ingest import magnitude
from magprint.preprocess import (
    MIN_SEGMENT_LEN,
    ResponseSegment,
    VtConfig,
    read_segments,
    rms_normalize,
    segment_responses,
    sliding_variance,
    variance_trajectory,
    write_segments,
)
from magprint.simulator import add_awgn, default_park, simulate_session
from magprint.stimulus import PulseSchedule, pulse_onsets, waveform_preset


# -- config -------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"window_len": 1},
        {"baseline_len": 3, "window_len": 5},
        {"threshold_factor": 1.0},
    ],
)
def test_vt_config_validation(kwargs):
    with pytest.raises(SignalTooShort):
        VtConfig(**kwargs).validate()


# -- sliding variance ----------------------------------------------------------


def test_sliding_variance_matches_scalar_oracle():
    rng = np.random.default_rng(3)
    signal = rng.normal(size=48)
    for w in (2, 5, 7):
        got = sliding_variance(signal, w)
        want = window_variances_oracle(signal, w)
        assert got.shape[0] == 48 - w + 1
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


# -- detection -----------------------------------------------------------------


def test_constant_signal_has_no_response():
    with pytest.raises(NoResponseDetected):
        variance_trajectory(np.full(80, 2.5))


def test_short_signal_rejected():
    with pytest.raises(SignalTooShort):
        variance_trajectory(np.zeros(10))


def test_unit_step_detected_near_the_step():
    cfg = VtConfig()
    k = 40
    signal = np.zeros(80)
    signal[k:] = 1.0
    spans = variance_trajectory(signal, cfg)
    assert len(spans) == 1
    start, end = spans[0]
    # the first window containing sample k starts within window_len before it
    assert k - cfg.window_len <= start <= k
    assert end > start


def test_nearby_hot_runs_merge_distant_ones_do_not():
    # two single-sample disturbances; cold gap < window_len bridges them
    merged = np.zeros(60)
    merged[30] = 1.0
    merged[37] = 1.0
    assert len(variance_trajectory(merged)) == 1

    split = np.zeros(60)
    split[30] = 1.0
    split[50] = 1.0
    spans = variance_trajectory(split)
    assert len(spans) == 2
    assert spans[0][1] <= spans[1][0]


# -- normalization ---------------------------------------------------------------


def test_rms_normalize_reference_values():
    out = rms_normalize(np.array([3.0, 4.0]))
    np.testing.assert_allclose(out, np.array([3.0, 4.0]) / np.sqrt(12.5))
    np.testing.assert_allclose(np.mean(out**2), 1.0)


def test_rms_normalize_rejects_zero():
    with pytest.raises(ZeroSegment):
        rms_normalize(np.zeros(6))


@settings(max_examples=60, deadline=None)
@given(
    xs=st.lists(
        st.floats(-1e3, 1e3).filter(lambda v: v == 0.0 or abs(v) >= 1e-3),
        min_size=2, max_size=40,
    ),
    scale=st.floats(1e-3, 1e3),
)
def test_rms_normalize_scale_invariant_and_idempotent(xs, scale):
    x = np.asarray(xs)
    if not np.any(x != 0.0):
        x[0] = 1.0
    base = rms_normalize(x)
    np.testing.assert_allclose(rms_normalize(scale * x), base, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(rms_normalize(base), base, rtol=1e-9, atol=1e-12)
    assert np.mean(base**2) == pytest.approx(1.0, rel=1e-9)


# -- segmentation ----------------------------------------------------------------


def simulate_magnitude(n_bursts=5, lead_in_ms=3000.0, rng_seed=4, snr_db=None):
    sig = default_park()[0]
    spec = waveform_preset("B", burst_repetitions=n_bursts)
    schedule = pulse_onsets(spec, start_ms=lead_in_ms)
    trace = simulate_session(sig, schedule, spec, rng_seed=rng_seed)
    observable = magnitude(trace)
    if snr_db is not None:
        observable = add_awgn(observable, snr_db, rng_seed=rng_seed + 1)
    return observable, schedule


def test_every_burst_yields_one_matched_segment():
    observable, schedule = simulate_magnitude(n_bursts=5)
    result = segment_responses(observable, schedule=schedule,
                               device_id="phone_a_1", session_id="s")
    assert result.report.n_matched == 5
    assert result.report.missed_onsets == []
    assert not result.report.count_mismatch
    assert [s.index for s in result.segments] == [0, 1, 2, 3, 4]
    assert result.report.common_length >= MIN_SEGMENT_LEN
    for seg in result.segments:
        assert len(seg.samples) == result.report.common_length


def test_detected_onsets_track_true_bursts_under_noise():
    # 20 dB of added noise must not move any detected onset materially
    cfg = VtConfig()
    observable, schedule = simulate_magnitude(n_bursts=30, snr_db=20.0)
    result = segment_responses(observable, cfg, schedule=schedule)
    assert result.report.n_matched == 30
    burst_idx = np.round(schedule.burst_starts / 50.0).astype(int)
    for seg in result.segments:
        assert abs(seg.onset_sample - burst_idx[seg.index]) <= cfg.window_len


def test_unanswered_burst_is_reported_missing(caplog):
    signal = np.zeros(300)
    signal[60:70] = np.linspace(1.0, 10.0, 10)
    schedule = PulseSchedule(onsets=np.array([3000.0, 10000.0]),
                             total_duration_ms=15000.0)
    with caplog.at_level("WARNING", logger="magprint.preprocess"):
        result = segment_responses(signal, schedule=schedule, device_id="d")
    assert result.report.n_matched == 1
    assert result.report.missed_onsets == [1]
    assert result.report.count_mismatch
    assert result.segments[0].index == 0
    assert any("mismatch" in r.getMessage() for r in caplog.records)


def test_duplicate_detection_nearer_one_wins():
    signal = np.zeros(300)
    signal[58] = 5.0   # detection starting near sample 54
    signal[80] = 5.0   # spurious second detection, same nearest burst
    schedule = PulseSchedule(onsets=np.array([3000.0]), total_duration_ms=15000.0)
    result = segment_responses(signal, schedule=schedule)
    assert result.report.n_detections == 2
    assert result.report.n_matched == 1
    assert result.segments[0].onset_sample <= 58
    assert len(result.report.dropped_detections) == 1
    assert result.report.dropped_detections[0] > 70


def test_common_length_override_and_minimum():
    observable, schedule = simulate_magnitude(n_bursts=3)
    result = segment_responses(observable, schedule=schedule, common_length=12)
    assert result.report.common_length == 12
    assert all(len(s.samples) == 12 for s in result.segments)
    with pytest.raises(SegmentTooShort):
        segment_responses(observable, schedule=schedule,
                          common_length=MIN_SEGMENT_LEN - 1)


def test_cut_extends_past_trace_end_with_trailing_value():
    signal = np.zeros(60)
    signal[55] = 3.0
    result = segment_responses(signal, common_length=20)
    seg = result.segments[0]
    assert len(seg.samples) == 20
    # ran off the end: the extension repeats the final trace sample
    assert seg.samples[-1] == signal[-1]
    assert seg.samples.max() == 3.0


# -- segment CSV -------------------------------------------------------------


def test_segment_dump_roundtrip(tmp_path):
    segments = [
        ResponseSegment("d1", "s1", 0, np.array([0.5, -1.25, 3.0, 0.0])),
        ResponseSegment("d2", "s1", 1, np.array([1.0, 2.0, 3.0, 4.0])),
    ]
    path = tmp_path / "segments.csv"
    write_segments(segments, str(path))
    back = read_segments(str(path))
    assert [(s.device_id, s.session_id, s.index) for s in back] == \
        [("d1", "s1", 0), ("d2", "s1", 1)]
    for orig, got in zip(segments, back):
        np.testing.assert_allclose(got.samples, orig.samples, rtol=1e-8)


def test_segment_dump_rejects_empty_and_ragged(tmp_path):
    with pytest.raises(ZeroSegment):
        write_segments([], str(tmp_path / "x.csv"))
    ragged = [
        ResponseSegment("d", "s", 0, np.zeros(4)),
        ResponseSegment("d", "s", 1, np.zeros(5)),
    ]
    with pytest.raises(ZeroSegment):
        write_segments(ragged, str(tmp_path / "y.csv"))


def test_segment_dump_rejects_foreign_csv(tmp_path):
    path = tmp_path / "foreign.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ParseError):
        read_segments(str(path))
