"""Square-wave stimulus generation.

A stimulus session is a train of bursts. Each burst holds pulse_count_per_burst
square pulses (pulses inside a burst are separated by pulse_width +
inter_pulse_gap) and each burst is followed by inter_burst_rest_ms of silence so
the device response rings down before the next burst. One burst produces one
response segment downstream.

Preset waveforms, in increasing stimulation density:
  A (short):  1 pulse/burst,  250 ms wide, 6.9 s burst period  (~30 min session)
  B (medium): 1 pulse/burst,  500 ms wide, 13.8 s burst period (~1 h session)
  C (long):   2 pulses/burst, 500 ms wide, 27.6 s burst period (~2 h session)
"""

from __future__ import annotations

import logging
import wave
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidSpec, SampleRateTooLow
from .kvconfig import coerce_float, coerce_int, format_kv, kv_to_dict, load_kv

log = logging.getLogger("magprint.stimulus")

# Falling edges leave a remanent offset in the sensor; gaps shorter than this
# guard let one pulse's hysteresis bleed into the next response.
HYSTERESIS_GUARD_MS = 500.0

DEFAULT_SAMPLE_RATE_HZ = 20.0
DEFAULT_PCM_RATE_HZ = 44100
PCM_FULL_SCALE = 32767


@dataclass(frozen=True)
class WaveformSpec:
    """Parameters of one stimulus waveform. Durations are milliseconds."""

    id: str
    pulse_count_per_burst: int
    pulse_width_ms: float
    inter_pulse_gap_ms: float
    burst_repetitions: int = 260
    amplitude: float = 1.0
    inter_burst_rest_ms: float = 0.0

    def validate(self, strict: bool = False) -> "WaveformSpec":
        if self.pulse_count_per_burst < 1:
            raise InvalidSpec(f"pulse_count_per_burst must be >= 1, got {self.pulse_count_per_burst}")
        if self.pulse_width_ms <= 0:
            raise InvalidSpec(f"pulse_width_ms must be > 0, got {self.pulse_width_ms}")
        if self.inter_pulse_gap_ms <= 0:
            raise InvalidSpec(f"inter_pulse_gap_ms must be > 0, got {self.inter_pulse_gap_ms}")
        if self.burst_repetitions < 1:
            raise InvalidSpec(f"burst_repetitions must be >= 1, got {self.burst_repetitions}")
        if not 0.0 <= self.amplitude <= 1.0:
            raise InvalidSpec(f"amplitude must be in [0, 1], got {self.amplitude}")
        if self.inter_burst_rest_ms < 0:
            raise InvalidSpec(f"inter_burst_rest_ms must be >= 0, got {self.inter_burst_rest_ms}")
        if self.inter_pulse_gap_ms < HYSTERESIS_GUARD_MS:
            msg = (
                f"inter_pulse_gap_ms={self.inter_pulse_gap_ms} is below the "
                f"{HYSTERESIS_GUARD_MS} ms hysteresis guard"
            )
            if strict:
                raise InvalidSpec(msg)
            log.warning("%s", msg)
        return self

    @property
    def burst_period_ms(self) -> float:
        per_pulse = self.pulse_width_ms + self.inter_pulse_gap_ms
        return self.pulse_count_per_burst * per_pulse + self.inter_burst_rest_ms

    @property
    def session_duration_ms(self) -> float:
        return self.burst_repetitions * self.burst_period_ms


@dataclass(frozen=True)
class PulseSchedule:
    """Rising-edge times (ms, strictly increasing) for a whole session."""

    onsets: np.ndarray
    total_duration_ms: float
    pulses_per_burst: int = 1

    def __post_init__(self) -> None:
        onsets = np.asarray(self.onsets, dtype=float)
        object.__setattr__(self, "onsets", onsets)
        if onsets.size and np.any(np.diff(onsets) <= 0):
            raise InvalidSpec("schedule onsets must be strictly increasing")

    @property
    def burst_starts(self) -> np.ndarray:
        return self.onsets[:: self.pulses_per_burst]


_PRESETS = {
    "A": WaveformSpec("A", pulse_count_per_burst=1, pulse_width_ms=250.0,
                      inter_pulse_gap_ms=500.0, inter_burst_rest_ms=6150.0),
    "B": WaveformSpec("B", pulse_count_per_burst=1, pulse_width_ms=500.0,
                      inter_pulse_gap_ms=500.0, inter_burst_rest_ms=12800.0),
    "C": WaveformSpec("C", pulse_count_per_burst=2, pulse_width_ms=500.0,
                      inter_pulse_gap_ms=500.0, inter_burst_rest_ms=25600.0),
}


def waveform_preset(waveform_id: str, burst_repetitions: int | None = None) -> WaveformSpec:
    """Return a built-in waveform (A, B or C)."""
    try:
        spec = _PRESETS[waveform_id.upper()]
    except KeyError:
        raise InvalidSpec(f"unknown waveform preset {waveform_id!r}; expected A, B or C") from None
    if burst_repetitions is not None:
        spec = replace(spec, burst_repetitions=burst_repetitions)
    return spec


def pulse_onsets(spec: WaveformSpec, start_ms: float = 0.0) -> PulseSchedule:
    """Rising-edge schedule for spec, optionally shifted by a quiet lead-in."""
    spec.validate()
    per_pulse = spec.pulse_width_ms + spec.inter_pulse_gap_ms
    onsets = np.empty(spec.burst_repetitions * spec.pulse_count_per_burst, dtype=float)
    i = 0
    for b in range(spec.burst_repetitions):
        burst_t0 = start_ms + b * spec.burst_period_ms
        for p in range(spec.pulse_count_per_burst):
            onsets[i] = burst_t0 + p * per_pulse
            i += 1
    total = start_ms + spec.session_duration_ms
    return PulseSchedule(onsets=onsets, total_duration_ms=total,
                         pulses_per_burst=spec.pulse_count_per_burst)


def _check_rate(spec: WaveformSpec, sample_rate_hz: float) -> float:
    if sample_rate_hz <= 0:
        raise SampleRateTooLow(f"sample_rate_hz must be > 0, got {sample_rate_hz}")
    dt_ms = 1000.0 / sample_rate_hz
    if dt_ms > spec.pulse_width_ms / 2.0:
        raise SampleRateTooLow(
            f"sample rate {sample_rate_hz} Hz gives {dt_ms:.3f} ms/sample; "
            f"need >= 2 samples per {spec.pulse_width_ms} ms pulse"
        )
    if dt_ms > spec.inter_pulse_gap_ms:
        raise SampleRateTooLow(
            f"sample rate {sample_rate_hz} Hz cannot resolve the "
            f"{spec.inter_pulse_gap_ms} ms inter-pulse gap"
        )
    return dt_ms


def build_waveform(spec: WaveformSpec, sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
                   start_ms: float = 0.0) -> np.ndarray:
    """Sample the stimulus: amplitude inside [onset, onset+width), 0 elsewhere.

    Every onset lands on a 0 -> amplitude transition within one sample period.
    """
    dt_ms = _check_rate(spec, sample_rate_hz)
    schedule = pulse_onsets(spec, start_ms=start_ms)
    n = int(round(schedule.total_duration_ms / dt_ms))
    t = np.arange(n) * dt_ms
    signal = np.zeros(n, dtype=float)
    for onset in schedule.onsets:
        lo = int(np.ceil((onset - 1e-9) / dt_ms))
        hi = int(np.ceil((onset + spec.pulse_width_ms - 1e-9) / dt_ms))
        signal[max(lo, 0):min(hi, n)] = spec.amplitude
    assert t.shape == signal.shape
    return signal


def export_pcm(signal: np.ndarray, path: str, pcm_rate_hz: int = DEFAULT_PCM_RATE_HZ) -> None:
    """Write a mono 16-bit signed little-endian PCM WAV file.

    Unit amplitude maps to full scale (32767); values are clipped to [-1, 1].
    """
    x = np.clip(np.asarray(signal, dtype=float), -1.0, 1.0)
    pcm = np.round(x * PCM_FULL_SCALE).astype("<i2")
    with wave.open(str(path), "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(int(pcm_rate_hz))
        wav.writeframes(pcm.tobytes())


def load_waveform_spec(path: str) -> WaveformSpec:
    d = kv_to_dict(load_kv(path), path=str(path))
    spec = WaveformSpec(
        id=d.get("id", "custom"),
        pulse_count_per_burst=coerce_int(d, "pulse_count_per_burst", 1, path=str(path)),
        pulse_width_ms=coerce_float(d, "pulse_width_ms", path=str(path)),
        inter_pulse_gap_ms=coerce_float(d, "inter_pulse_gap_ms", path=str(path)),
        burst_repetitions=coerce_int(d, "burst_repetitions", 260, path=str(path)),
        amplitude=coerce_float(d, "amplitude", 1.0, path=str(path)),
        inter_burst_rest_ms=coerce_float(d, "inter_burst_rest_ms", 0.0, path=str(path)),
    )
    return spec.validate()


def save_waveform_spec(spec: WaveformSpec, path: str) -> None:
    pairs = [
        ("id", spec.id),
        ("pulse_count_per_burst", str(spec.pulse_count_per_burst)),
        ("pulse_width_ms", repr(spec.pulse_width_ms)),
        ("inter_pulse_gap_ms", repr(spec.inter_pulse_gap_ms)),
        ("burst_repetitions", str(spec.burst_repetitions)),
        ("amplitude", repr(spec.amplitude)),
        ("inter_burst_rest_ms", repr(spec.inter_burst_rest_ms)),
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_kv(pairs))
