"""Synthetic magnetometer park.

Each simulated device responds to a square pulse with a gain-scaled first-order
rise toward gain * amplitude, then an exponential decay with a damped ring
excited at the falling edge, a remanent (hysteresis) offset bump after each
fall, a mild cubic nonlinearity, additive Gaussian noise, and quantization to
the sensor's step. The per-device parameters are the fingerprint: devices of
the same model share parameter means and differ by a small relative spread,
different models sit >= 20% apart on the discriminative parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidPark, InvalidSignature, ZeroSignalPower
from .ingest import Trace
from .kvconfig import load_kv
from .stimulus import DEFAULT_SAMPLE_RATE_HZ, PulseSchedule, WaveformSpec

# Kernel constants shared by all devices (devices differ via DeviceSignature).
RING_FRACTION = 0.35        # ring amplitude relative to the step height it follows
REMANENCE_FRACTION = 0.25   # post-fall hysteresis bump relative to the static offset
REMANENCE_TAU_FACTOR = 4.0  # remanence decay constant, in units of the lag tau
RESPONSE_HORIZON_MS = 20000.0  # past this, a pulse's contribution is below double noise
# Auto-calibration settling: at stream start the sensor's offset estimate
# converges linearly to its resting value. A linear ramp has constant sliding
# variance, so the settle region anchors variance-based response detectors
# without ever looking like a response itself.
SETTLE_DRIFT_UT = 16.0
SETTLE_DURATION_MS = 1500.0


@dataclass(frozen=True)
class DeviceSignature:
    """Physical parameters of one simulated magnetometer."""

    device_id: str
    model_id: str
    axis_gain_ut: tuple[float, float, float]
    lag_tau_ms: float
    ring_freq_hz: float
    ring_damping: float
    hysteresis_offset_ut: float
    quantization_step_ut: float
    noise_sigma_ut: float
    nonlinearity_coeff: float

    def validate(self) -> "DeviceSignature":
        if len(self.axis_gain_ut) != 3:
            raise InvalidSignature(f"{self.device_id}: axis_gain_ut needs 3 components")
        if self.lag_tau_ms <= 0:
            raise InvalidSignature(f"{self.device_id}: lag_tau_ms must be > 0")
        if self.ring_freq_hz < 0 or self.ring_damping < 0:
            raise InvalidSignature(f"{self.device_id}: ring parameters must be >= 0")
        if self.quantization_step_ut <= 0:
            raise InvalidSignature(f"{self.device_id}: quantization_step_ut must be > 0")
        if self.noise_sigma_ut < 0:
            raise InvalidSignature(f"{self.device_id}: noise_sigma_ut must be >= 0")
        return self


@dataclass(frozen=True)
class ModelSpec:
    """Mean signature for one phone model plus the intra-model spread."""

    model_id: str
    mean: DeviceSignature
    # relative standard deviation per field; "*" is the default for all fields
    spread: dict[str, float] = field(default_factory=dict)

    def spread_for(self, field_name: str) -> float:
        return self.spread.get(field_name, self.spread.get("*", 0.025))


@dataclass(frozen=True)
class ParkSpec:
    models: tuple[ModelSpec, ...]
    devices_per_model: tuple[int, ...]
    rng_seed: int = 42

    def validate(self) -> "ParkSpec":
        if len(self.models) != len(self.devices_per_model):
            raise InvalidPark("models and devices_per_model must align")
        if any(c < 1 for c in self.devices_per_model):
            raise InvalidPark("device counts must be >= 1")
        return self


_PERTURBED_FIELDS = (
    "lag_tau_ms",
    "ring_freq_hz",
    "ring_damping",
    "hysteresis_offset_ut",
    "quantization_step_ut",
    "noise_sigma_ut",
    "nonlinearity_coeff",
)


def make_park(spec: ParkSpec) -> list[DeviceSignature]:
    """Draw the device signatures deterministically from the park seed."""
    spec.validate()
    rng = np.random.default_rng(spec.rng_seed)
    devices: list[DeviceSignature] = []
    for model, count in zip(spec.models, spec.devices_per_model):
        for i in range(count):
            kwargs = {}
            gain_spread = model.spread_for("axis_gain_ut")
            gains = tuple(
                float(g) * (1.0 + gain_spread * rng.standard_normal())
                for g in model.mean.axis_gain_ut
            )
            kwargs["axis_gain_ut"] = gains
            for name in _PERTURBED_FIELDS:
                mean_val = getattr(model.mean, name)
                jitter = 1.0 + model.spread_for(name) * rng.standard_normal()
                # keep strictly-positive fields away from zero
                kwargs[name] = float(mean_val) * max(jitter, 0.05)
            devices.append(
                replace(
                    model.mean,
                    device_id=f"{model.model_id}_{i + 1}",
                    model_id=model.model_id,
                    **kwargs,
                ).validate()
            )
    return devices


def _default_models() -> tuple[ModelSpec, ...]:
    def sig(model_id, gains, tau, freq, damp, hyst, quant, noise, cubic):
        return DeviceSignature(
            device_id=model_id, model_id=model_id, axis_gain_ut=gains,
            lag_tau_ms=tau, ring_freq_hz=freq, ring_damping=damp,
            hysteresis_offset_ut=hyst, quantization_step_ut=quant,
            noise_sigma_ut=noise, nonlinearity_coeff=cubic,
        )

    # Means sit >= 20% apart model-to-model on every discriminative parameter.
    return (
        ModelSpec("phone_a", sig("phone_a", (21.0, 17.0, 26.0), 400.0, 1.3, 0.30, 0.9, 0.15, 0.35, 0.04)),
        ModelSpec("phone_b", sig("phone_b", (27.0, 22.0, 33.0), 480.0, 1.8, 0.42, 1.3, 0.20, 0.45, 0.07)),
        ModelSpec("phone_c", sig("phone_c", (34.0, 28.0, 42.0), 580.0, 2.4, 0.55, 1.9, 0.28, 0.55, 0.11)),
        ModelSpec("phone_d", sig("phone_d", (44.0, 36.0, 54.0), 760.0, 3.1, 0.72, 2.7, 0.38, 0.70, 0.16)),
    )


def default_park_spec(rng_seed: int = 42) -> ParkSpec:
    """Nine devices over four models (3 + 1 + 3 + 2), 2.5% intra-model spread."""
    return ParkSpec(models=_default_models(), devices_per_model=(3, 1, 3, 2), rng_seed=rng_seed)


def default_park(rng_seed: int = 42) -> list[DeviceSignature]:
    return make_park(default_park_spec(rng_seed))


def simulate_session(
    signature: DeviceSignature,
    schedule: PulseSchedule,
    spec: WaveformSpec,
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ,
    rng_seed: int = 0,
    session_id: str = "",
) -> Trace:
    """Simulate one device's trace over a full stimulus schedule.

    Deterministic: identical (signature, schedule, seed) give a bit-identical
    trace.
    """
    signature.validate()
    dt_ms = 1000.0 / sample_rate_hz
    n = int(round(schedule.total_duration_ms / dt_ms))
    if n < 1:
        n = 1
    t = np.arange(n) * dt_ms
    tau = signature.lag_tau_ms
    width = spec.pulse_width_ms
    omega = 2.0 * np.pi * signature.ring_freq_hz / 1000.0  # rad per ms
    step_height = 1.0 - np.exp(-width / tau)

    shape = np.zeros(n, dtype=float)      # unitless drive response
    remanence = np.zeros(n, dtype=float)  # field units, scales with hysteresis
    horizon = int(np.ceil(RESPONSE_HORIZON_MS / dt_ms))
    rem_tau = REMANENCE_TAU_FACTOR * tau
    for onset in schedule.onsets:
        i0 = int(np.ceil((onset - 1e-9) / dt_ms))
        if i0 >= n:
            continue
        i1 = min(n, i0 + horizon)
        rel = t[i0:i1] - onset
        seg = np.where(
            rel < width,
            1.0 - np.exp(-rel / tau),
            step_height * np.exp(-(rel - width) / tau),
        )
        after = rel >= width
        ring_t = rel[after] - width
        seg[after] += (
            RING_FRACTION * step_height
            * np.exp(-signature.ring_damping * omega * ring_t)
            * np.sin(omega * ring_t)
        )
        shape[i0:i1] += spec.amplitude * seg
        remanence[i0:i1][after] += (
            signature.hysteresis_offset_ut * REMANENCE_FRACTION * np.exp(-ring_t / rem_tau)
        )

    shape = shape + signature.nonlinearity_coeff * shape**3
    settle = SETTLE_DRIFT_UT * np.maximum(0.0, 1.0 - t / SETTLE_DURATION_MS)
    baseline = signature.hysteresis_offset_ut + remanence + settle

    rng = np.random.default_rng(rng_seed)
    b = np.empty((n, 3), dtype=float)
    for axis in range(3):
        clean = signature.axis_gain_ut[axis] * shape + baseline
        if signature.noise_sigma_ut > 0:
            clean = clean + rng.normal(0.0, signature.noise_sigma_ut, size=n)
        q = signature.quantization_step_ut
        b[:, axis] = q * np.round(clean / q)
    return Trace(t_ms=t, b_ut=b, device_id=signature.device_id, session_id=session_id)


def session_seed(base_seed: int, device_index: int, day_index: int = 0) -> int:
    """Independent per-(device, day) noise stream, reproducible from one seed."""
    ss = np.random.SeedSequence([int(base_seed), int(device_index), int(day_index)])
    return int(ss.generate_state(1)[0])


def add_awgn(x: np.ndarray, snr_db: float, rng_seed: int = 0) -> np.ndarray:
    """Add white Gaussian noise at the given SNR relative to mean-square power.

    An infinite snr_db returns an unchanged copy. Zero-power input with finite
    SNR has no defined noise scale and raises ZeroSignalPower.
    """
    x = np.asarray(x, dtype=float)
    if np.isinf(snr_db) and snr_db > 0:
        return x.copy()
    p_signal = float(np.mean(x * x))
    if p_signal == 0.0:
        raise ZeroSignalPower("cannot scale noise to a zero-power signal")
    p_noise = p_signal / (10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(rng_seed)
    return x + rng.normal(0.0, np.sqrt(p_noise), size=x.shape)


def load_park_spec(path: str) -> ParkSpec:
    """Parse a park spec file: global keys, then one block per repeated `model` key."""
    pairs = load_kv(path)
    rng_seed = 42
    blocks: list[dict[str, str]] = []
    current: dict[str, str] | None = None
    for key, value in pairs:
        if key == "model":
            current = {"model": value}
            blocks.append(current)
        elif current is None:
            if key == "rng_seed":
                rng_seed = int(value)
            else:
                raise InvalidPark(f"{path}: key {key!r} appears before the first model block")
        else:
            current[key] = value
    if not blocks:
        raise InvalidPark(f"{path}: no model blocks")

    models: list[ModelSpec] = []
    counts: list[int] = []
    for blk in blocks:
        model_id = blk["model"]

        def fnum(key: str, default: float | None = None) -> float:
            if key not in blk:
                if default is None:
                    raise InvalidPark(f"{path}: model {model_id}: missing key {key!r}")
                return default
            return float(blk[key])

        mean = DeviceSignature(
            device_id=model_id,
            model_id=model_id,
            axis_gain_ut=(fnum("gain_x"), fnum("gain_y"), fnum("gain_z")),
            lag_tau_ms=fnum("lag_tau_ms"),
            ring_freq_hz=fnum("ring_freq_hz"),
            ring_damping=fnum("ring_damping"),
            hysteresis_offset_ut=fnum("hysteresis_offset_ut"),
            quantization_step_ut=fnum("quantization_step_ut"),
            noise_sigma_ut=fnum("noise_sigma_ut"),
            nonlinearity_coeff=fnum("nonlinearity_coeff", 0.0),
        ).validate()
        spread = {"*": fnum("spread", 0.025)}
        for key in blk:
            if key.startswith("spread_"):
                spread[key[len("spread_"):]] = float(blk[key])
        models.append(ModelSpec(model_id=model_id, mean=mean, spread=spread))
        counts.append(int(blk.get("devices", "1")))
    return ParkSpec(models=tuple(models), devices_per_model=tuple(counts), rng_seed=rng_seed).validate()
