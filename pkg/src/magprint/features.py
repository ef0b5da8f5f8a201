"""Eighteen statistical features per response segment.

Six base statistics are applied to three sequences derived from a segment s:
the time-domain samples (features 1-6), the DFT phase sequence (7-12) and the
DFT amplitude sequence (13-18). The base statistics are deliberately the
non-standard forms used throughout this pipeline:

  1. Shannon-style entropy      -sum(s^2 * ln(s^2))
  2. log-energy entropy          sum(ln(s^2))
  3. standard deviation          sqrt(sum((s - mu)^2) / (N - 1))
  4. variance                    sum((s - mu)^2) / (N - 1)
  5. skewness                    (1 / sigma^3) * sum(s^3 - mu^3)
  6. kurtosis                    (1 / sigma^4) * sum(s^4 - mu^4)

Note 5 and 6 are *not* the classical standardized central moments: the sums
run over per-sample powers minus the mean's power, and are not divided by N.
Entropy terms where s^2 <= epsilon contribute zero (exact silence carries no
information); this keeps both entropies at 0 for all-zero sequences.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSegment, DimensionMismatch, ParseError
from .preprocess import ResponseSegment, rms_normalize

log = logging.getLogger("magprint.features")

N_FEATURES = 18
ALL_FEATURES = tuple(range(1, N_FEATURES + 1))

FEATURE_NAMES = tuple(
    f"{domain}_{stat}"
    for domain in ("time", "phase", "amp")
    for stat in ("shannon_entropy", "log_energy", "std", "var", "skew", "kurt")
)


@dataclass(frozen=True)
class FeatureConfig:
    epsilon: float = 1e-12
    classical_moments: bool = False
    channel: str = "magnitude"


def _entropies(s: np.ndarray, epsilon: float) -> tuple[float, float]:
    sq = s * s
    live = sq > epsilon
    logs = np.log(sq[live])
    shannon = -float(np.sum(sq[live] * logs))
    log_energy = float(np.sum(logs))
    return shannon, log_energy


def time_features(s: np.ndarray, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """The six base statistics of one sequence, in the order documented above."""
    s = np.asarray(s, dtype=float)
    n = s.shape[0]
    if n < 2:
        raise DegenerateSegment(f"need >= 2 samples for variance, got {n}")
    shannon, log_energy = _entropies(s, cfg.epsilon)
    mu = float(np.mean(s))
    var = float(np.sum((s - mu) ** 2)) / (n - 1)
    std = float(np.sqrt(var))
    if std == 0.0:
        raise DegenerateSegment("zero variance: skewness and kurtosis are undefined")
    if cfg.classical_moments:
        m2 = float(np.mean((s - mu) ** 2))
        skew = float(np.mean((s - mu) ** 3)) / m2**1.5
        kurt = float(np.mean((s - mu) ** 4)) / m2**2
    else:
        skew = float(np.sum(s**3 - mu**3)) / std**3
        kurt = float(np.sum(s**4 - mu**4)) / std**4
    return np.array([shannon, log_energy, std, var, skew, kurt], dtype=float)


def dft(s: np.ndarray) -> np.ndarray:
    """Unnormalized forward DFT, X[k] = sum_n s[n] exp(-2*pi*i*k*n/N), length N."""
    s = np.asarray(s, dtype=float)
    if s.ndim != 1:
        raise DimensionMismatch(f"dft expects a 1-d sequence, got shape {s.shape}")
    return np.fft.fft(s)


# A real signal's DC and Nyquist bins are mathematically real, but any FFT
# leaves them with a roundoff imaginary part of arbitrary sign; raw atan2
# would then flip between +pi and -pi from run to run (and across FFT
# implementations), so phases of effectively-real bins are pinned exactly.
# The ratio cleanly separates roundoff (Im/Re ~ 1e-15) from genuine phase.
_REAL_BIN_RATIO = 1e-9


def phase_sequence(spectrum: np.ndarray) -> np.ndarray:
    """Principal-value phases in (-pi, pi]; zero-magnitude bins get phase 0.

    Bins that are real up to roundoff (|Im| <= 1e-9 |Re|) snap to exactly 0 or
    pi so the phase features are functions of the signal, not of how the
    transform rounded. Note -pi is outside the principal range: a negative
    real bin is +pi.
    """
    phases = np.angle(spectrum)
    real_bin = np.abs(spectrum.imag) <= _REAL_BIN_RATIO * np.abs(spectrum.real)
    phases[real_bin] = np.where(spectrum.real[real_bin] < 0.0, np.pi, 0.0)
    phases[np.abs(spectrum) == 0.0] = 0.0
    return phases


def spectral_features(s: np.ndarray, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Features 7-18: the six base statistics of DFT phase, then DFT amplitude."""
    spectrum = dft(s)
    return np.concatenate([
        time_features(phase_sequence(spectrum), cfg),
        time_features(np.abs(spectrum), cfg),
    ])


def feature_vector(s: np.ndarray, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """All 18 features of one (already normalized) segment."""
    out = np.concatenate([time_features(s, cfg), spectral_features(s, cfg)])
    if not np.all(np.isfinite(out)):
        raise DegenerateSegment("non-finite feature value")
    return out


@dataclass
class FeatureMatrix:
    """Feature rows plus their origin labels. Columns are features 1..18."""

    values: np.ndarray
    device_ids: list[str]
    session_ids: list[str]
    segment_indices: list[int]

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != N_FEATURES:
            raise DimensionMismatch(f"feature matrix must be (n, {N_FEATURES}), got {self.values.shape}")
        n = self.values.shape[0]
        if not (len(self.device_ids) == len(self.session_ids) == len(self.segment_indices) == n):
            raise DimensionMismatch("label columns must match the number of rows")

    @property
    def n_rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def classes(self) -> list[str]:
        return sorted(set(self.device_ids))

    def labels(self) -> np.ndarray:
        return np.asarray(self.device_ids)

    def columns(self, features: tuple[int, ...]) -> np.ndarray:
        """Select 1-based feature columns."""
        bad = [f for f in features if not 1 <= f <= N_FEATURES]
        if bad:
            raise DimensionMismatch(f"feature indices out of range 1..{N_FEATURES}: {bad}")
        return self.values[:, [f - 1 for f in features]]

    def take(self, rows: np.ndarray) -> "FeatureMatrix":
        rows = np.asarray(rows)
        return FeatureMatrix(
            values=self.values[rows],
            device_ids=[self.device_ids[i] for i in rows],
            session_ids=[self.session_ids[i] for i in rows],
            segment_indices=[self.segment_indices[i] for i in rows],
        )


def build_feature_matrix(
    segments: list[ResponseSegment],
    cfg: FeatureConfig = FeatureConfig(),
    normalize: bool = True,
) -> FeatureMatrix:
    """Featurize segments, RMS-normalizing first; degenerate rows are dropped."""
    rows: list[np.ndarray] = []
    device_ids: list[str] = []
    session_ids: list[str] = []
    indices: list[int] = []
    dropped = 0
    for seg in segments:
        try:
            samples = rms_normalize(seg.samples) if normalize else np.asarray(seg.samples, dtype=float)
            rows.append(feature_vector(samples, cfg))
        except DegenerateSegment as exc:
            dropped += 1
            log.warning("dropping segment %s/%s[%d]: %s", seg.device_id, seg.session_id, seg.index, exc)
            continue
        device_ids.append(seg.device_id)
        session_ids.append(seg.session_id)
        indices.append(seg.index)
    if dropped:
        log.warning("dropped %d of %d segments as degenerate", dropped, len(segments))
    if not rows:
        raise DegenerateSegment("no usable segments")
    return FeatureMatrix(np.vstack(rows), device_ids, session_ids, indices)


@dataclass
class Standardization:
    mean: np.ndarray
    std: np.ndarray
    constant_features: list[int] = field(default_factory=list)  # 1-based, zero spread in train

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std


def standardize(train: np.ndarray, apply_to: np.ndarray | None = None):
    """Z-score both matrices with the training statistics only.

    Features constant in training keep their raw scale (divide by 1) and are
    flagged, never dropped silently.
    """
    train = np.asarray(train, dtype=float)
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    constant = [int(i) + 1 for i in np.flatnonzero(std == 0.0)]
    if constant:
        log.warning("features constant in training kept unscaled: %s", constant)
    safe_std = np.where(std == 0.0, 1.0, std)
    stats = Standardization(mean=mean, std=safe_std, constant_features=constant)
    train_z = stats.apply(train)
    apply_z = stats.apply(np.asarray(apply_to, dtype=float)) if apply_to is not None else None
    return train_z, apply_z, stats


FEATURE_CSV_PREFIX = ("device_id", "session_id", "segment_index")


def write_feature_matrix(matrix: FeatureMatrix, path: str) -> None:
    header = list(FEATURE_CSV_PREFIX) + [f"f{i}" for i in range(1, N_FEATURES + 1)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(matrix.n_rows):
            writer.writerow(
                [matrix.device_ids[i], matrix.session_ids[i], matrix.segment_indices[i]]
                + [format(v, ".17g") for v in matrix.values[i]]
            )


def read_feature_matrix(path: str) -> FeatureMatrix:
    expected = list(FEATURE_CSV_PREFIX) + [f"f{i}" for i in range(1, N_FEATURES + 1)]
    values: list[list[float]] = []
    device_ids: list[str] = []
    session_ids: list[str] = []
    indices: list[int] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            raise ParseError(f"{path}: not a feature matrix CSV")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected):
                raise ParseError(f"{path}:{lineno}: expected {len(expected)} columns")
            device_ids.append(row[0])
            session_ids.append(row[1])
            indices.append(int(row[2]))
            values.append([float(v) for v in row[3:]])
    if not values:
        raise ParseError(f"{path}: no feature rows")
    return FeatureMatrix(np.asarray(values, dtype=float), device_ids, session_ids, indices)
