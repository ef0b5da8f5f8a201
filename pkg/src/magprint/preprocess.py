"""Response extraction: variance-trajectory segmentation and RMS normalization.

A response is detected wherever the sliding-window variance of the observable
exceeds threshold_factor times the baseline variance (estimated from the quiet
lead-in). Consecutive hot windows form one detection; a detection only closes
after the variance stays below threshold for at least window_len windows, so a
multi-pulse burst yields a single segment. Detected segments are cut to a
common length and later RMS-normalized so that amplitude scale cancels.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NoResponseDetected, SegmentTooShort, SignalTooShort, ZeroSegment
from .stimulus import PulseSchedule

log = logging.getLogger("magprint.preprocess")

MIN_SEGMENT_LEN = 4


@dataclass(frozen=True)
class VtConfig:
    window_len: int = 5
    baseline_len: int = 20
    threshold_factor: float = 5.0

    def validate(self) -> "VtConfig":
        if self.window_len < 2:
            raise SignalTooShort(f"window_len must be >= 2, got {self.window_len}")
        if self.baseline_len < self.window_len:
            raise SignalTooShort("baseline_len must be >= window_len")
        if self.threshold_factor <= 1.0:
            raise SignalTooShort(f"threshold_factor must be > 1, got {self.threshold_factor}")
        return self


@dataclass
class ResponseSegment:
    """One device response, raw (not yet normalized)."""

    device_id: str
    session_id: str
    index: int
    samples: np.ndarray
    onset_sample: int = 0


@dataclass
class SegmentationReport:
    n_detections: int = 0
    n_matched: int = 0
    expected_count: int | None = None
    common_length: int = 0
    missed_onsets: list[int] = field(default_factory=list)      # burst indices without a detection
    dropped_detections: list[int] = field(default_factory=list)  # start samples of spurious extras

    @property
    def count_mismatch(self) -> bool:
        return self.expected_count is not None and self.n_matched != self.expected_count


@dataclass
class SegmentationResult:
    segments: list[ResponseSegment]
    report: SegmentationReport


def sliding_variance(signal: np.ndarray, window_len: int) -> np.ndarray:
    """Population variance of every length-window_len window (n - w + 1 values)."""
    windows = np.lib.stride_tricks.sliding_window_view(signal, window_len)
    return windows.var(axis=1)


def variance_trajectory(signal: np.ndarray, cfg: VtConfig = VtConfig()) -> list[tuple[int, int]]:
    """Detected (start, end) sample spans, end exclusive, starts strictly increasing.

    Baseline variance is the median sliding variance over the first
    baseline_len samples; windows are hot when variance > threshold_factor *
    baseline. Hot runs separated by fewer than window_len cold windows merge.
    """
    cfg.validate()
    signal = np.asarray(signal, dtype=float)
    n = signal.shape[0]
    if n < cfg.baseline_len + cfg.window_len:
        raise SignalTooShort(f"signal has {n} samples; need >= baseline_len + window_len = "
                             f"{cfg.baseline_len + cfg.window_len}")
    v = sliding_variance(signal, cfg.window_len)
    n_baseline_windows = cfg.baseline_len - cfg.window_len + 1
    baseline_var = float(np.median(v[:n_baseline_windows]))
    threshold = cfg.threshold_factor * baseline_var
    hot = v > threshold
    if not hot.any():
        raise NoResponseDetected(
            f"no window variance exceeded {cfg.threshold_factor} x baseline ({baseline_var:.3g})"
        )

    # maximal hot runs, bridging cold gaps shorter than window_len
    idx = np.flatnonzero(hot)
    runs: list[tuple[int, int]] = []  # window-index runs, inclusive
    run_start = prev = int(idx[0])
    for i in idx[1:]:
        i = int(i)
        if i - prev - 1 < cfg.window_len:
            prev = i
            continue
        runs.append((run_start, prev))
        run_start = prev = i
    runs.append((run_start, prev))

    return [(w0, w1 + cfg.window_len) for w0, w1 in runs]


def rms_normalize(samples: np.ndarray) -> np.ndarray:
    """Scale to unit root-mean-square; a scaled copy of x maps to the same output."""
    samples = np.asarray(samples, dtype=float)
    rms = float(np.sqrt(np.mean(samples * samples)))
    if rms == 0.0:
        raise ZeroSegment("segment is identically zero; RMS undefined as a scale")
    return samples / rms


def segment_responses(
    signal: np.ndarray,
    cfg: VtConfig = VtConfig(),
    sample_rate_hz: float = 20.0,
    schedule: PulseSchedule | None = None,
    device_id: str = "",
    session_id: str = "",
    common_length: int | None = None,
    expected_count: int | None = None,
) -> SegmentationResult:
    """Cut detected responses to a common length and label them by burst.

    With a schedule (simulator ground truth) each detection is matched to the
    nearest burst start; unmatched bursts and spurious detections are reported.
    Count mismatches are warnings, not errors.
    """
    signal = np.asarray(signal, dtype=float)
    detections = variance_trajectory(signal, cfg)
    report = SegmentationReport(n_detections=len(detections), common_length=0,
                                expected_count=expected_count)

    # Match first so spurious detections cannot skew the common length.
    matched: list[tuple[int, tuple[int, int]]] = []  # (burst index, detection)
    if schedule is None:
        matched = list(enumerate(detections))
    else:
        dt_ms = 1000.0 / sample_rate_hz
        burst_idx = np.round(schedule.burst_starts / dt_ms).astype(int)
        taken: dict[int, tuple[int, int]] = {}
        for start, end in detections:
            b = int(np.argmin(np.abs(burst_idx - start)))
            if b in taken:
                # duplicate claim: the detection nearer the burst start wins
                if abs(start - burst_idx[b]) < abs(taken[b][0] - burst_idx[b]):
                    report.dropped_detections.append(taken[b][0])
                    taken[b] = (start, end)
                else:
                    report.dropped_detections.append(start)
                continue
            taken[b] = (start, end)
        matched = sorted(taken.items())
        report.missed_onsets = [b for b in range(len(burst_idx)) if b not in taken]
        if report.expected_count is None:
            report.expected_count = len(burst_idx)

    lengths = [end - start for _b, (start, end) in matched]
    length = int(common_length) if common_length is not None \
        else int(round(float(np.median(lengths))))
    if length < MIN_SEGMENT_LEN:
        raise SegmentTooShort(f"common segment length {length} is below {MIN_SEGMENT_LEN}")
    report.common_length = length

    def cut(start: int) -> np.ndarray:
        out = signal[start:start + length]
        if out.shape[0] < length:
            # ran off the end of the trace: extend with the trailing baseline value
            out = np.concatenate([out, np.full(length - out.shape[0], signal[-1])])
        return out

    segments = [ResponseSegment(device_id, session_id, b, cut(start), start)
                for b, (start, _end) in matched]
    report.n_matched = len(segments)

    if report.count_mismatch:
        log.warning(
            "%s/%s: segment count mismatch: matched %d of %d expected (%d detections, %d spurious)",
            device_id, session_id, report.n_matched, report.expected_count,
            report.n_detections, len(report.dropped_detections),
        )
    return SegmentationResult(segments=segments, report=report)


SEGMENT_HEADER_PREFIX = ("device_id", "session_id", "index")


def write_segments(segments: list[ResponseSegment], path: str) -> None:
    """Debug dump: device_id,session_id,index,sample_0..sample_{L-1}."""
    if not segments:
        raise ZeroSegment("refusing to write an empty segment dump")
    length = len(segments[0].samples)
    header = list(SEGMENT_HEADER_PREFIX) + [f"sample_{i}" for i in range(length)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for seg in segments:
            if len(seg.samples) != length:
                raise ZeroSegment("segment dump requires a common length")
            writer.writerow([seg.device_id, seg.session_id, seg.index]
                            + [f"{v:.9g}" for v in seg.samples])


def read_segments(path: str) -> list[ResponseSegment]:
    segments: list[ResponseSegment] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header[:3]) != SEGMENT_HEADER_PREFIX:
            from .errors import ParseError

            raise ParseError(f"{path}: not a segment dump (header {header[:3]})")
        for row in reader:
            if not row:
                continue
            segments.append(ResponseSegment(
                device_id=row[0], session_id=row[1], index=int(row[2]),
                samples=np.asarray([float(v) for v in row[3:]], dtype=float),
            ))
    return segments
