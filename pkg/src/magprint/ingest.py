"""Trace and manifest I/O.

Trace CSV: header `t_ms,bx_ut,by_ut,bz_ut`, one row per sample, timestamps in
milliseconds, field components in microtesla.

Manifest CSV: header `session_id,device_id,day_label,waveform_id,trace_path`;
trace paths are resolved relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyTrace,
    IrregularSampling,
    MissingTraceFile,
    NonMonotonicTimestamps,
    ParseError,
)

log = logging.getLogger("magprint.ingest")

TRACE_HEADER = ("t_ms", "bx_ut", "by_ut", "bz_ut")
MANIFEST_HEADER = ("session_id", "device_id", "day_label", "waveform_id", "trace_path")

# Relative timestamp wobble tolerated around the nominal sample spacing.
JITTER_TOLERANCE = 0.20


@dataclass
class Trace:
    """One recording session: timestamps plus the three field axes."""

    t_ms: np.ndarray
    b_ut: np.ndarray  # shape (n, 3), columns bx, by, bz
    device_id: str = ""
    session_id: str = ""

    def __len__(self) -> int:
        return int(self.t_ms.shape[0])

    @property
    def sample_rate_hz(self) -> float:
        """Nominal rate inferred from the median timestamp spacing."""
        if len(self) < 2:
            raise EmptyTrace("need at least 2 samples to infer a sample rate")
        return 1000.0 / float(np.median(np.diff(self.t_ms)))


def magnitude(trace: Trace) -> np.ndarray:
    """Per-sample field magnitude sqrt(bx^2 + by^2 + bz^2)."""
    return np.sqrt(np.sum(trace.b_ut * trace.b_ut, axis=1))


def trace_channel(trace: Trace, channel: str) -> np.ndarray:
    """One observable channel: 'magnitude' or a single axis bx/by/bz."""
    if channel == "magnitude":
        return magnitude(trace)
    try:
        col = {"bx": 0, "by": 1, "bz": 2}[channel]
    except KeyError:
        raise ParseError(f"unknown channel {channel!r}; expected magnitude, bx, by or bz") from None
    return trace.b_ut[:, col].copy()


def parse_trace(path: str, device_id: str = "", session_id: str = "") -> Trace:
    """Read a trace CSV, checking header, shape, monotonicity and jitter."""
    rows: list[tuple[float, float, float, float]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTrace(f"{path}: file is empty") from None
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(TRACE_HEADER)}, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                rows.append((float(row[0]), float(row[1]), float(row[2]), float(row[3])))
            except ValueError:
                bad = next(v for v in row if not _is_float(v))
                raise ParseError(f"{path}:{lineno}: non-numeric value {bad!r}") from None
    if not rows:
        raise EmptyTrace(f"{path}: no samples")
    arr = np.asarray(rows, dtype=float)
    t = arr[:, 0]
    dt = np.diff(t)
    if np.any(dt <= 0):
        bad_idx = int(np.argmax(dt <= 0))
        raise NonMonotonicTimestamps(
            f"{path}:{bad_idx + 3}: timestamp {t[bad_idx + 1]} does not increase past {t[bad_idx]}"
        )
    if len(dt):
        nominal = float(np.median(dt))
        worst = float(np.max(np.abs(dt - nominal))) / nominal
        if worst > JITTER_TOLERANCE:
            raise IrregularSampling(
                f"{path}: timestamp jitter {worst:.1%} exceeds the {JITTER_TOLERANCE:.0%} tolerance"
            )
        if worst > 0.01:
            log.warning("%s: timestamp jitter up to %.1f%% of nominal spacing", path, 100 * worst)
    return Trace(t_ms=t, b_ut=arr[:, 1:4], device_id=device_id, session_id=session_id)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def serialize_trace(trace: Trace, path: str) -> None:
    """Write a trace CSV; parse(serialize(t)) preserves values to 6 decimals."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for i in range(len(trace)):
            writer.writerow(
                [f"{trace.t_ms[i]:.6f}", f"{trace.b_ut[i, 0]:.6f}",
                 f"{trace.b_ut[i, 1]:.6f}", f"{trace.b_ut[i, 2]:.6f}"]
            )


@dataclass
class ManifestEntry:
    session_id: str
    device_id: str
    day_label: str
    waveform_id: str
    trace_path: str


@dataclass
class SessionManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    base_dir: str = "."

    def resolve(self, entry: ManifestEntry) -> str:
        if os.path.isabs(entry.trace_path):
            return entry.trace_path
        return os.path.join(self.base_dir, entry.trace_path)

    def load_trace(self, entry: ManifestEntry) -> Trace:
        return parse_trace(self.resolve(entry), device_id=entry.device_id,
                           session_id=entry.session_id)


def load_manifest(path: str) -> SessionManifest:
    """Read a manifest CSV and verify every referenced trace file exists."""
    base_dir = os.path.dirname(os.path.abspath(path))
    entries: list[ManifestEntry] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            log.warning("%s: empty manifest", path)
            return SessionManifest(entries=[], base_dir=base_dir)
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise ParseError(f"{path}:1: expected header {','.join(MANIFEST_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 columns, got {len(row)}")
            entries.append(ManifestEntry(*[v.strip() for v in row]))
    if not entries:
        log.warning("%s: manifest has a header but no entries", path)
    manifest = SessionManifest(entries=entries, base_dir=base_dir)
    for entry in entries:
        resolved = manifest.resolve(entry)
        if not os.path.isfile(resolved):
            raise MissingTraceFile(f"{path}: session {entry.session_id}: no trace file at {resolved}")
    return manifest


def write_manifest(manifest: SessionManifest, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow([e.session_id, e.device_id, e.day_label, e.waveform_id, e.trace_path])
