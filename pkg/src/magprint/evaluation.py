"""Evaluation: cross-validation, confusion counts, ROC/EER, and the
stability, noise-robustness and waveform-comparison experiments.

Identification is scored by stratified k-fold cross-validation with
per-fold standardization (training statistics only). Verification scores a
device pair by pooling held-out SVM decision values across folds: scores of
the claimed device are genuine, the other device's are impostor, and the
equal-error rate comes from a full threshold sweep with linear interpolation
at the crossing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyCounts,
    EmptyScores,
    LabelMismatch,
    MissingDay,
    TooFewSamples,
)
from .features import FeatureConfig, FeatureMatrix, build_feature_matrix, standardize
from .learn import (
    DEFAULT_HYPER,
    SvmHyperParams,
    decision_values,
    knn_classify,
    predict_oao_batch,
    train_binary_svm,
    train_oao,
)
from .preprocess import ResponseSegment, VtConfig, segment_responses
from .simulator import DeviceSignature, add_awgn, session_seed, simulate_session
from .stimulus import WaveformSpec, pulse_onsets

log = logging.getLogger("magprint.evaluation")

DEFAULT_FOLDS = 10
DEFAULT_LEAD_IN_MS = 3000.0


# ---------------------------------------------------------------------------
# folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    fold_rows: tuple[tuple[int, ...], ...]  # row indices per fold
    rng_seed: int = 0

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.asarray(self.fold_rows[fold], dtype=int)
        train = np.concatenate(
            [np.asarray(r, dtype=int) for f, r in enumerate(self.fold_rows) if f != fold]
        )
        return np.sort(train), np.sort(test)


def kfold_split(labels, k: int = DEFAULT_FOLDS, rng_seed: int = 0) -> FoldPlan:
    """Stratified folds: per class, shuffled rows split into k nearly equal blocks.

    Every class needs >= 2 rows so it reaches every training split.
    """
    if isinstance(labels, FeatureMatrix):
        labels = labels.labels()
    labels = np.asarray(labels).astype(str)
    if k < 2:
        raise TooFewSamples(f"k-fold needs k >= 2, got {k} (k = 1 leaves nothing held out)")
    rng = np.random.default_rng(rng_seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in sorted(set(labels)):
        rows = np.flatnonzero(labels == cls)
        if rows.size < 2:
            raise TooFewSamples(f"class {cls!r} has {rows.size} row(s); need >= 2")
        rows = rows[rng.permutation(rows.size)]
        for f, chunk in enumerate(np.array_split(rows, k)):
            folds[f].extend(int(r) for r in chunk)
    return FoldPlan(k=k, fold_rows=tuple(tuple(sorted(f)) for f in folds), rng_seed=rng_seed)


def _as_plan(folds, labels, rng_seed: int = 0) -> FoldPlan:
    if isinstance(folds, FoldPlan):
        return folds
    return kfold_split(labels, k=int(folds), rng_seed=rng_seed)


# ---------------------------------------------------------------------------
# confusion counts


@dataclass
class ConfusionCounts:
    """Row = actual class, column = predicted class."""

    classes: list[str]
    matrix: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        n = len(self.classes)
        if self.matrix is None:
            self.matrix = np.zeros((n, n), dtype=int)
        else:
            self.matrix = np.asarray(self.matrix, dtype=int)
            if self.matrix.shape != (n, n):
                raise LabelMismatch(f"matrix shape {self.matrix.shape} != ({n}, {n})")

    def add(self, actual: str, predicted: str, count: int = 1) -> None:
        try:
            i = self.classes.index(actual)
            j = self.classes.index(predicted)
        except ValueError as exc:
            raise LabelMismatch(f"unknown class in ({actual!r}, {predicted!r})") from exc
        self.matrix[i, j] += count

    def merge(self, other: "ConfusionCounts") -> None:
        if other.classes != self.classes:
            raise LabelMismatch("cannot merge counts over different class sets")
        self.matrix += other.matrix

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    @property
    def diagonal_sum(self) -> int:
        return int(np.trace(self.matrix))

    def row_sum(self, cls: str) -> int:
        return int(self.matrix[self.classes.index(cls)].sum())

    def per_class(self, cls: str) -> tuple[int, int, int, int]:
        """(tp, fp, fn, tn) for one class; tp+fn is its row sum, tp+fp its column sum."""
        i = self.classes.index(cls)
        tp = int(self.matrix[i, i])
        fp = int(self.matrix[:, i].sum()) - tp
        fn = int(self.matrix[i, :].sum()) - tp
        tn = self.total - tp - fp - fn
        return tp, fp, fn, tn


def accuracy(counts: ConfusionCounts) -> float:
    """Diagonal sum over total count."""
    if counts.total == 0:
        raise EmptyCounts("confusion matrix holds no observations")
    return counts.diagonal_sum / counts.total


def cross_validate(
    matrix: FeatureMatrix,
    folds=DEFAULT_FOLDS,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    feature_mask: tuple[int, ...] | None = None,
    classifier: str = "oao",
    knn_k: int = 1,
    rng_seed: int = 1,
) -> ConfusionCounts:
    """Summed held-out confusion over all folds; standardization is train-only."""
    plan = _as_plan(folds, matrix.labels())
    mask = feature_mask if feature_mask is not None else tuple(range(1, matrix.values.shape[1] + 1))
    values = matrix.columns(mask)
    labels = matrix.labels()
    counts = ConfusionCounts(classes=matrix.classes)
    for f in range(plan.k):
        train_rows, test_rows = plan.train_test(f)
        if test_rows.size == 0:
            continue
        train_z, test_z, _ = standardize(values[train_rows], values[test_rows])
        if classifier == "oao":
            model = train_oao(train_z, labels[train_rows], hyper, rng_seed=rng_seed + f)
            predicted = predict_oao_batch(model, test_z)
        elif classifier == "knn":
            predicted = knn_classify(train_z, labels[train_rows], test_z, k=knn_k)
        else:
            raise LabelMismatch(f"unknown classifier {classifier!r}; expected oao or knn")
        for row, pred in zip(test_rows, predicted):
            counts.add(labels[row], pred)
    return counts


# ---------------------------------------------------------------------------
# ROC and EER


@dataclass
class RocCurve:
    """Sweep of accept-if-score>=threshold decisions, inf sentinels included."""

    thresholds: np.ndarray
    fpr: np.ndarray  # impostor scores at or above threshold
    fnr: np.ndarray  # genuine scores below threshold


def roc_curve(genuine: np.ndarray, impostor: np.ndarray) -> RocCurve:
    genuine = np.asarray(genuine, dtype=float)
    impostor = np.asarray(impostor, dtype=float)
    if genuine.size == 0 or impostor.size == 0:
        raise EmptyScores("need at least one genuine and one impostor score")
    thresholds = np.concatenate(
        [[-np.inf], np.unique(np.concatenate([genuine, impostor])), [np.inf]]
    )
    fpr = np.array([np.mean(impostor >= t) for t in thresholds])
    fnr = np.array([np.mean(genuine < t) for t in thresholds])
    return RocCurve(thresholds=thresholds, fpr=fpr, fnr=fnr)


def eer(curve: RocCurve) -> float:
    """Equal-error rate: linear interpolation where fpr - fnr crosses zero."""
    diff = curve.fpr - curve.fnr
    for i in range(diff.size):
        if diff[i] == 0.0:
            return float(curve.fpr[i])
        if diff[i] < 0.0:
            # crossing happened between i-1 (diff > 0) and i (diff < 0)
            d1 = diff[i - 1]
            d2 = diff[i]
            s = d1 / (d1 - d2)
            return float(curve.fpr[i - 1] + s * (curve.fpr[i] - curve.fpr[i - 1]))
    return float(curve.fpr[-1])  # unreachable for well-formed curves


@dataclass
class VerificationResult:
    device_a: str  # claimed (genuine) device
    device_b: str  # impostor device
    eer: float
    curve: RocCurve
    genuine_scores: np.ndarray
    impostor_scores: np.ndarray


def verify_pair(
    matrix: FeatureMatrix,
    device_a: str,
    device_b: str,
    folds=DEFAULT_FOLDS,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    feature_mask: tuple[int, ...] | None = None,
    rng_seed: int = 1,
) -> VerificationResult:
    """EER of device_a (genuine) against device_b over pooled held-out scores."""
    labels = matrix.labels()
    for dev in (device_a, device_b):
        if dev not in labels:
            raise LabelMismatch(f"device {dev!r} has no rows in the feature matrix")
    rows = np.flatnonzero((labels == device_a) | (labels == device_b))
    sub = matrix.take(rows)
    mask = feature_mask if feature_mask is not None else tuple(range(1, sub.values.shape[1] + 1))
    values = sub.columns(mask)
    sub_labels = sub.labels()
    plan = _as_plan(folds, sub_labels)
    genuine: list[float] = []
    impostor: list[float] = []
    for f in range(plan.k):
        train_rows, test_rows = plan.train_test(f)
        train_z, test_z, _ = standardize(values[train_rows], values[test_rows])
        model = train_binary_svm(
            train_z, sub_labels[train_rows], hyper, rng_seed=rng_seed + f, pos_label=device_a
        )
        scores = decision_values(model, test_z)
        for row, score in zip(test_rows, scores):
            (genuine if sub_labels[row] == device_a else impostor).append(float(score))
    g = np.asarray(genuine)
    i = np.asarray(impostor)
    curve = roc_curve(g, i)
    return VerificationResult(device_a, device_b, eer(curve), curve, g, i)


def all_pair_eers(
    matrix: FeatureMatrix,
    folds=DEFAULT_FOLDS,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    feature_mask: tuple[int, ...] | None = None,
    rng_seed: int = 1,
) -> dict[tuple[str, str], float]:
    from itertools import combinations

    out: dict[tuple[str, str], float] = {}
    for a, b in combinations(matrix.classes, 2):
        out[(a, b)] = verify_pair(
            matrix, a, b, folds=folds, hyper=hyper, feature_mask=feature_mask, rng_seed=rng_seed
        ).eer
    return out


# ---------------------------------------------------------------------------
# experiments


@dataclass
class StabilityReport:
    days: list[str]
    # (day, device_a, device_b) -> EER of a vs b within that day
    per_day: dict[tuple[str, str, str], float]
    # (device, day_i, day_j) -> EER of the device against itself across days
    cross_day: dict[tuple[str, str, str], float]

    def mean_cross_day_eer(self) -> float:
        return float(np.mean(list(self.cross_day.values())))


def stability_report(
    day_matrices: dict[str, FeatureMatrix],
    device_pairs: list[tuple[str, str]] | None = None,
    folds=DEFAULT_FOLDS,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    rng_seed: int = 1,
) -> StabilityReport:
    """Cross-device EERs per day and same-device EERs across day pairs.

    A device measured on two days should be indistinguishable from itself:
    cross-day EER near 0.5 means the fingerprint is stable over days.
    """
    days = sorted(day_matrices)
    if len(days) < 2:
        raise MissingDay(f"stability needs >= 2 day labels, got {days}")
    per_day: dict[tuple[str, str, str], float] = {}
    if device_pairs:
        for day in days:
            for a, b in device_pairs:
                res = verify_pair(day_matrices[day], a, b, folds=folds, hyper=hyper,
                                  rng_seed=rng_seed)
                per_day[(day, a, b)] = res.eer

    devices = sorted(set.intersection(*(set(m.classes) for m in day_matrices.values())))
    if not devices:
        raise MissingDay("no device appears on every day")
    cross_day: dict[tuple[str, str, str], float] = {}
    for device in devices:
        for i in range(len(days)):
            for j in range(i + 1, len(days)):
                d_i, d_j = days[i], days[j]
                parts = []
                for day, tag in ((d_i, f"day:{d_i}"), (d_j, f"day:{d_j}")):
                    m = day_matrices[day]
                    rows = np.flatnonzero(m.labels() == device)
                    sub = m.take(rows)
                    parts.append(FeatureMatrix(
                        values=sub.values,
                        device_ids=[tag] * sub.n_rows,
                        session_ids=sub.session_ids,
                        segment_indices=sub.segment_indices,
                    ))
                merged = FeatureMatrix(
                    values=np.vstack([p.values for p in parts]),
                    device_ids=[d for p in parts for d in p.device_ids],
                    session_ids=[s for p in parts for s in p.session_ids],
                    segment_indices=[s for p in parts for s in p.segment_indices],
                )
                res = verify_pair(merged, f"day:{d_i}", f"day:{d_j}", folds=folds,
                                  hyper=hyper, rng_seed=rng_seed)
                cross_day[(device, d_i, d_j)] = res.eer
    return StabilityReport(days=days, per_day=per_day, cross_day=cross_day)


@dataclass
class NoiseSweepResult:
    snr_dbs: list[float]
    mean_eers: list[float]
    stderrs: list[float]
    eers: dict[float, list[float]]


def noise_sweep(
    segments: list[ResponseSegment],
    device_a: str,
    device_b: str,
    snr_dbs: list[float],
    repetitions: int = 50,
    folds=DEFAULT_FOLDS,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    feature_cfg: FeatureConfig = FeatureConfig(),
    rng_seed: int = 7,
) -> NoiseSweepResult:
    """Mean verification EER as white noise is injected into the raw segments.

    Noise power is referenced to each segment's own mean-square power, added
    before RMS normalization and featurization, exactly where a live capture
    would pick it up.
    """
    pair_segments = [s for s in segments if s.device_id in (device_a, device_b)]
    eers: dict[float, list[float]] = {float(snr): [] for snr in snr_dbs}
    for si, snr in enumerate(snr_dbs):
        for rep in range(repetitions):
            seeds = np.random.SeedSequence([rng_seed, si, rep]).generate_state(len(pair_segments))
            noisy = [
                ResponseSegment(
                    device_id=seg.device_id, session_id=seg.session_id, index=seg.index,
                    samples=add_awgn(seg.samples, float(snr), rng_seed=int(seeds[n])),
                )
                for n, seg in enumerate(pair_segments)
            ]
            fm = build_feature_matrix(noisy, feature_cfg, normalize=True)
            res = verify_pair(fm, device_a, device_b, folds=folds, hyper=hyper,
                              rng_seed=rng_seed + rep)
            eers[float(snr)].append(res.eer)
    means = [float(np.mean(eers[float(s)])) for s in snr_dbs]
    stderrs = [
        float(np.std(eers[float(s)], ddof=1) / np.sqrt(len(eers[float(s)])))
        if len(eers[float(s)]) > 1 else 0.0
        for s in snr_dbs
    ]
    return NoiseSweepResult(list(map(float, snr_dbs)), means, stderrs, eers)


@dataclass
class ParkRun:
    matrix: FeatureMatrix
    segments: list[ResponseSegment]
    common_length: int


def simulate_park_matrix(
    devices: list[DeviceSignature],
    spec: WaveformSpec,
    vt_cfg: VtConfig = VtConfig(),
    feature_cfg: FeatureConfig = FeatureConfig(),
    sample_rate_hz: float = 20.0,
    base_seed: int = 42,
    day_index: int = 0,
    lead_in_ms: float = DEFAULT_LEAD_IN_MS,
    day_label: str = "day1",
    common_length: int | None = None,
) -> ParkRun:
    """Stimulate every device once and run the full extraction pipeline.

    All devices are cut to one segment length, so classifiers compare shapes
    rather than detector cut points. Unless an explicit common_length is
    passed, the park-wide length is the max of the per-trace medians:
    truncating below a device's response length discards its tail structure,
    while padding a short response only appends trailing baseline samples.
    """
    from .ingest import trace_channel

    schedule = pulse_onsets(spec, start_ms=lead_in_ms)
    signals = []
    for di, device in enumerate(devices):
        trace = simulate_session(
            device, schedule, spec, sample_rate_hz=sample_rate_hz,
            rng_seed=session_seed(base_seed, di, day_index),
            session_id=f"{device.device_id}_{day_label}_{spec.id}",
        )
        signals.append((device, trace_channel(trace, feature_cfg.channel), trace.session_id))

    if common_length is None:
        per_trace = [
            segment_responses(
                signal, vt_cfg, sample_rate_hz=sample_rate_hz, schedule=schedule,
                device_id=device.device_id, session_id=session_id,
                expected_count=spec.burst_repetitions,
            ).report.common_length
            for device, signal, session_id in signals
        ]
        common_length = int(max(per_trace))

    all_segments: list[ResponseSegment] = []
    for device, signal, session_id in signals:
        result = segment_responses(
            signal, vt_cfg, sample_rate_hz=sample_rate_hz, schedule=schedule,
            device_id=device.device_id, session_id=session_id,
            expected_count=spec.burst_repetitions, common_length=common_length,
        )
        all_segments.extend(result.segments)
    matrix = build_feature_matrix(all_segments, feature_cfg, normalize=True)
    return ParkRun(matrix=matrix, segments=all_segments, common_length=common_length)


def simulate_days(
    devices: list[DeviceSignature],
    spec: WaveformSpec,
    n_days: int,
    vt_cfg: VtConfig = VtConfig(),
    feature_cfg: FeatureConfig = FeatureConfig(),
    base_seed: int = 42,
) -> dict[str, FeatureMatrix]:
    """One park run per day: identical signatures, fresh noise, shared cut length."""
    out: dict[str, FeatureMatrix] = {}
    length: int | None = None
    for day in range(n_days):
        run = simulate_park_matrix(
            devices, spec, vt_cfg, feature_cfg, base_seed=base_seed,
            day_index=day, day_label=f"day{day + 1}", common_length=length,
        )
        length = run.common_length
        out[f"day{day + 1}"] = run.matrix
    return out


@dataclass
class WaveformComparison:
    waveform_ids: list[str]
    inter_eer: dict[str, float]  # mean over different-model pairs
    intra_eer: dict[str, float]  # mean over same-model pairs
    pair_eers: dict[str, dict[tuple[str, str], float]]


def waveform_comparison(
    devices: list[DeviceSignature],
    specs: list[WaveformSpec],
    vt_cfg: VtConfig = VtConfig(),
    feature_cfg: FeatureConfig = FeatureConfig(),
    folds=DEFAULT_FOLDS,
    hyper: SvmHyperParams = DEFAULT_HYPER,
    base_seed: int = 42,
    rng_seed: int = 1,
) -> WaveformComparison:
    """Same park, one run per waveform; EERs split into intra/inter-model pairs."""
    model_of = {d.device_id: d.model_id for d in devices}
    inter: dict[str, float] = {}
    intra: dict[str, float] = {}
    pair_eers: dict[str, dict[tuple[str, str], float]] = {}
    for spec in specs:
        fm = simulate_park_matrix(
            devices, spec, vt_cfg, feature_cfg, base_seed=base_seed,
        ).matrix
        eers = all_pair_eers(fm, folds=folds, hyper=hyper, rng_seed=rng_seed)
        pair_eers[spec.id] = eers
        intra_vals = [v for (a, b), v in eers.items() if model_of[a] == model_of[b]]
        inter_vals = [v for (a, b), v in eers.items() if model_of[a] != model_of[b]]
        intra[spec.id] = float(np.mean(intra_vals)) if intra_vals else float("nan")
        inter[spec.id] = float(np.mean(inter_vals)) if inter_vals else float("nan")
    return WaveformComparison(
        waveform_ids=[s.id for s in specs], inter_eer=inter, intra_eer=intra, pair_eers=pair_eers
    )


# ---------------------------------------------------------------------------
# report serialization


def write_confusion_csv(counts: ConfusionCounts, path: str) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["actual"] + counts.classes)
        for i, cls in enumerate(counts.classes):
            writer.writerow([cls] + [int(v) for v in counts.matrix[i]])


def read_confusion_csv(path: str) -> ConfusionCounts:
    import csv

    from .errors import ParseError

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "actual":
            raise ParseError(f"{path}: not a confusion CSV (first header cell must be 'actual')")
        classes = header[1:]
        rows = []
        row_labels = []
        for row in reader:
            if not row:
                continue
            row_labels.append(row[0])
            rows.append([int(v) for v in row[1:]])
    if row_labels != classes:
        raise ParseError(f"{path}: row labels {row_labels} do not match columns {classes}")
    return ConfusionCounts(classes=classes, matrix=np.asarray(rows, dtype=int))


def write_roc_csv(curve: RocCurve, path: str) -> None:
    import csv

    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpr", "fnr"])
        for t, f, n in zip(curve.thresholds, curve.fpr, curve.fnr):
            writer.writerow([format(t, ".17g"), format(f, ".17g"), format(n, ".17g")])


def svg_roc(curve: RocCurve, path: str, title: str = "") -> None:
    """Tiny self-contained SVG of the ROC trade-off (FPR vs FNR)."""
    size, margin = 360, 40
    span = size - 2 * margin

    def sx(v: float) -> float:
        return margin + v * span

    def sy(v: float) -> float:
        return size - margin - v * span

    pts = " ".join(f"{sx(f):.2f},{sy(n):.2f}" for f, n in zip(curve.fpr, curve.fnr))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" '
        'fill="none" stroke="#888"/>',
        f'<line x1="{sx(0):.2f}" y1="{sy(0):.2f}" x2="{sx(1):.2f}" y2="{sy(1):.2f}" '
        'stroke="#ccc" stroke-dasharray="4 4"/>',
        f'<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="1.5"/>',
        f'<text x="{size / 2:.0f}" y="{size - 8}" text-anchor="middle" '
        f'font-size="12">false positive rate</text>',
        f'<text x="12" y="{size / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {size / 2:.0f})">false negative rate</text>',
    ]
    if title:
        parts.append(f'<text x="{size / 2:.0f}" y="20" text-anchor="middle" font-size="13">{title}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
