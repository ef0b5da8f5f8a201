"""Command line interface.

One subcommand per pipeline stage plus the packaged experiments. Exit codes:
0 on success, 1 for any domain error (a machine-readable JSON line goes to
stderr), 2 for bad command line usage.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from .errors import MagprintError, UsageError
from .evaluation import (
    ConfusionCounts,
    accuracy,
    cross_validate,
    kfold_split,
    noise_sweep,
    read_confusion_csv,
    stability_report,
    svg_roc,
    verify_pair,
    waveform_comparison,
    write_confusion_csv,
    write_roc_csv,
)
from .features import (
    FeatureConfig,
    build_feature_matrix,
    read_feature_matrix,
    write_feature_matrix,
)
from .ingest import (
    ManifestEntry,
    SessionManifest,
    load_manifest,
    serialize_trace,
    trace_channel,
    write_manifest,
)
from .learn import (
    DEFAULT_HYPER,
    SvmHyperParams,
    brute_force_select,
    grid_search,
    sfs_select,
    train_bundle,
)
from .modelio import load_bundle, save_bundle
from .preprocess import VtConfig, read_segments, segment_responses, write_segments
from .simulator import (
    default_park_spec,
    load_park_spec,
    make_park,
    session_seed,
    simulate_session,
)
from .stimulus import (
    build_waveform,
    export_pcm,
    load_waveform_spec,
    pulse_onsets,
    save_waveform_spec,
    waveform_preset,
)
from .util import write_csv

log = logging.getLogger("magprint.cli")

DEFAULT_LEAD_IN_MS = 3000.0


# ---------------------------------------------------------------------------
# shared option helpers


def _waveform(arg: str, reps: int | None):
    if arg.upper() in ("A", "B", "C"):
        return waveform_preset(arg.upper(), burst_repetitions=reps)
    spec = load_waveform_spec(arg)
    if reps is not None:
        spec = dataclasses.replace(spec, burst_repetitions=reps)
        spec.validate()
    return spec


def _park(arg: str, seed: int):
    if arg == "default":
        return make_park(default_park_spec(rng_seed=seed))
    return make_park(load_park_spec(arg))


def _mask(arg: str | None) -> tuple[int, ...] | None:
    if arg is None:
        return None
    try:
        mask = tuple(int(v) for v in arg.split(",") if v.strip())
    except ValueError as exc:
        raise UsageError(f"--mask must be comma separated integers, got {arg!r}") from exc
    if not mask:
        raise UsageError("--mask is empty")
    return mask


def _hyper(args) -> SvmHyperParams:
    hyper = SvmHyperParams(gamma=args.gamma, c=args.c)
    hyper.validate()
    return hyper


def _vt(args) -> VtConfig:
    cfg = VtConfig(
        window_len=args.window, baseline_len=args.baseline, threshold_factor=args.factor
    )
    cfg.validate()
    return cfg


def _snr_list(arg: str) -> list[float]:
    try:
        return [float(v) for v in arg.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--snrs must be comma separated numbers, got {arg!r}") from exc


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_simulate(args) -> int:
    devices = _park(args.park, args.seed)
    spec = _waveform(args.waveform, args.reps)
    os.makedirs(args.out, exist_ok=True)
    schedule = pulse_onsets(spec, start_ms=args.lead_in)
    entries = []
    for day in range(1, args.days + 1):
        for di, device in enumerate(devices):
            session_id = f"{device.device_id}_day{day}_{spec.id}"
            trace = simulate_session(
                device, schedule, spec, sample_rate_hz=args.rate,
                rng_seed=session_seed(args.seed, di, day - 1), session_id=session_id,
            )
            rel = f"{session_id}.csv"
            serialize_trace(trace, os.path.join(args.out, rel))
            entries.append(ManifestEntry(session_id, device.device_id, f"day{day}",
                                         spec.id, rel))
    manifest_path = os.path.join(args.out, "manifest.csv")
    write_manifest(SessionManifest(entries=entries, base_dir=args.out), manifest_path)
    print(f"simulated {len(entries)} sessions ({len(devices)} devices x {args.days} day(s)) "
          f"-> {manifest_path}")
    return 0


def _cmd_segment(args) -> int:
    manifest = load_manifest(args.manifest)
    cfg = _vt(args)
    schedule = None
    expected = None
    if args.waveform is not None:
        spec = _waveform(args.waveform, args.reps)
        schedule = pulse_onsets(spec, start_ms=args.lead_in)
        expected = spec.burst_repetitions
    loaded = []
    for entry in manifest.entries:
        trace = manifest.load_trace(entry)
        loaded.append((entry, trace_channel(trace, args.channel), trace.sample_rate_hz))
    # the dump format is fixed-width, so every trace gets the same cut length:
    # the max of the per-trace medians, as in the library pipeline
    pooled = max(
        segment_responses(
            signal, cfg, sample_rate_hz=rate, schedule=schedule,
            device_id=entry.device_id, session_id=entry.session_id,
            expected_count=expected,
        ).report.common_length
        for entry, signal, rate in loaded
    )
    segments = []
    mismatches = 0
    for entry, signal, rate in loaded:
        result = segment_responses(
            signal, cfg, sample_rate_hz=rate, schedule=schedule,
            device_id=entry.device_id, session_id=entry.session_id,
            common_length=pooled, expected_count=expected,
        )
        if result.report.count_mismatch:
            mismatches += 1
        segments.extend(result.segments)
    write_segments(segments, args.out)
    print(f"segmented {len(manifest.entries)} traces -> {len(segments)} responses "
          f"({mismatches} trace(s) with count mismatch) -> {args.out}")
    return 0


def _cmd_features(args) -> int:
    segments = read_segments(args.segments)
    cfg = FeatureConfig(epsilon=args.epsilon, classical_moments=args.classical_moments,
                        channel=args.channel)
    matrix = build_feature_matrix(segments, cfg, normalize=not args.no_normalize)
    write_feature_matrix(matrix, args.out)
    print(f"extracted {matrix.n_rows} x {matrix.values.shape[1]} feature matrix "
          f"({len(matrix.classes)} devices) -> {args.out}")
    return 0


def _cmd_select(args) -> int:
    matrix = read_feature_matrix(args.features)
    plan = kfold_split(matrix.labels(), k=args.folds, rng_seed=args.seed)
    hyper = _hyper(args)
    if args.method == "brute":
        result = brute_force_select(matrix, plan, hyper, subset_size=args.subset_size)
    else:
        start = _mask(args.start) or ()
        result = sfs_select(matrix, plan, hyper, start=start)
    chosen = ",".join(str(i) for i in result.chosen)
    print(f"{result.method}: features [{chosen}] accuracy {result.metric:.4f} "
          f"({len(result.search_log)} evaluations logged)")
    if args.out:
        rows = [(";".join(str(i) for i in sub), format(m, ".17g"))
                for sub, m in result.search_log]
        write_csv(args.out, ("subset", "accuracy"), rows)
        print(f"search log -> {args.out}")
    return 0


def _cmd_tune(args) -> int:
    matrix = read_feature_matrix(args.features)
    plan = kfold_split(matrix.labels(), k=args.folds, rng_seed=args.seed)
    result = grid_search(matrix, plan, feature_mask=_mask(args.mask))
    print(f"best gamma {result.best.gamma:g} C {result.best.c:g} "
          f"accuracy {result.accuracy:.4f}")
    if args.out:
        rows = []
        for gi, g in enumerate(result.gammas):
            for ci, c in enumerate(result.cs):
                rows.append((format(g, ".17g"), format(c, ".17g"),
                             format(result.surface[gi, ci], ".17g")))
        write_csv(args.out, ("gamma", "c", "accuracy"), rows)
        print(f"accuracy surface -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    matrix = read_feature_matrix(args.features)
    bundle = train_bundle(matrix, _hyper(args), feature_mask=_mask(args.mask),
                          rng_seed=args.seed)
    save_bundle(bundle, args.out)
    n_sv = sum(int(m.support_mask.sum()) for m in bundle.oao.machines.values())
    print(f"trained {len(bundle.oao.machines)} pairwise machines over "
          f"{len(bundle.oao.classes)} devices ({n_sv} support vectors) -> {args.out}")
    return 0


def _cmd_classify(args) -> int:
    bundle = load_bundle(args.model)
    matrix = read_feature_matrix(args.features)
    predicted = bundle.predict(matrix.values)
    actual = matrix.labels()
    rows = [
        (matrix.device_ids[i], matrix.session_ids[i], str(matrix.segment_indices[i]),
         actual[i], predicted[i])
        for i in range(matrix.n_rows)
    ]
    if args.out:
        write_csv(args.out, ("device_id", "session_id", "segment_index",
                             "actual", "predicted"), rows)
    known = [cls for cls in matrix.classes if cls in bundle.oao.classes]
    if known == list(matrix.classes):
        counts = ConfusionCounts(classes=list(bundle.oao.classes))
        for i in range(matrix.n_rows):
            counts.add(actual[i], predicted[i])
        print(f"classified {matrix.n_rows} segments, accuracy {accuracy(counts):.4f}"
              + (f" -> {args.out}" if args.out else ""))
        if args.confusion_out:
            write_confusion_csv(counts, args.confusion_out)
            print(f"confusion matrix -> {args.confusion_out}")
    else:
        print(f"classified {matrix.n_rows} segments (labels not in model; no accuracy)"
              + (f" -> {args.out}" if args.out else ""))
    return 0


def _cmd_verify(args) -> int:
    matrix = read_feature_matrix(args.features)
    result = verify_pair(matrix, args.device_a, args.device_b, folds=args.folds,
                         hyper=_hyper(args), feature_mask=_mask(args.mask),
                         rng_seed=args.seed)
    print(f"EER {result.eer:.4f} ({result.genuine_scores.size} genuine, "
          f"{result.impostor_scores.size} impostor scores)")
    if args.out:
        write_roc_csv(result.curve, args.out)
        print(f"ROC points -> {args.out}")
    if args.svg:
        svg_roc(result.curve, args.svg, title=f"{args.device_a} vs {args.device_b}")
        print(f"ROC plot -> {args.svg}")
    return 0


def _cmd_report(args) -> int:
    if args.confusion:
        counts = read_confusion_csv(args.confusion)
    else:
        matrix = read_feature_matrix(args.features)
        counts = cross_validate(
            matrix, folds=kfold_split(matrix.labels(), k=args.folds, rng_seed=args.seed),
            hyper=_hyper(args), feature_mask=_mask(args.mask),
            classifier=args.classifier, knn_k=args.knn_k, rng_seed=args.seed,
        )
        if args.out:
            write_confusion_csv(counts, args.out)
            print(f"confusion matrix -> {args.out}")
    acc = accuracy(counts)
    print(f"devices: {len(counts.classes)}  observations: {counts.total}  "
          f"correct: {counts.diagonal_sum}  accuracy: {acc:.4f}")
    for cls in counts.classes:
        tp, fp, fn, _ = counts.per_class(cls)
        recall = tp / (tp + fn) if tp + fn else float("nan")
        precision = tp / (tp + fp) if tp + fp else float("nan")
        print(f"  {cls}: recall {recall:.3f} precision {precision:.3f}")
    return 0


def _cmd_stability(args) -> int:
    day_matrices = {}
    for item in args.day:
        if "=" not in item:
            raise UsageError(f"--day expects LABEL=FEATURES.csv, got {item!r}")
        label, path = item.split("=", 1)
        day_matrices[label] = read_feature_matrix(path)
    pairs = None
    if args.pairs:
        pairs = []
        for token in args.pairs.split(","):
            if ":" not in token:
                raise UsageError(f"--pairs expects A:B[,C:D...], got {token!r}")
            a, b = token.split(":", 1)
            pairs.append((a, b))
    report = stability_report(day_matrices, device_pairs=pairs, folds=args.folds,
                              hyper=_hyper(args), rng_seed=args.seed)
    for (day, a, b), e in sorted(report.per_day.items()):
        print(f"{day}: {a} vs {b}  EER {e:.4f}")
    for (device, d1, d2), e in sorted(report.cross_day.items()):
        print(f"{device}: {d1} vs {d2}  EER {e:.4f}")
    print(f"mean same-device cross-day EER {report.mean_cross_day_eer():.4f}")
    if args.out:
        rows = [("cross_device", day, a, b, format(e, ".17g"))
                for (day, a, b), e in sorted(report.per_day.items())]
        rows += [("cross_day", device, d1, d2, format(e, ".17g"))
                 for (device, d1, d2), e in sorted(report.cross_day.items())]
        write_csv(args.out, ("kind", "key", "first", "second", "eer"), rows)
        print(f"stability table -> {args.out}")
    return 0


def _cmd_noise_sweep(args) -> int:
    segments = read_segments(args.segments)
    result = noise_sweep(
        segments, args.device_a, args.device_b, _snr_list(args.snrs),
        repetitions=args.reps, folds=args.folds, hyper=_hyper(args), rng_seed=args.seed,
    )
    for snr, mean, se in zip(result.snr_dbs, result.mean_eers, result.stderrs):
        print(f"SNR {snr:g} dB: mean EER {mean:.4f} (se {se:.4f}, "
              f"n {len(result.eers[snr])})")
    if args.out:
        rows = [(format(s, "g"), format(m, ".17g"), format(se, ".17g"))
                for s, m, se in zip(result.snr_dbs, result.mean_eers, result.stderrs)]
        write_csv(args.out, ("snr_db", "mean_eer", "stderr"), rows)
        print(f"sweep table -> {args.out}")
    return 0


def _cmd_waveform_compare(args) -> int:
    devices = _park(args.park, args.seed)
    specs = [_waveform(w.strip(), args.reps) for w in args.waveforms.split(",")]
    result = waveform_comparison(devices, specs, folds=args.folds, hyper=_hyper(args),
                                 base_seed=args.seed, rng_seed=args.seed)
    for wid in result.waveform_ids:
        print(f"waveform {wid}: mean inter-model EER {result.inter_eer[wid]:.4f}  "
              f"mean intra-model EER {result.intra_eer[wid]:.4f}")
    if args.out:
        rows = [(wid, format(result.inter_eer[wid], ".17g"),
                 format(result.intra_eer[wid], ".17g"))
                for wid in result.waveform_ids]
        write_csv(args.out, ("waveform_id", "mean_inter_eer", "mean_intra_eer"), rows)
        print(f"comparison table -> {args.out}")
    return 0


def _cmd_export_stimulus(args) -> int:
    spec = _waveform(args.waveform, args.reps)
    signal = build_waveform(spec, sample_rate_hz=args.pcm_rate)
    export_pcm(signal, args.out, pcm_rate_hz=args.pcm_rate)
    print(f"waveform {spec.id}: {signal.size} samples at {args.pcm_rate:g} Hz "
          f"({spec.session_duration_ms / 1000.0:.1f} s) -> {args.out}")
    if args.spec_out:
        save_waveform_spec(spec, args.spec_out)
        print(f"waveform spec -> {args.spec_out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_hyper(p) -> None:
    p.add_argument("--gamma", type=float, default=DEFAULT_HYPER.gamma,
                   help="RBF kernel width (default %(default)s)")
    p.add_argument("--c", type=float, default=DEFAULT_HYPER.c,
                   help="SVM box constraint (default %(default)s)")


def _add_folds(p) -> None:
    p.add_argument("--folds", type=int, default=10,
                   help="cross-validation folds (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magprint",
        description="Magnetometer device fingerprinting from square-wave "
                    "stimulation responses.",
    )
    parser.add_argument("--seed", type=int, default=42, help="base RNG seed")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for info, -vv for debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate stimulation sessions for a device park")
    p.add_argument("--park", default="default", help="park config file or 'default'")
    p.add_argument("--waveform", default="B", help="preset id (A, B, C) or spec file")
    p.add_argument("--reps", type=int, default=None, help="override burst repetitions")
    p.add_argument("--days", type=int, default=1)
    p.add_argument("--rate", type=float, default=20.0, help="sensor sample rate in Hz")
    p.add_argument("--lead-in", type=float, default=DEFAULT_LEAD_IN_MS,
                   help="quiet lead-in before the first burst, ms")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("segment", help="detect and cut responses from recorded traces")
    p.add_argument("--manifest", required=True)
    p.add_argument("--channel", default="magnitude",
                   choices=["magnitude", "bx", "by", "bz"])
    p.add_argument("--waveform", default=None,
                   help="optional waveform (preset id or spec file) to match bursts against")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--lead-in", type=float, default=DEFAULT_LEAD_IN_MS)
    p.add_argument("--window", type=int, default=5, help="variance window length")
    p.add_argument("--baseline", type=int, default=20, help="baseline sample count")
    p.add_argument("--factor", type=float, default=5.0, help="detection threshold factor")
    p.add_argument("--out", required=True, help="segments CSV")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("features", help="extract the 18 statistical features per response")
    p.add_argument("--segments", required=True)
    p.add_argument("--channel", default="magnitude")
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--classical-moments", action="store_true",
                   help="use mean-centered skewness and kurtosis instead of the "
                        "raw-difference form")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip RMS normalization before featurizing")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("select", help="search for a discriminative feature subset")
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=["brute", "sfs"], default="sfs")
    p.add_argument("--subset-size", type=int, default=6)
    p.add_argument("--start", default=None, help="sfs: comma separated starting features")
    _add_folds(p)
    _add_hyper(p)
    p.add_argument("--out", default=None, help="search log CSV")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("tune", help="grid search gamma and C by cross-validation")
    p.add_argument("--features", required=True)
    p.add_argument("--mask", default=None, help="comma separated feature indices")
    _add_folds(p)
    p.add_argument("--out", default=None, help="accuracy surface CSV")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("train", help="train the pairwise SVM classifier bundle")
    p.add_argument("--features", required=True)
    p.add_argument("--mask", default=None)
    _add_hyper(p)
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("classify", help="identify devices for a feature matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None, help="per-segment predictions CSV")
    p.add_argument("--confusion-out", default=None)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("verify", help="verification EER for a device pair")
    p.add_argument("--features", required=True)
    p.add_argument("--device-a", required=True, help="claimed (genuine) device")
    p.add_argument("--device-b", required=True, help="impostor device")
    p.add_argument("--mask", default=None)
    _add_folds(p)
    _add_hyper(p)
    p.add_argument("--out", default=None, help="ROC points CSV")
    p.add_argument("--svg", default=None, help="ROC plot SVG")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("report", help="cross-validated confusion matrix and accuracy")
    p.add_argument("--features", default=None)
    p.add_argument("--confusion", default=None,
                   help="summarize an existing confusion CSV instead of running CV")
    p.add_argument("--classifier", choices=["oao", "knn"], default="oao")
    p.add_argument("--knn-k", type=int, default=1)
    p.add_argument("--mask", default=None)
    _add_folds(p)
    _add_hyper(p)
    p.add_argument("--out", default=None, help="confusion CSV")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("stability", help="per-day and cross-day EER stability")
    p.add_argument("--day", action="append", required=True,
                   help="LABEL=FEATURES.csv, repeatable")
    p.add_argument("--pairs", default=None, help="cross-device pairs A:B[,C:D...]")
    _add_folds(p)
    _add_hyper(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_stability)

    p = sub.add_parser("noise-sweep", help="verification EER under injected white noise")
    p.add_argument("--segments", required=True)
    p.add_argument("--device-a", required=True)
    p.add_argument("--device-b", required=True)
    p.add_argument("--snrs", default="30,20,10,0", help="comma separated SNR dB values")
    p.add_argument("--reps", type=int, default=50)
    _add_folds(p)
    _add_hyper(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_noise_sweep)

    p = sub.add_parser("waveform-compare",
                       help="compare stimulation waveforms by pairwise EER")
    p.add_argument("--park", default="default")
    p.add_argument("--waveforms", default="A,B,C")
    p.add_argument("--reps", type=int, default=None)
    _add_folds(p)
    _add_hyper(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_waveform_compare)

    p = sub.add_parser("export-stimulus", help="render a waveform to a 16-bit PCM WAV")
    p.add_argument("--waveform", default="B")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--pcm-rate", type=float, default=44100.0)
    p.add_argument("--out", required=True)
    p.add_argument("--spec-out", default=None, help="also save the waveform spec")
    p.set_defaults(func=_cmd_export_stimulus)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report" and not args.confusion and not args.features:
            raise UsageError("report needs --features or --confusion")
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": type(exc).__name__, "module": exc.module,
                          "message": str(exc)}), file=sys.stderr)
        return 2
    except MagprintError as exc:
        print(json.dumps({"error": type(exc).__name__, "module": exc.module,
                          "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
