"""Cross-validation plumbing, ROC/EER, verification, experiment drivers."""

import math

import numpy as np
import pytest

from conftest import blob_matrix
from oracles import eer_oracle, roc_oracle
from magprint.errors import EmptyCounts, EmptyScores, LabelMismatch, MissingDay, ParseError, TooFewSamples
from magprint.evaluation import (
    ConfusionCounts,
    RocCurve,
    accuracy,
    all_pair_eers,
    cross_validate,
    eer,
    kfold_split,
    noise_sweep,
    read_confusion_csv,
    roc_curve,
    simulate_days,
    simulate_park_matrix,
    stability_report,
    svg_roc,
    verify_pair,
    waveform_comparison,
    write_confusion_csv,
    write_roc_csv,
)
from magprint.simulator import ParkSpec, default_park_spec, make_park
from magprint.stimulus import waveform_preset


# -- folds ---------------------------------------------------------------------


def test_kfold_is_a_stratified_partition():
    labels = np.array(["a"] * 260 + ["b"] * 260)
    plan = kfold_split(labels, k=10, rng_seed=0)
    all_rows: list[int] = []
    for fold in plan.fold_rows:
        fold_labels = labels[list(fold)]
        # 260 rows per class over 10 folds: exactly 26 of each class per fold
        assert np.sum(fold_labels == "a") == 26
        assert np.sum(fold_labels == "b") == 26
        all_rows.extend(fold)
    assert sorted(all_rows) == list(range(520))


def test_kfold_train_test_complement():
    labels = np.array(["a"] * 10 + ["b"] * 10)
    plan = kfold_split(labels, k=5, rng_seed=3)
    train, test = plan.train_test(2)
    assert set(train) | set(test) == set(range(20))
    assert set(train) & set(test) == set()


def test_kfold_determinism():
    labels = np.array(["a", "b"] * 20)
    assert kfold_split(labels, k=4, rng_seed=9) == kfold_split(labels, k=4, rng_seed=9)
    assert kfold_split(labels, k=4, rng_seed=9) != kfold_split(labels, k=4, rng_seed=10)


def test_kfold_rejects_degenerate_requests():
    with pytest.raises(TooFewSamples):
        kfold_split(np.array(["a", "a", "b", "b"]), k=1)
    with pytest.raises(TooFewSamples):
        kfold_split(np.array(["a", "a", "b"]), k=2)  # class b has one row


# -- confusion counts -------------------------------------------------------------


def test_confusion_counts_arithmetic():
    counts = ConfusionCounts(classes=["a", "b"])
    counts.add("a", "a")
    counts.add("a", "b")
    counts.add("b", "b", count=2)
    assert counts.total == 4
    assert counts.diagonal_sum == 3
    assert counts.row_sum("a") == 2
    assert counts.per_class("a") == (1, 0, 1, 2)
    assert counts.per_class("b") == (2, 1, 0, 1)
    assert accuracy(counts) == pytest.approx(0.75)


def test_confusion_counts_validation():
    counts = ConfusionCounts(classes=["a", "b"])
    with pytest.raises(LabelMismatch):
        counts.add("a", "zebra")
    with pytest.raises(LabelMismatch):
        counts.merge(ConfusionCounts(classes=["a", "c"]))
    with pytest.raises(LabelMismatch):
        ConfusionCounts(classes=["a"], matrix=np.zeros((2, 2)))
    with pytest.raises(EmptyCounts):
        accuracy(ConfusionCounts(classes=["a", "b"]))


def test_confusion_counts_merge():
    left = ConfusionCounts(classes=["a", "b"])
    left.add("a", "a")
    right = ConfusionCounts(classes=["a", "b"])
    right.add("b", "a", count=3)
    left.merge(right)
    assert left.total == 4
    assert left.matrix[1, 0] == 3


# -- cross-validation ----------------------------------------------------------------


def test_cross_validate_oao_and_knn_on_blobs():
    # masked to the informative pair: with all 16 noise columns included the
    # kernel metric is noise-dominated and accuracy would say nothing about
    # the three-class OAO / KNN plumbing this test is actually after
    blob = blob_matrix(n_classes=3, rows_per_class=15, separation=3.0,
                       informative_sigma=0.3, rng_seed=20)
    svm_counts = cross_validate(blob, folds=3, feature_mask=(3, 11))
    assert svm_counts.total == blob.n_rows
    assert accuracy(svm_counts) >= 0.9
    knn_counts = cross_validate(blob, folds=3, classifier="knn", knn_k=1,
                                feature_mask=(3, 11))
    assert knn_counts.total == blob.n_rows
    assert accuracy(knn_counts) >= 0.9


def test_cross_validate_rejects_unknown_classifier():
    blob = blob_matrix(rows_per_class=6, rng_seed=21)
    with pytest.raises(LabelMismatch):
        cross_validate(blob, folds=2, classifier="forest")


def test_cross_validate_feature_mask_restricts_information():
    blob = blob_matrix(n_classes=2, rows_per_class=20, separation=3.0,
                       informative_sigma=0.3, rng_seed=22)
    informative = accuracy(cross_validate(blob, folds=4, feature_mask=(3, 11)))
    noise_only = accuracy(cross_validate(blob, folds=4, feature_mask=(1, 2)))
    assert informative >= 0.9
    assert noise_only <= 0.75


# -- ROC / EER --------------------------------------------------------------------------


def test_roc_curve_reference_case():
    curve = roc_curve(np.array([2.0, 3.0]), np.array([1.0, 2.0]))
    np.testing.assert_array_equal(curve.thresholds, [-np.inf, 1.0, 2.0, 3.0, np.inf])
    np.testing.assert_array_equal(curve.fpr, [1.0, 1.0, 0.5, 0.0, 0.0])
    np.testing.assert_array_equal(curve.fnr, [0.0, 0.0, 0.0, 0.5, 1.0])


def test_eer_interpolates_the_sign_change():
    curve = RocCurve(
        thresholds=np.array([-np.inf, 0.0, 1.0]),
        fpr=np.array([1.0, 0.4, 0.2]),
        fnr=np.array([0.0, 0.2, 0.4]),
    )
    assert eer(curve) == pytest.approx(0.3)


def test_eer_exact_tie_short_circuits():
    curve = RocCurve(
        thresholds=np.array([-np.inf, 0.0, 1.0]),
        fpr=np.array([1.0, 0.3, 0.1]),
        fnr=np.array([0.0, 0.3, 0.9]),
    )
    assert eer(curve) == 0.3


def test_roc_and_eer_match_exhaustive_oracle():
    rng = np.random.default_rng(30)
    for trial in range(20):
        n_g = int(rng.integers(2, 40))
        n_i = int(rng.integers(2, 40))
        genuine = rng.normal(0.5, 1.0, size=n_g)
        impostor = rng.normal(-0.5, 1.0, size=n_i)
        if trial % 4 == 0:
            # force exact score collisions across the two sets
            impostor[: min(n_g, n_i)] = genuine[: min(n_g, n_i)]
        curve = roc_curve(genuine, impostor)
        ref_t, ref_fpr, ref_fnr = roc_oracle(genuine, impostor)
        np.testing.assert_array_equal(curve.thresholds, ref_t)
        np.testing.assert_array_equal(curve.fpr, ref_fpr)
        np.testing.assert_array_equal(curve.fnr, ref_fnr)
        assert eer(curve) == eer_oracle(list(curve.fpr), list(curve.fnr))


def test_roc_rejects_empty_sides():
    with pytest.raises(EmptyScores):
        roc_curve(np.array([]), np.array([1.0]))
    with pytest.raises(EmptyScores):
        roc_curve(np.array([1.0]), np.array([]))


# -- verification -------------------------------------------------------------------------


def test_verify_pair_pools_all_heldout_scores(small_park_run):
    result = verify_pair(small_park_run.matrix, "phone_a_1", "phone_b_1", folds=10)
    assert result.device_a == "phone_a_1"
    assert len(result.genuine_scores) == 40
    assert len(result.impostor_scores) == 40
    # different models: easily separable, far below chance
    assert 0.0 <= result.eer <= 0.2


def test_verify_pair_unknown_device(small_park_run):
    with pytest.raises(LabelMismatch):
        verify_pair(small_park_run.matrix, "phone_a_1", "phone_x_9")


def test_all_pair_eers_covers_every_unordered_pair(small_park_run):
    eers = all_pair_eers(small_park_run.matrix, folds=5)
    assert set(eers.keys()) == {("phone_a_1", "phone_b_1")}


# -- park pipeline ---------------------------------------------------------------------------


def test_simulate_park_matrix_layout(small_park_run):
    matrix = small_park_run.matrix
    assert matrix.n_rows == 80  # 2 devices x 40 bursts
    assert matrix.classes == ["phone_a_1", "phone_b_1"]
    assert small_park_run.common_length >= 4
    assert all(len(s.samples) == small_park_run.common_length
               for s in small_park_run.segments)
    assert all("day1" in s for s in matrix.session_ids)
    assert all(s.endswith("_B") for s in matrix.session_ids)


def test_simulate_park_matrix_respects_common_length_override():
    base = default_park_spec()
    spec = ParkSpec(models=list(base.models[:1]), devices_per_model=(1,), rng_seed=3)
    devices = make_park(spec)
    run = simulate_park_matrix(devices, waveform_preset("B", burst_repetitions=6),
                               common_length=17)
    assert run.common_length == 17
    assert all(len(s.samples) == 17 for s in run.segments)


def test_simulate_days_labels_and_shapes():
    base = default_park_spec()
    spec = ParkSpec(models=list(base.models[:2]), devices_per_model=(1, 1), rng_seed=7)
    devices = make_park(spec)
    days = simulate_days(devices, waveform_preset("B", burst_repetitions=10), n_days=2)
    assert sorted(days.keys()) == ["day1", "day2"]
    assert days["day1"].n_rows == days["day2"].n_rows == 20
    assert all("day2" in s for s in days["day2"].session_ids)


def test_stability_report_structure():
    base = default_park_spec()
    spec = ParkSpec(models=list(base.models[:2]), devices_per_model=(1, 1), rng_seed=7)
    devices = make_park(spec)
    days = simulate_days(devices, waveform_preset("B", burst_repetitions=12), n_days=2)
    report = stability_report(days, device_pairs=[("phone_a_1", "phone_b_1")], folds=4)
    assert report.days == ["day1", "day2"]
    assert set(report.per_day.keys()) == {
        ("day1", "phone_a_1", "phone_b_1"),
        ("day2", "phone_a_1", "phone_b_1"),
    }
    assert set(report.cross_day.keys()) == {
        ("phone_a_1", "day1", "day2"),
        ("phone_b_1", "day1", "day2"),
    }
    assert 0.0 <= report.mean_cross_day_eer() <= 1.0
    with pytest.raises(MissingDay):
        stability_report({"day1": days["day1"]})


def test_noise_sweep_shapes_and_determinism(small_park_run):
    result = noise_sweep(small_park_run.segments, "phone_a_1", "phone_b_1",
                         snr_dbs=[30.0, 0.0], repetitions=2, folds=4)
    assert result.snr_dbs == [30.0, 0.0]
    assert len(result.mean_eers) == 2
    assert len(result.eers[30.0]) == 2
    assert all(s >= 0.0 for s in result.stderrs)
    again = noise_sweep(small_park_run.segments, "phone_a_1", "phone_b_1",
                        snr_dbs=[30.0, 0.0], repetitions=2, folds=4)
    assert result.mean_eers == again.mean_eers


def test_waveform_comparison_splits_pairs_by_model():
    base = default_park_spec()
    spec = ParkSpec(models=list(base.models[:1]), devices_per_model=(2,), rng_seed=13)
    devices = make_park(spec)
    comparison = waveform_comparison(devices, [waveform_preset("A", burst_repetitions=20)],
                                     folds=4)
    assert comparison.waveform_ids == ["A"]
    assert set(comparison.pair_eers["A"].keys()) == {("phone_a_1", "phone_a_2")}
    assert 0.0 <= comparison.intra_eer["A"] <= 1.0
    assert math.isnan(comparison.inter_eer["A"])  # no cross-model pair exists


# -- serialization ------------------------------------------------------------------------------


def test_confusion_csv_roundtrip(tmp_path):
    counts = ConfusionCounts(classes=["a", "b"], matrix=np.array([[3, 1], [0, 4]]))
    path = tmp_path / "confusion.csv"
    write_confusion_csv(counts, str(path))
    back = read_confusion_csv(str(path))
    assert back.classes == ["a", "b"]
    np.testing.assert_array_equal(back.matrix, counts.matrix)


def test_confusion_csv_rejects_malformed(tmp_path):
    bad_header = tmp_path / "h.csv"
    bad_header.write_text("predicted,a,b\na,1,2\nb,3,4\n")
    with pytest.raises(ParseError):
        read_confusion_csv(str(bad_header))
    bad_rows = tmp_path / "r.csv"
    bad_rows.write_text("actual,a,b\na,1,2\nc,3,4\n")
    with pytest.raises(ParseError):
        read_confusion_csv(str(bad_rows))


def test_roc_outputs(tmp_path):
    curve = roc_curve(np.array([1.0, 2.0, 3.0]), np.array([0.5, 1.5]))
    csv_path = tmp_path / "roc.csv"
    write_roc_csv(curve, str(csv_path))
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "threshold,fpr,fnr"
    assert len(lines) == 1 + len(curve.thresholds)
    svg_path = tmp_path / "roc.svg"
    svg_roc(curve, str(svg_path), title="pair")
    text = svg_path.read_text()
    assert text.startswith("<svg")
    assert "polyline" in text
    assert "pair" in text
