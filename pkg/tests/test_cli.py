"""End-to-end CLI tests.

Everything runs in-process through main(argv) against a two-model park small
enough to keep the whole module under a minute. The module-scoped fixture
walks the full chain once (simulate -> segment -> features -> train); the
individual tests re-run single stages to check their stdout contracts and
error paths.
"""

import json
import re
import types
import wave

import pytest

from magprint.cli import main
from magprint.evaluation import (
    ConfusionCounts,
    accuracy,
    read_confusion_csv,
    write_confusion_csv,
)
from magprint.features import read_feature_matrix
from magprint.ingest import load_manifest
from magprint.preprocess import read_segments
from magprint.stimulus import load_waveform_spec

PARK = """\
rng_seed = 3

model = alpha
gain_x = 21.0
gain_y = 17.0
gain_z = 26.0
lag_tau_ms = 400.0
ring_freq_hz = 1.3
ring_damping = 0.30
hysteresis_offset_ut = 0.9
quantization_step_ut = 0.15
noise_sigma_ut = 0.35
nonlinearity_coeff = 0.04

model = beta
gain_x = 27.0
gain_y = 22.0
gain_z = 33.0
lag_tau_ms = 760.0
ring_freq_hz = 1.8
ring_damping = 0.42
hysteresis_offset_ut = 1.3
quantization_step_ut = 0.20
noise_sigma_ut = 0.45
"""

REPS = 30


@pytest.fixture(scope="module")
def pipe(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli_pipe")
    park = base / "park.cfg"
    park.write_text(PARK)
    p = types.SimpleNamespace(
        base=base,
        park=park,
        raw1=base / "raw_mon",
        raw2=base / "raw_tue",
        seg1=base / "seg_mon.csv",
        seg2=base / "seg_tue.csv",
        feat1=base / "feat_mon.csv",
        feat2=base / "feat_tue.csv",
        model=base / "bundle.model",
    )
    # two independent recording days: same park file (so identical devices),
    # different base seed (so fresh sensor noise)
    assert main(["simulate", "--park", str(park), "--waveform", "B",
                 "--reps", str(REPS), "--out", str(p.raw1)]) == 0
    assert main(["--seed", "9", "simulate", "--park", str(park), "--waveform", "B",
                 "--reps", str(REPS), "--out", str(p.raw2)]) == 0
    for raw, seg in ((p.raw1, p.seg1), (p.raw2, p.seg2)):
        assert main(["segment", "--manifest", str(raw / "manifest.csv"),
                     "--waveform", "B", "--reps", str(REPS), "--out", str(seg)]) == 0
    for seg, feat in ((p.seg1, p.feat1), (p.seg2, p.feat2)):
        assert main(["features", "--segments", str(seg), "--out", str(feat)]) == 0
    assert main(["train", "--features", str(p.feat1), "--out", str(p.model)]) == 0
    return p


def test_simulate_layout(pipe):
    assert (pipe.raw1 / "manifest.csv").is_file()
    assert (pipe.raw1 / "alpha_1_day1_B.csv").is_file()
    assert (pipe.raw1 / "beta_1_day1_B.csv").is_file()
    manifest = load_manifest(str(pipe.raw1 / "manifest.csv"))
    assert [e.device_id for e in manifest.entries] == ["alpha_1", "beta_1"]
    assert {e.day_label for e in manifest.entries} == {"day1"}


def test_simulate_stdout_multi_day(pipe, tmp_path, capsys):
    out = tmp_path / "raw"
    assert main(["simulate", "--park", str(pipe.park), "--waveform", "A",
                 "--reps", "3", "--days", "2", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "simulated 4 sessions (2 devices x 2 day(s))" in text
    assert (out / "alpha_1_day2_A.csv").is_file()


def test_segment_stdout_and_counts(pipe, tmp_path, capsys):
    out = tmp_path / "seg.csv"
    assert main(["segment", "--manifest", str(pipe.raw1 / "manifest.csv"),
                 "--waveform", "B", "--reps", str(REPS), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert f"segmented 2 traces -> {2 * REPS} responses" in text
    assert "(0 trace(s) with count mismatch)" in text
    assert len(read_segments(str(out))) == 2 * REPS


def test_features_stdout_and_matrix(pipe, tmp_path, capsys):
    out = tmp_path / "feat.csv"
    assert main(["features", "--segments", str(pipe.seg1), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert f"extracted {2 * REPS} x 18 feature matrix (2 devices)" in text
    matrix = read_feature_matrix(str(out))
    assert matrix.values.shape == (2 * REPS, 18)
    assert matrix.classes == ["alpha_1", "beta_1"]


def test_train_stdout(pipe, tmp_path, capsys):
    out = tmp_path / "m.model"
    assert main(["train", "--features", str(pipe.feat1), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "trained 1 pairwise machines over 2 devices" in text
    assert "support vectors" in text


def test_classify_known_labels(pipe, tmp_path, capsys):
    pred = tmp_path / "pred.csv"
    conf = tmp_path / "conf.csv"
    assert main(["classify", "--model", str(pipe.model), "--features", str(pipe.feat1),
                 "--out", str(pred), "--confusion-out", str(conf)]) == 0
    text = capsys.readouterr().out
    assert f"classified {2 * REPS} segments, accuracy" in text
    lines = pred.read_text().strip().splitlines()
    assert lines[0] == "device_id,session_id,segment_index,actual,predicted"
    assert len(lines) == 1 + 2 * REPS
    counts = read_confusion_csv(str(conf))
    # self-classification on the training matrix: two well separated models
    assert accuracy(counts) >= 0.9
    assert counts.total == 2 * REPS


def test_classify_foreign_labels_skips_accuracy(pipe, tmp_path, capsys):
    park = tmp_path / "park.cfg"
    park.write_text(
        "rng_seed = 5\n\nmodel = gamma\ngain_x = 18.0\ngain_y = 15.0\n"
        "gain_z = 24.0\nlag_tau_ms = 520.0\nring_freq_hz = 1.5\n"
        "ring_damping = 0.35\nhysteresis_offset_ut = 1.0\n"
        "quantization_step_ut = 0.15\nnoise_sigma_ut = 0.35\n"
    )
    raw = tmp_path / "raw"
    seg = tmp_path / "seg.csv"
    feat = tmp_path / "feat.csv"
    assert main(["simulate", "--park", str(park), "--waveform", "B",
                 "--reps", "6", "--out", str(raw)]) == 0
    assert main(["segment", "--manifest", str(raw / "manifest.csv"),
                 "--waveform", "B", "--reps", "6", "--out", str(seg)]) == 0
    assert main(["features", "--segments", str(seg), "--out", str(feat)]) == 0
    capsys.readouterr()
    assert main(["classify", "--model", str(pipe.model), "--features", str(feat)]) == 0
    text = capsys.readouterr().out
    assert "labels not in model; no accuracy" in text


def test_report_from_confusion_csv(tmp_path, capsys):
    counts = ConfusionCounts(classes=["x", "y"])
    for actual, predicted, n in (("x", "x", 3), ("x", "y", 1), ("y", "y", 4)):
        for _ in range(n):
            counts.add(actual, predicted)
    path = tmp_path / "conf.csv"
    write_confusion_csv(counts, str(path))
    assert main(["report", "--confusion", str(path)]) == 0
    text = capsys.readouterr().out
    assert "devices: 2  observations: 8  correct: 7  accuracy: 0.8750" in text
    assert "x: recall 0.750 precision 1.000" in text
    assert "y: recall 1.000 precision 0.800" in text


def test_report_cross_validation_knn(pipe, tmp_path, capsys):
    conf = tmp_path / "conf.csv"
    assert main(["report", "--features", str(pipe.feat1), "--classifier", "knn",
                 "--knn-k", "3", "--folds", "3", "--out", str(conf)]) == 0
    text = capsys.readouterr().out
    assert f"confusion matrix -> {conf}" in text
    counts = read_confusion_csv(str(conf))
    assert counts.total == 2 * REPS
    assert accuracy(counts) >= 0.9


def test_verify_pair_outputs(pipe, tmp_path, capsys):
    roc = tmp_path / "roc.csv"
    svg = tmp_path / "roc.svg"
    assert main(["verify", "--features", str(pipe.feat1), "--device-a", "alpha_1",
                 "--device-b", "beta_1", "--folds", "4",
                 "--out", str(roc), "--svg", str(svg)]) == 0
    text = capsys.readouterr().out
    match = re.search(r"EER (\d\.\d{4}) \((\d+) genuine, (\d+) impostor scores\)", text)
    assert match is not None
    assert float(match.group(1)) <= 0.2
    assert int(match.group(2)) == REPS and int(match.group(3)) == REPS
    lines = roc.read_text().strip().splitlines()
    assert lines[0] == "threshold,fpr,fnr"
    assert len(lines) > 2
    assert svg.read_text().startswith("<svg")


def test_select_sfs_writes_log(pipe, tmp_path, capsys):
    log_path = tmp_path / "log.csv"
    assert main(["select", "--features", str(pipe.feat1), "--method", "sfs",
                 "--folds", "3", "--out", str(log_path)]) == 0
    text = capsys.readouterr().out
    assert re.search(r"sfs: features \[\d+(,\d+)*\] accuracy \d\.\d{4} "
                     r"\(\d+ evaluations logged\)", text)
    lines = log_path.read_text().strip().splitlines()
    assert lines[0] == "subset,accuracy"
    assert len(lines) >= 2


def test_tune_full_grid(pipe, tmp_path, capsys):
    surface = tmp_path / "surface.csv"
    assert main(["tune", "--features", str(pipe.feat1), "--folds", "3",
                 "--out", str(surface)]) == 0
    text = capsys.readouterr().out
    match = re.search(r"best gamma \S+ C \S+ accuracy (\d\.\d{4})", text)
    assert match is not None
    assert float(match.group(1)) >= 0.9
    lines = surface.read_text().strip().splitlines()
    assert lines[0] == "gamma,c,accuracy"
    assert len(lines) == 1 + 17 * 37


def test_stability_two_days(pipe, tmp_path, capsys):
    out = tmp_path / "stability.csv"
    assert main(["stability", "--day", f"mon={pipe.feat1}", "--day", f"tue={pipe.feat2}",
                 "--pairs", "alpha_1:beta_1", "--folds", "4", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "mon: alpha_1 vs beta_1  EER" in text
    assert "tue: alpha_1 vs beta_1  EER" in text
    assert "alpha_1: mon vs tue  EER" in text
    assert "mean same-device cross-day EER 0." in text
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "kind,key,first,second,eer"
    # one cross-device pair per day plus one day pair per device
    assert len(lines) == 1 + 2 + 2
    kinds = {line.split(",")[0] for line in lines[1:]}
    assert kinds == {"cross_device", "cross_day"}


def test_noise_sweep_cli(pipe, tmp_path, capsys):
    out = tmp_path / "sweep.csv"
    assert main(["noise-sweep", "--segments", str(pipe.seg1), "--device-a", "alpha_1",
                 "--device-b", "beta_1", "--snrs", "30,0", "--reps", "2",
                 "--folds", "4", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "SNR 30 dB: mean EER" in text
    assert "SNR 0 dB: mean EER" in text
    assert "n 2)" in text
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "snr_db,mean_eer,stderr"
    assert len(lines) == 3


def test_waveform_compare_cli(pipe, tmp_path, capsys):
    out = tmp_path / "compare.csv"
    assert main(["waveform-compare", "--park", str(pipe.park), "--waveforms", "A,B",
                 "--reps", "6", "--folds", "3", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "waveform A: mean inter-model EER" in text
    assert "waveform B: mean inter-model EER" in text
    # one device per model means there is no intra-model pair to average
    assert "mean intra-model EER nan" in text
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "waveform_id,mean_inter_eer,mean_intra_eer"
    assert len(lines) == 3


def test_export_stimulus_wav_and_spec(tmp_path, capsys):
    wav_path = tmp_path / "stim.wav"
    spec_path = tmp_path / "stim.spec"
    assert main(["export-stimulus", "--waveform", "A", "--reps", "2",
                 "--pcm-rate", "4000", "--out", str(wav_path),
                 "--spec-out", str(spec_path)]) == 0
    text = capsys.readouterr().out
    assert "waveform A: 55200 samples at 4000 Hz (13.8 s)" in text
    with wave.open(str(wav_path), "rb") as wav:
        assert wav.getnchannels() == 1
        assert wav.getsampwidth() == 2
        assert wav.getframerate() == 4000
        assert wav.getnframes() == 55200
    spec = load_waveform_spec(str(spec_path))
    assert spec.id == "A"
    assert spec.burst_repetitions == 2


# ---------------------------------------------------------------------------
# error handling


def _stderr_payload(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


def test_report_without_inputs_is_usage_error(capsys):
    assert main(["report"]) == 2
    payload = _stderr_payload(capsys)
    assert payload["error"] == "UsageError"
    assert payload["module"] == "cli"
    assert "report needs --features or --confusion" in payload["message"]


def test_bad_mask_is_usage_error(pipe, tmp_path, capsys):
    rc = main(["train", "--features", str(pipe.feat1), "--mask", "1,x",
               "--out", str(tmp_path / "m.model")])
    assert rc == 2
    payload = _stderr_payload(capsys)
    assert payload["error"] == "UsageError"
    assert "--mask" in payload["message"]


def test_bad_snr_list_is_usage_error(pipe, capsys):
    rc = main(["noise-sweep", "--segments", str(pipe.seg1), "--device-a", "alpha_1",
               "--device-b", "beta_1", "--snrs", "30;0", "--reps", "1"])
    assert rc == 2
    assert _stderr_payload(capsys)["error"] == "UsageError"


def test_bad_day_token_is_usage_error(pipe, capsys):
    rc = main(["stability", "--day", "monday.csv"])
    assert rc == 2
    payload = _stderr_payload(capsys)
    assert "--day expects" in payload["message"]


def test_bad_pairs_token_is_usage_error(pipe, capsys):
    rc = main(["stability", "--day", f"mon={pipe.feat1}", "--pairs", "ab"])
    assert rc == 2
    payload = _stderr_payload(capsys)
    assert "--pairs expects" in payload["message"]


def test_missing_model_is_domain_error(pipe, capsys):
    rc = main(["classify", "--model", str(pipe.base / "nope.model"),
               "--features", str(pipe.feat1)])
    assert rc == 1
    payload = _stderr_payload(capsys)
    assert payload["error"] == "IoError"
    assert payload["module"] == "cli"


def test_unknown_device_is_domain_error(pipe, capsys):
    rc = main(["verify", "--features", str(pipe.feat1), "--device-a", "ghost",
               "--device-b", "beta_1"])
    assert rc == 1
    payload = _stderr_payload(capsys)
    assert payload["error"] == "LabelMismatch"
    assert payload["module"] == "evaluation"


def test_missing_subcommand_exits_two():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
