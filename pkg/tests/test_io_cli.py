import hashlib
import json
import os

import numpy as np
import pytest

import jsonschema

from shimsense import (IngestionError, PcpConfig, PipelineConfig,
                       ShimSegmentation, SynthConfig, generate, loo_crossval,
                       predict, train)
from shimsense import io as sio
from shimsense.cli import main


def schema(name):
    import importlib.resources as res
    path = res.files("shimsense") / "schemas" / f"{name}.schema.json"
    return json.loads(path.read_text())


def file_hashes(root):
    out = {}
    for dirpath, _, files in os.walk(root):
        for f in sorted(files):
            p = os.path.join(dirpath, f)
            rel = os.path.relpath(p, root)
            out[rel] = hashlib.sha256(open(p, "rb").read()).hexdigest()
    return out


def small_dataset(seed=0, **kw):
    params = dict(n_locations=60, n_units=8, true_rank=2, noise_sigma=1e-4,
                  outlier_fraction=0.0)
    params.update(kw)
    return generate(SynthConfig(seed=seed, **params))


# ---------------------------------------------------------------------------
# CSV round trips

def test_gap_csv_roundtrip_bit_exact(tmp_path):
    ds, _ = small_dataset(seed=1)
    path = tmp_path / "gaps.csv"
    sio.write_gap_csv(path, ds)
    back = sio.read_gap_csv(path)
    assert np.array_equal(back.values, ds.values)
    assert back.location_ids == ds.location_ids
    assert back.unit_ids == ds.unit_ids


def test_gap_csv_roundtrip_adversarial_doubles(tmp_path):
    rng = np.random.default_rng(2)
    values = np.concatenate([
        rng.standard_normal(20) * 10.0 ** rng.integers(-15, 15, 20),
        np.array([0.0, -0.0, 1e-300, -1e300, np.pi, 2.0 / 3.0]),
    ]).reshape(13, 2)
    from shimsense.dataset import GapDataset
    ds = GapDataset(values=values,
                    location_ids=tuple(f"p{i}" for i in range(13)),
                    unit_ids=("a", "b"))
    path = tmp_path / "gaps.csv"
    sio.write_gap_csv(path, ds)
    assert np.array_equal(sio.read_gap_csv(path).values, values)


def test_gap_csv_schema_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("wrong,header\n1,2\n")
    with pytest.raises(IngestionError):
        sio.read_gap_csv(bad)
    ragged = tmp_path / "ragged.csv"
    ragged.write_text("location_id,u1\np1,1.0,9\n")
    with pytest.raises(IngestionError):
        sio.read_gap_csv(ragged)
    nonnumeric = tmp_path / "noway.csv"
    nonnumeric.write_text("location_id,u1\np1,abc\n")
    with pytest.raises(IngestionError):
        sio.read_gap_csv(nonnumeric)


def test_field_csv_roundtrip(tmp_path):
    path = tmp_path / "meas.csv"
    sio.write_field_csv(path, ("a", "b"), (0.125, -3.5e-9))
    assert sio.read_field_csv(path) == {"a": 0.125, "b": -3.5e-9}
    dup = tmp_path / "dup.csv"
    dup.write_text("location_id,gap\na,1\na,2\n")
    with pytest.raises(IngestionError):
        sio.read_field_csv(dup)


# ---------------------------------------------------------------------------
# model save/load

def test_model_directory_roundtrip(tmp_path):
    ds, _ = small_dataset(seed=3)
    seg = ShimSegmentation({"low": np.arange(0, 25),
                            "high": np.arange(25, 60)})
    model = train(ds, seg, PipelineConfig(pcp=PcpConfig(tol=1e-5)))
    model_dir = tmp_path / "model"
    sio.save_model(model, model_dir)
    loaded = sio.load_model(model_dir)
    assert set(loaded.regions) == set(model.regions)
    for name in model.regions:
        a, b = model.regions[name], loaded.regions[name]
        assert np.array_equal(a.basis.modes, b.basis.modes)
        assert np.array_equal(a.basis.mean, b.basis.mean)
        assert np.array_equal(a.basis.singular_values, b.basis.singular_values)
        assert np.array_equal(a.sensors.indices, b.sensors.indices)
        assert np.array_equal(a.region_indices, b.region_indices)
    # loaded model predicts identically
    x = ds.values[:, 0]
    measurements = {loc: x[i] for i, loc in enumerate(ds.location_ids)}
    p1 = predict(model, measurements)
    p2 = predict(loaded, measurements)
    assert np.array_equal(np.nan_to_num(p1.values), np.nan_to_num(p2.values))


def test_model_tampering_detected(tmp_path):
    ds, _ = small_dataset(seed=4)
    model = train(ds, cfg=PipelineConfig(pcp=PcpConfig(tol=1e-5)))
    model_dir = tmp_path / "model"
    sio.save_model(model, model_dir)
    victim = next((tmp_path / "model" / "regions").glob("*/basis.csv"))
    text = victim.read_text()
    victim.write_text(text.replace(text.splitlines()[1].split(",")[1],
                                   "0.123456", 1))
    with pytest.raises(IngestionError):
        sio.load_model(model_dir)


def test_model_meta_validates_against_schema(tmp_path):
    ds, _ = small_dataset(seed=5)
    model = train(ds, cfg=PipelineConfig(pcp=PcpConfig(tol=1e-5)))
    sio.save_model(model, tmp_path / "model")
    meta = sio.read_json(tmp_path / "model" / "meta.json")
    jsonschema.validate(meta, schema("model_meta"))
    for entry in meta["regions"]:
        sensors = sio.read_json(tmp_path / "model" / "regions"
                                / entry["dir"] / "sensors.json")
        jsonschema.validate(sensors, schema("sensors"))


# ---------------------------------------------------------------------------
# report round trip + schema

def test_report_json_roundtrip_and_schema(tmp_path):
    ds, truth = small_dataset(seed=6, outlier_fraction=0.02,
                              outlier_magnitude=0.05)
    report = loo_crossval(ds, cfg=PipelineConfig(seed=1,
                                                 pcp=PcpConfig(tol=1e-5)),
                          truth=truth.clean)
    path = tmp_path / "report.json"
    sio.write_report_json(path, report)
    payload = sio.read_json(path)
    jsonschema.validate(payload, schema("crossval_report"))
    back = sio.read_report_json(path)
    assert back.tolerance == report.tolerance
    region, region_back = report.regions["all"], back.regions["all"]
    assert (region.optimal.percent_within_tol
            == region_back.optimal.percent_within_tol)
    for unit, err in region.optimal.fold_errors.items():
        assert np.array_equal(err, region_back.optimal.fold_errors[unit])


def test_segmentation_json_roundtrip(tmp_path):
    ds, _ = small_dataset(seed=7)
    seg = ShimSegmentation({"edge": np.array([0, 1, 2]),
                            "core": np.arange(3, 60)})
    path = tmp_path / "seg.json"
    sio.write_segmentation_json(path, seg, ds)
    payload = sio.read_json(path)
    jsonschema.validate(payload, schema("segmentation"))
    back = sio.read_segmentation_json(path, ds)
    for name in seg.regions:
        assert np.array_equal(back.regions[name], seg.regions[name])


# ---------------------------------------------------------------------------
# CLI

SMALL = ["--n", "60", "--m", "8", "--rank", "2", "--noise-sigma", "1e-4",
         "--outlier-fraction", "0.02", "--seed", "5"]
FAST_PCP = ["--pcp-tol", "1e-5"]


def test_cli_synth_writes_expected_files(tmp_path, capsys):
    out = tmp_path / "data"
    assert main(["synth", "--out", str(out)] + SMALL) == 0
    for name in ("gaps.csv", "truth_low_rank.csv", "truth_sparse.csv",
                 "truth_clean.csv", "truth_modes.csv", "truth_mean.csv",
                 "truth_meta.json"):
        assert (out / name).exists()
    meta = sio.read_json(out / "truth_meta.json")
    jsonschema.validate(meta, schema("synth_truth_meta"))
    assert meta["outlier_count"] == round(0.02 * 60 * 8)


def test_cli_synth_deterministic_across_runs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--out", str(a)] + SMALL) == 0
    assert main(["synth", "--out", str(b)] + SMALL) == 0
    assert file_hashes(a) == file_hashes(b)


def test_cli_synth_rejects_bad_rank(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path / "x"), "--n", "20",
                 "--m", "4", "--rank", "10"])
    assert code == 2
    assert "true_rank" in capsys.readouterr().err


def test_cli_unknown_flag_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["synth", "--out", str(tmp_path / "x"), "--frobnicate"])
    assert exc.value.code == 2


def test_cli_decompose_outputs_and_diagnostics(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data)] + SMALL)
    out = tmp_path / "dec"
    assert main(["decompose", "--input", str(data / "gaps.csv"),
                 "--out", str(out)] + FAST_PCP) == 0
    diag = sio.read_json(out / "diagnostics.json")
    jsonschema.validate(diag, schema("decomposition"))
    assert diag["converged"]
    ids, units, low = sio.read_matrix_csv(out / "L.csv")
    _, _, sparse = sio.read_matrix_csv(out / "S.csv")
    gaps = sio.read_gap_csv(data / "gaps.csv")
    assert np.allclose(low + sparse, gaps.values, atol=1e-4)
    assert diag["iterations"] == len(diag["residual_history"])
    assert diag["mu_schedule"][0] > 0


def test_cli_decompose_nonconvergence_still_succeeds(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data)] + SMALL)
    out = tmp_path / "dec"
    code = main(["decompose", "--input", str(data / "gaps.csv"),
                 "--out", str(out), "--max-iter", "2"])
    assert code == 0
    assert sio.read_json(out / "diagnostics.json")["converged"] is False


def test_cli_missing_input_exits_three(tmp_path):
    assert main(["decompose", "--input", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "o")]) == 3


def test_cli_train_predict_roundtrip(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data)] + SMALL)
    model_dir = tmp_path / "model"
    assert main(["train", "--input", str(data / "gaps.csv"),
                 "--out", str(model_dir)] + FAST_PCP) == 0
    model = sio.load_model(model_dir)
    sensor_ids = model.sensor_location_ids()["all"]

    gaps = sio.read_gap_csv(data / "gaps.csv")
    x = gaps.values[:, 3]
    index = gaps.location_index()
    meas = tmp_path / "meas.csv"
    sio.write_field_csv(meas, sensor_ids,
                        [x[index[loc]] for loc in sensor_ids])
    pred_path = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(model_dir),
                 "--measurements", str(meas), "--out", str(pred_path)]) == 0
    predicted = sio.read_field_csv(pred_path)
    assert len(predicted) == gaps.n_locations
    measurements = {loc: x[index[loc]] for loc in sensor_ids}
    expected = predict(model, measurements)
    got = np.array([predicted[loc] for loc in gaps.location_ids])
    assert np.array_equal(got, expected.values)


def test_cli_predict_missing_sensor_exits_five(tmp_path, capsys):
    data = tmp_path / "data"
    main(["synth", "--out", str(data)] + SMALL)
    model_dir = tmp_path / "model"
    main(["train", "--input", str(data / "gaps.csv"),
          "--out", str(model_dir)] + FAST_PCP)
    model = sio.load_model(model_dir)
    sensor_ids = model.sensor_location_ids()["all"]
    meas = tmp_path / "meas.csv"
    sio.write_field_csv(meas, sensor_ids[1:], [0.0] * (len(sensor_ids) - 1))
    code = main(["predict", "--model", str(model_dir),
                 "--measurements", str(meas),
                 "--out", str(tmp_path / "pred.csv")])
    assert code == 5
    err = capsys.readouterr().err
    assert str(int(model.regions["all"].global_sensor_indices[0])) in err


def test_cli_crossval_and_report(tmp_path, capsys):
    data = tmp_path / "data"
    main(["synth", "--out", str(data)] + SMALL)
    report_path = tmp_path / "report.json"
    hist_dir = tmp_path / "hist"
    code = main(["crossval", "--input", str(data / "gaps.csv"),
                 "--truth", str(data / "truth_clean.csv"),
                 "--out", str(report_path), "--seed", "9",
                 "--histograms", str(hist_dir)] + FAST_PCP)
    assert code == 0
    payload = sio.read_json(report_path)
    jsonschema.validate(payload, schema("crossval_report"))
    assert list(hist_dir.glob("histogram_*.csv"))

    # text table to stdout
    assert main(["report", "--input", str(report_path)]) == 0
    table = capsys.readouterr().out
    assert "percent_accurate" in table and "total_points" in table

    # json + csv summaries
    summary_json = tmp_path / "summary.json"
    assert main(["report", "--input", str(report_path), "--out",
                 str(summary_json), "--format", "json"]) == 0
    payload = sio.read_json(summary_json)
    jsonschema.validate(payload, schema("summary"))
    assert payload["rows"][0]["total_points"] == 60

    summary_csv = tmp_path / "summary.csv"
    assert main(["report", "--input", str(report_path), "--out",
                 str(summary_csv), "--format", "csv"]) == 0
    header = summary_csv.read_text().splitlines()[0]
    assert header == "region,percent_accurate,optimal_sensors_avg,total_points"


def test_cli_crossval_constant_dataset_is_perfect(tmp_path):
    from shimsense.dataset import GapDataset
    values = np.tile(np.linspace(0.01, 0.09, 30)[:, None], (1, 4))
    ds = GapDataset(values=values,
                    location_ids=tuple(f"p{i:02d}" for i in range(30)),
                    unit_ids=("a", "b", "c", "d"))
    gaps = tmp_path / "gaps.csv"
    sio.write_gap_csv(gaps, ds)
    report_path = tmp_path / "report.json"
    assert main(["crossval", "--input", str(gaps),
                 "--out", str(report_path)]) == 0
    payload = sio.read_json(report_path)
    assert payload["regions"]["all"]["optimal"]["percent_within_tol"] == 100.0


def test_cli_crossval_deterministic(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data)] + SMALL)
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    args = ["crossval", "--input", str(data / "gaps.csv"),
            "--seed", "3"] + FAST_PCP
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert (hashlib.sha256(out1.read_bytes()).hexdigest()
            == hashlib.sha256(out2.read_bytes()).hexdigest())


def test_cli_env_seed_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("SHIMSENSE_SEED", "5")
    a = tmp_path / "a"
    assert main(["synth", "--out", str(a), "--n", "60", "--m", "8",
                 "--rank", "2", "--noise-sigma", "1e-4",
                 "--outlier-fraction", "0.02"]) == 0
    monkeypatch.delenv("SHIMSENSE_SEED")
    b = tmp_path / "b"
    assert main(["synth", "--out", str(b)] + SMALL) == 0
    assert file_hashes(a) == file_hashes(b)


def test_cli_train_segmentation(tmp_path):
    data = tmp_path / "data"
    main(["synth", "--out", str(data)] + SMALL)
    gaps = sio.read_gap_csv(data / "gaps.csv")
    seg_path = tmp_path / "seg.json"
    seg = ShimSegmentation({"front": np.arange(0, 30),
                            "back": np.arange(30, 60)})
    sio.write_segmentation_json(seg_path, seg, gaps)
    model_dir = tmp_path / "model"
    assert main(["train", "--input", str(data / "gaps.csv"),
                 "--segmentation", str(seg_path),
                 "--out", str(model_dir)] + FAST_PCP) == 0
    model = sio.load_model(model_dir)
    assert set(model.regions) == {"front", "back"}
