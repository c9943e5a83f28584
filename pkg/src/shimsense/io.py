"""Stable on-disk formats: gap CSVs, model directories, and report JSON.

All numeric CSV values are serialized with 17 significant digits so a
write/read round trip reproduces every double bit for bit.  JSON is written
with sorted keys and a trailing newline; every file is written atomically
(temp file + rename) so interrupted runs never leave partial outputs.
"""

import csv
import hashlib
import io as _io
import json
import os
import tempfile

import numpy as np

from .dataset import GapDataset, ShimSegmentation
from .errors import IngestionError, ParameterError
from .pipeline import (ArmStats, CrossValReport, RegionModel, RegionReport,
                       ShimModel)
from .rpca import FeatureBasis
from .sensing import SensorSet

MODEL_FORMAT = "shimsense-model/1"
DECOMPOSITION_FORMAT = "shimsense-decomposition/1"
REPORT_FORMAT = "shimsense-crossval/1"
SUMMARY_FORMAT = "shimsense-summary/1"
TRUTH_FORMAT = "shimsense-synth-truth/1"


def format_float(v):
    """17-significant-digit decimal form; round-trips any finite double."""
    return f"{float(v):.17g}"


def atomic_write_text(path, text):
    """Write text to ``path`` via a temp file in the same directory."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload):
    atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2,
                                       allow_nan=False) + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as handle:
        return json.load(handle)


def _csv_text(header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _read_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        raise IngestionError(f"{path}: empty CSV")
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# gap matrices (also used for decomposition factors and synthetic truth)

def write_gap_csv(path, dataset):
    """Gap matrix CSV: header ``location_id,<unit ids...>``, row per location."""
    rows = ((loc, *(format_float(v) for v in dataset.values[i]))
            for i, loc in enumerate(dataset.location_ids))
    atomic_write_text(path, _csv_text(("location_id", *dataset.unit_ids), rows))


def read_gap_csv(path, units_label="units", gap_unit="inch"):
    header, rows = _read_csv(path)
    if len(header) < 2 or header[0] != "location_id":
        raise IngestionError(
            f"{path}: expected header 'location_id,<unit ids...>'")
    unit_ids = tuple(header[1:])
    location_ids = []
    values = np.empty((len(rows), len(unit_ids)), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise IngestionError(
                f"{path}: row {i + 2} has {len(row)} fields, expected "
                f"{len(header)}")
        location_ids.append(row[0])
        try:
            values[i] = [float(v) for v in row[1:]]
        except ValueError as exc:
            raise IngestionError(f"{path}: row {i + 2}: {exc}") from None
    try:
        return GapDataset(values=values, location_ids=tuple(location_ids),
                          unit_ids=unit_ids, units_label=units_label,
                          gap_unit=gap_unit)
    except IngestionError as exc:
        raise IngestionError(f"{path}: {exc}") from None


def write_matrix_csv(path, values, location_ids, column_ids):
    rows = ((loc, *(format_float(v) for v in values[i]))
            for i, loc in enumerate(location_ids))
    atomic_write_text(path, _csv_text(("location_id", *column_ids), rows))


def read_matrix_csv(path):
    header, rows = _read_csv(path)
    if not header or header[0] != "location_id":
        raise IngestionError(f"{path}: expected a 'location_id' first column")
    ids = []
    values = np.empty((len(rows), len(header) - 1), dtype=np.float64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {i + 2} is malformed")
        ids.append(row[0])
        values[i] = [float(v) for v in row[1:]]
    return tuple(ids), tuple(header[1:]), values


# ---------------------------------------------------------------------------
# single-column fields: means, measurements, predictions

def write_field_csv(path, location_ids, values, column="gap"):
    rows = ((loc, format_float(v)) for loc, v in zip(location_ids, values))
    atomic_write_text(path, _csv_text(("location_id", column), rows))


def read_field_csv(path):
    """Read a two-column field CSV into an ordered ``{location_id: value}``."""
    header, rows = _read_csv(path)
    if len(header) != 2 or header[0] != "location_id":
        raise IngestionError(
            f"{path}: expected header 'location_id,<column>'")
    out = {}
    for i, row in enumerate(rows):
        if len(row) != 2:
            raise IngestionError(f"{path}: row {i + 2} is malformed")
        if row[0] in out:
            raise IngestionError(f"{path}: duplicate location id {row[0]!r}")
        out[row[0]] = float(row[1])
    return out


def write_prediction_csv(path, prediction, location_ids):
    """Predictions for covered locations only; uncovered rows are omitted."""
    covered = prediction.covered
    rows = ((loc, format_float(prediction.values[i]))
            for i, loc in enumerate(location_ids) if covered[i])
    atomic_write_text(path, _csv_text(("location_id", "prediction"), rows))


# ---------------------------------------------------------------------------
# segmentation manifests

def write_segmentation_json(path, segmentation, dataset):
    write_json(path, segmentation.to_location_ids(dataset))


def read_segmentation_json(path, dataset):
    payload = read_json(path)
    if not isinstance(payload, dict) or not payload:
        raise IngestionError(
            f"{path}: expected an object mapping region name -> location ids")
    for name, ids in payload.items():
        if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
            raise IngestionError(
                f"{path}: region {name!r} must map to a list of location ids")
    return ShimSegmentation.from_location_ids(payload, dataset)


# ---------------------------------------------------------------------------
# model directories

def _region_dirname(index, name):
    safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in name)
    return f"{index:02d}_{safe}" if safe else f"{index:02d}_region"


def _basis_csv_text(location_ids, modes):
    header = ("location_id", *(f"mode_{j + 1}" for j in range(modes.shape[1])))
    rows = ((loc, *(format_float(v) for v in modes[i]))
            for i, loc in enumerate(location_ids))
    return _csv_text(header, rows)


def save_model(model, path):
    """Write a model directory: meta.json plus per-region basis/mean/sensors.

    meta.json records the config snapshot, the full location vocabulary, and
    a SHA-256 content hash over the region files for integrity checking.
    """
    os.makedirs(path, exist_ok=True)
    region_entries = []
    hasher = hashlib.sha256()
    for index, (name, region) in enumerate(model.regions.items()):
        dirname = _region_dirname(index, name)
        region_dir = os.path.join(path, "regions", dirname)
        os.makedirs(region_dir, exist_ok=True)
        local_ids = [model.location_ids[g] for g in region.region_indices]

        basis_text = _basis_csv_text(local_ids, region.basis.modes)
        atomic_write_text(os.path.join(region_dir, "basis.csv"), basis_text)
        hasher.update(basis_text.encode())

        if region.basis.mean is not None:
            mean_text = _csv_text(
                ("location_id", "mean"),
                ((loc, format_float(v))
                 for loc, v in zip(local_ids, region.basis.mean)))
            atomic_write_text(os.path.join(region_dir, "mean.csv"), mean_text)
            hasher.update(mean_text.encode())

        sensors_payload = {
            "local_indices": [int(i) for i in region.sensors.indices],
            "location_ids": [local_ids[i] for i in region.sensors.indices],
            "scores": None if region.sensors.scores is None
            else [float(s) for s in region.sensors.scores],
            "rank_deficient": bool(region.sensors.rank_deficient),
        }
        sensors_text = json.dumps(sensors_payload, sort_keys=True,
                                  indent=2) + "\n"
        atomic_write_text(os.path.join(region_dir, "sensors.json"),
                          sensors_text)
        hasher.update(sensors_text.encode())

        region_entries.append({
            "name": name,
            "dir": dirname,
            "rank": int(region.basis.rank),
            "singular_values": [float(s)
                                for s in region.basis.singular_values],
            "location_ids": local_ids,
            "training_units": list(region.training_unit_ids),
            "diagnostics": {k: (bool(v) if isinstance(v, (bool, np.bool_))
                                else v)
                            for k, v in region.diagnostics.items()},
        })
    meta = {
        "format": MODEL_FORMAT,
        "gap_unit": model.gap_unit,
        "config": dict(model.config),
        "location_ids": list(model.location_ids),
        "regions": region_entries,
        "content_hash": hasher.hexdigest(),
    }
    write_json(os.path.join(path, "meta.json"), meta)


def load_model(path):
    """Read a model directory back.

    The content hash from meta.json is verified over the raw region files
    before anything is parsed, so tampering is reported as such rather than
    as a downstream validation failure.
    """
    meta = read_json(os.path.join(path, "meta.json"))
    if meta.get("format") != MODEL_FORMAT:
        raise IngestionError(f"{path}: not a shimsense model directory")
    location_ids = tuple(meta["location_ids"])
    index_of = {loc: i for i, loc in enumerate(location_ids)}

    texts = []
    hasher = hashlib.sha256()
    for entry in meta["regions"]:
        region_dir = os.path.join(path, "regions", entry["dir"])
        basis_path = os.path.join(region_dir, "basis.csv")
        with open(basis_path, encoding="utf-8", newline="") as handle:
            basis_text = handle.read()
        hasher.update(basis_text.encode())
        mean_text = None
        mean_path = os.path.join(region_dir, "mean.csv")
        if os.path.exists(mean_path):
            with open(mean_path, encoding="utf-8", newline="") as handle:
                mean_text = handle.read()
            hasher.update(mean_text.encode())
        with open(os.path.join(region_dir, "sensors.json"),
                  encoding="utf-8") as handle:
            sensors_text = handle.read()
        hasher.update(sensors_text.encode())
        texts.append((entry, region_dir, basis_text, mean_text, sensors_text))
    if hasher.hexdigest() != meta.get("content_hash"):
        raise IngestionError(
            f"{path}: content hash mismatch; model files were modified")

    regions = {}
    for entry, region_dir, basis_text, mean_text, sensors_text in texts:
        basis_path = os.path.join(region_dir, "basis.csv")
        ids, _, modes = _parse_matrix_text(basis_text, basis_path)
        mean = None
        if mean_text is not None:
            mean_ids, _, mean_col = _parse_matrix_text(
                mean_text, os.path.join(region_dir, "mean.csv"))
            if mean_ids != ids:
                raise IngestionError(
                    f"{region_dir}: mean.csv ids do not match basis.csv")
            mean = mean_col[:, 0]
        sensors_payload = json.loads(sensors_text)
        basis = FeatureBasis(
            modes=modes,
            singular_values=np.asarray(entry["singular_values"],
                                       dtype=np.float64),
            rank=int(entry["rank"]), mean=mean)
        sensors = SensorSet(
            indices=np.asarray(sensors_payload["local_indices"],
                               dtype=np.int64),
            scores=None if sensors_payload["scores"] is None
            else np.asarray(sensors_payload["scores"], dtype=np.float64),
            rank_deficient=bool(sensors_payload["rank_deficient"]))
        try:
            region_indices = np.array([index_of[i] for i in ids],
                                      dtype=np.int64)
        except KeyError as exc:
            raise IngestionError(
                f"{region_dir}: unknown location id {exc.args[0]!r}") from None
        regions[entry["name"]] = RegionModel(
            name=entry["name"], region_indices=region_indices, basis=basis,
            sensors=sensors,
            training_unit_ids=tuple(entry["training_units"]),
            diagnostics=dict(entry.get("diagnostics", {})))
    return ShimModel(regions=regions, location_ids=location_ids,
                     gap_unit=meta.get("gap_unit", "inch"),
                     config=meta["config"])


def _parse_matrix_text(text, label):
    rows = list(csv.reader(_io.StringIO(text)))
    if not rows:
        raise IngestionError(f"{label}: empty CSV")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "location_id":
        raise IngestionError(f"{label}: expected a 'location_id' first column")
    ids = []
    values = np.empty((len(body), len(header) - 1), dtype=np.float64)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise IngestionError(f"{label}: row {i + 2} is malformed")
        ids.append(row[0])
        values[i] = [float(v) for v in row[1:]]
    return tuple(ids), tuple(header[1:]), values


# ---------------------------------------------------------------------------
# cross-validation reports

def _arm_to_dict(arm):
    return {
        "percent_within_tol": arm.percent_within_tol,
        "percent_within_tol_fold_mean": arm.percent_within_tol_fold_mean,
        "median_abs_error": arm.median_abs_error,
        "fold_percents": dict(arm.fold_percents),
        "fold_errors": {unit: [float(e) for e in err]
                        for unit, err in arm.fold_errors.items()},
        "histogram_counts": list(arm.histogram_counts),
    }


def _arm_from_dict(data):
    return ArmStats(
        percent_within_tol=float(data["percent_within_tol"]),
        percent_within_tol_fold_mean=float(
            data["percent_within_tol_fold_mean"]),
        median_abs_error=float(data["median_abs_error"]),
        fold_percents={u: float(p) for u, p in data["fold_percents"].items()},
        fold_errors={u: np.asarray(e, dtype=np.float64)
                     for u, e in data["fold_errors"].items()},
        histogram_counts=tuple(int(c) for c in data["histogram_counts"]))


def report_to_dict(report):
    return {
        "format": REPORT_FORMAT,
        "tolerance": report.tolerance,
        "gap_unit": report.gap_unit,
        "master_seed": report.master_seed,
        "n_units": report.n_units,
        "unit_ids": list(report.unit_ids),
        "failed_folds": list(report.failed_folds),
        "histogram_edges": list(report.histogram_edges),
        "regions": {
            name: {
                "total_points": region.total_points,
                "avg_sensor_count": region.avg_sensor_count,
                "fold_sensor_counts": dict(region.fold_sensor_counts),
                "optimal": _arm_to_dict(region.optimal),
                "baseline": _arm_to_dict(region.baseline),
            } for name, region in report.regions.items()},
    }


def report_from_dict(data):
    if data.get("format") != REPORT_FORMAT:
        raise IngestionError("not a shimsense cross-validation report")
    regions = {}
    for name, rd in data["regions"].items():
        regions[name] = RegionReport(
            name=name,
            total_points=int(rd["total_points"]),
            avg_sensor_count=float(rd["avg_sensor_count"]),
            fold_sensor_counts={u: int(c)
                                for u, c in rd["fold_sensor_counts"].items()},
            optimal=_arm_from_dict(rd["optimal"]),
            baseline=_arm_from_dict(rd["baseline"]))
    return CrossValReport(
        regions=regions,
        tolerance=float(data["tolerance"]),
        master_seed=int(data["master_seed"]),
        n_units=int(data["n_units"]),
        unit_ids=tuple(data["unit_ids"]),
        failed_folds=tuple(data["failed_folds"]),
        gap_unit=data.get("gap_unit", "inch"),
        histogram_edges=tuple(float(e) for e in data["histogram_edges"]))


def write_report_json(path, report):
    write_json(path, report_to_dict(report))


def read_report_json(path):
    return report_from_dict(read_json(path))


def write_histogram_csv(path, report, region_name):
    """Plot-ready histogram table: bin edges with both arms' counts."""
    region = report.regions[region_name]
    edges = report.histogram_edges
    rows = ((format_float(edges[i]), format_float(edges[i + 1]),
             region.optimal.histogram_counts[i],
             region.baseline.histogram_counts[i])
            for i in range(len(edges) - 1))
    atomic_write_text(path, _csv_text(
        ("log10_error_low", "log10_error_high", "optimal_count",
         "random_count"), rows))


def summary_rows(report):
    """Per-region summary with the headline accuracy columns."""
    return [{
        "region": name,
        "percent_accurate": region.optimal.percent_within_tol,
        "optimal_sensors_avg": region.avg_sensor_count,
        "total_points": region.total_points,
    } for name, region in report.regions.items()]


def write_summary(path, report, fmt):
    rows = summary_rows(report)
    if fmt == "json":
        write_json(path, {"format": SUMMARY_FORMAT, "tolerance":
                          report.tolerance, "rows": rows})
    elif fmt == "csv":
        body = ((r["region"], format_float(r["percent_accurate"]),
                 format_float(r["optimal_sensors_avg"]), r["total_points"])
                for r in rows)
        atomic_write_text(path, _csv_text(
            ("region", "percent_accurate", "optimal_sensors_avg",
             "total_points"), body))
    else:
        raise ParameterError(f"unknown summary format {fmt!r}")


def render_summary_table(report):
    """Fixed-width text table of the summary rows."""
    rows = summary_rows(report)
    headers = ("region", "percent_accurate", "optimal_sensors_avg",
               "total_points")
    cells = [[r["region"], f"{r['percent_accurate']:.2f}",
              f"{r['optimal_sensors_avg']:.1f}", str(r["total_points"])]
             for r in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    lines.append("  ".join("-" * w for w in widths))
    for c in cells:
        lines.append("  ".join(c[i].ljust(widths[i]) for i in range(len(c))))
    return "\n".join(lines) + "\n"
