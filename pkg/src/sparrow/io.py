"""JSON serialization of measurement batches, configs and reports.

Complex entries are stored as two-element [re, im] arrays; every file
carries a ``schema_version`` field.  Validation rejects unknown keys so
configuration typos fail loudly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict

import numpy as np

from . import bench, model
from .errors import ValidationError

SCHEMA_VERSION = 1


def complex_to_pairs(a: np.ndarray):
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def pairs_to_complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.shape[-1] != 2:
        raise ValidationError("complex entries must be [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def _require_keys(obj: dict, required: set[str], optional: set[str], what: str) -> None:
    keys = set(obj)
    missing = required - keys
    unknown = keys - required - optional
    problems = []
    if missing:
        problems.append(f"missing keys: {sorted(missing)}")
    if unknown:
        problems.append(f"unknown keys: {sorted(unknown)}")
    if problems:
        raise ValidationError(f"{what}: " + "; ".join(problems))


def save_batch(
    path,
    batch: model.MmvBatch,
    geometry: model.ArrayGeometry,
    scene: model.SourceScene | None = None,
) -> None:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "kind": "mmv_batch",
        "geometry": {"positions": geometry.positions.tolist()},
        "n_snapshots": batch.n_snapshots,
        "noise_power": batch.noise_power,
        "y": complex_to_pairs(batch.y),
    }
    if scene is not None:
        doc["scene"] = {
            "frequencies": scene.frequencies.tolist(),
            "powers": scene.powers.tolist(),
        }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_batch(path):
    with open(path) as fh:
        doc = json.load(fh)
    _require_keys(
        doc,
        {"schema_version", "kind", "geometry", "n_snapshots", "noise_power", "y"},
        {"scene"},
        "measurement file",
    )
    if doc["kind"] != "mmv_batch":
        raise ValidationError(f"expected an mmv_batch file, got kind={doc['kind']!r}")
    _require_keys(doc["geometry"], {"positions"}, set(), "geometry")
    geometry = model.ArrayGeometry(positions=np.asarray(doc["geometry"]["positions"], dtype=float))
    y = pairs_to_complex(doc["y"])
    batch = model.MmvBatch(y=y, noise_power=doc["noise_power"])
    if batch.n_snapshots != doc["n_snapshots"]:
        raise ValidationError("n_snapshots does not match the stored matrix")
    scene = None
    if "scene" in doc:
        _require_keys(doc["scene"], {"frequencies", "powers"}, set(), "scene")
        scene = model.SourceScene(
            frequencies=np.asarray(doc["scene"]["frequencies"], dtype=float),
            powers=np.asarray(doc["scene"]["powers"], dtype=float),
        )
    return batch, geometry, scene


def experiment_config_from_dict(doc: dict) -> bench.ExperimentConfig:
    _require_keys(
        doc,
        {"schema_version", "geometry", "scene", "sweep", "snr_db", "trials", "methods", "seed"},
        {"grid_size", "lambda", "n_snapshots", "mu1"},
        "experiment config",
    )
    geo = doc["geometry"]
    if "ula" in geo:
        _require_keys(geo, {"ula"}, set(), "geometry")
        geometry = model.ArrayGeometry.ula(int(geo["ula"]))
    else:
        _require_keys(geo, {"positions"}, set(), "geometry")
        geometry = model.ArrayGeometry(positions=np.asarray(geo["positions"], dtype=float))
    _require_keys(doc["scene"], {"frequencies"}, {"powers"}, "scene")
    freqs = np.asarray(doc["scene"]["frequencies"], dtype=float)
    powers = (
        np.asarray(doc["scene"]["powers"], dtype=float)
        if "powers" in doc["scene"]
        else None
    )
    _require_keys(doc["sweep"], {"variable", "values"}, set(), "sweep")
    sweep = (doc["sweep"]["variable"], tuple(doc["sweep"]["values"]))
    lam_rule = doc.get("lambda", "auto")
    if lam_rule != "auto":
        lam_rule = float(lam_rule)
    return bench.ExperimentConfig(
        geometry=geometry,
        frequencies=freqs,
        snr_db=float(doc["snr_db"]),
        trials=int(doc["trials"]),
        methods=tuple(doc["methods"]),
        seed=int(doc["seed"]),
        sweep=sweep,
        n_snapshots=int(doc.get("n_snapshots", 50)),
        mu1=float(doc.get("mu1", 0.5)),
        grid_size=int(doc.get("grid_size", 200)),
        lam_rule=lam_rule,
        powers=powers,
    )


def load_experiment_config(path) -> bench.ExperimentConfig:
    with open(path) as fh:
        return experiment_config_from_dict(json.load(fh))


def write_trial_csv(path, report: bench.MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "sweep_var", "sweep_value", "trial", "freq_index", "estimate", "wall_ms", "status"]
        )
        for rec in report.records:
            if rec.estimates.size == 0:
                writer.writerow(
                    [rec.method, report.sweep_variable, rec.sweep_value, rec.trial, "", "", f"{rec.wall_ms:.3f}", rec.status]
                )
            for i, est in enumerate(rec.estimates):
                writer.writerow(
                    [rec.method, report.sweep_variable, rec.sweep_value, rec.trial, i, f"{est:.12g}", f"{rec.wall_ms:.3f}", rec.status]
                )


def write_aggregate_csv(path, report: bench.MetricsReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "sweep_value", "bias", "std", "rmse", "resolution", "mean_ms", "failures", "trials", "crb_rmse"]
        )
        for row in report.rows:
            writer.writerow(
                [
                    row.method,
                    f"{row.sweep_value:.12g}",
                    f"{row.bias:.12g}",
                    f"{row.std:.12g}",
                    f"{row.rmse:.12g}",
                    "" if row.resolution is None else f"{row.resolution:.12g}",
                    f"{row.mean_ms:.3f}",
                    row.failures,
                    row.trials,
                    "" if row.crb_rmse is None else f"{row.crb_rmse:.12g}",
                ]
            )


def report_to_json(report: bench.MetricsReport) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "metrics_report",
        "sweep_variable": report.sweep_variable,
        "aggregates": [
            {k: (None if v is None or (isinstance(v, float) and np.isnan(v)) else v)
             for k, v in asdict(row).items()}
            for row in report.rows
        ],
        "trials": [
            {
                "method": rec.method,
                "sweep_value": rec.sweep_value,
                "trial": rec.trial,
                "estimates": rec.estimates.tolist(),
                "wall_ms": rec.wall_ms,
                "status": rec.status,
            }
            for rec in report.records
        ],
    }


def write_report_json(path, report: bench.MetricsReport) -> None:
    with open(path, "w") as fh:
        json.dump(report_to_json(report), fh)
