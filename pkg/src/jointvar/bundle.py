"""Dataset bundle layout: one CSV per subject plus a JSON manifest.

A bundle directory contains ``manifest.json`` listing d, the shared variable
names, and one entry per subject (id, file name, length). Each subject CSV
has the variable names as header and one row per time point. Simulated
bundles also carry ``truth.json`` with the generating supports and
coefficients. Missing or non-numeric values are rejected with the file and
line reported.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simulator import GeneratedDataset
from .var_core import MultiSubjectSeries, SubjectSeries, VarModel

MANIFEST_NAME = "manifest.json"
TRUTH_NAME = "truth.json"
_SCHEMA = "jointvar-bundle-v1"
_TRUTH_SCHEMA = "jointvar-truth-v1"


@dataclass(frozen=True)
class DatasetBundle:
    """In-memory view of a bundle directory."""

    directory: Path
    series: MultiSubjectSeries
    variables: tuple[str, ...]
    manifest: dict

    @property
    def d(self) -> int:
        return self.series.d

    @property
    def k(self) -> int:
        return self.series.k


def default_variable_names(d: int) -> tuple[str, ...]:
    return tuple(f"V{j + 1}" for j in range(d))


def write_bundle(
    directory,
    series: MultiSubjectSeries,
    variables: tuple[str, ...] | None = None,
    truth: GeneratedDataset | None = None,
    extra_manifest: dict | None = None,
) -> Path:
    """Write subject CSVs, the manifest, and (when given) the truth sidecar.

    Output is byte-deterministic: floats are written with ``repr`` and the
    manifest keys are sorted.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if variables is None:
        variables = default_variable_names(series.d)
    if len(variables) != series.d:
        raise ValueError(f"{len(variables)} variable names for d={series.d}")

    entries = []
    for subj in series:
        fname = f"{subj.subject_id}.csv"
        with open(directory / fname, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(variables)
            for t in range(subj.t_len):
                writer.writerow([repr(float(v)) for v in subj.data[:, t]])
        entries.append({"id": subj.subject_id, "file": fname, "t": subj.t_len})

    manifest = {
        "schema": _SCHEMA,
        "d": series.d,
        "variables": list(variables),
        "subjects": entries,
        "centering": "none",
    }
    if extra_manifest:
        manifest.update(extra_manifest)
    with open(directory / MANIFEST_NAME, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if truth is not None:
        write_truth(directory, truth)
    return directory


def write_truth(directory, truth: GeneratedDataset) -> None:
    directory = Path(directory)
    payload = {
        "schema": _TRUTH_SCHEMA,
        "p": truth.true_models[0].p,
        "common_support": truth.true_common_support.astype(int).tolist(),
        "subjects": [
            {
                "id": subj.subject_id,
                "support": truth.true_supports[k].astype(int).tolist(),
                "phi": [m.tolist() for m in truth.true_models[k].phi],
            }
            for k, subj in enumerate(truth.series)
        ],
    }
    with open(directory / TRUTH_NAME, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_subject_csv(path: Path, variables: tuple[str, ...]) -> np.ndarray:
    rows: list[list[float]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if tuple(header) != variables:
            raise ValueError(
                f"{path}: header {header} does not match manifest variables "
                f"{list(variables)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(variables):
                raise ValueError(
                    f"{path}, line {lineno}: expected {len(variables)} values, "
                    f"got {len(row)}"
                )
            vals = []
            for col, cell in enumerate(row):
                cell = cell.strip()
                if cell == "":
                    raise ValueError(
                        f"{path}, line {lineno}: missing value in column "
                        f"{variables[col]!r} (missing data is not supported)"
                    )
                try:
                    v = float(cell)
                except ValueError:
                    raise ValueError(
                        f"{path}, line {lineno}: non-numeric value {cell!r} in "
                        f"column {variables[col]!r}"
                    ) from None
                if not np.isfinite(v):
                    raise ValueError(
                        f"{path}, line {lineno}: non-finite value in column "
                        f"{variables[col]!r}"
                    )
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.array(rows, dtype=float).T


def read_bundle(directory) -> DatasetBundle:
    """Load and validate a bundle directory against its manifest."""
    directory = Path(directory)
    mpath = directory / MANIFEST_NAME
    if not mpath.exists():
        raise ValueError(f"no {MANIFEST_NAME} in {directory}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    for key in ("d", "variables", "subjects"):
        if key not in manifest:
            raise ValueError(f"{mpath}: manifest is missing {key!r}")
    variables = tuple(manifest["variables"])
    d = int(manifest["d"])
    if len(variables) != d:
        raise ValueError(
            f"{mpath}: d={d} but {len(variables)} variable names listed"
        )
    if not manifest["subjects"]:
        raise ValueError(f"{mpath}: manifest lists no subjects")
    subjects = []
    for entry in manifest["subjects"]:
        path = directory / entry["file"]
        if not path.exists():
            raise ValueError(f"{mpath}: listed file {entry['file']!r} not found")
        data = _read_subject_csv(path, variables)
        if data.shape[0] != d:
            raise ValueError(f"{path}: {data.shape[0]} columns, manifest says d={d}")
        if data.shape[1] != int(entry["t"]):
            raise ValueError(
                f"{path}: {data.shape[1]} rows, manifest says t={entry['t']}"
            )
        subjects.append(SubjectSeries(data=data, subject_id=str(entry["id"])))
    return DatasetBundle(
        directory=directory,
        series=MultiSubjectSeries(tuple(subjects)),
        variables=variables,
        manifest=manifest,
    )


def read_truth(directory) -> dict:
    """Load the truth sidecar; returns supports as boolean arrays and the
    per-subject stacked coefficient matrices."""
    path = Path(directory) / TRUTH_NAME
    if not path.exists():
        raise ValueError(f"no {TRUTH_NAME} in {directory}")
    with open(path) as fh:
        raw = json.load(fh)
    models = []
    supports = []
    for entry in raw["subjects"]:
        phi = tuple(np.array(m, dtype=float) for m in entry["phi"])
        models.append(VarModel(phi=phi, noise_cov=np.eye(phi[0].shape[0])))
        supports.append(np.array(entry["support"], dtype=bool))
    return {
        "p": int(raw["p"]),
        "common_support": np.array(raw["common_support"], dtype=bool),
        "supports": np.array(supports),
        "models": tuple(models),
        "ids": [entry["id"] for entry in raw["subjects"]],
    }


def write_matrix_csv(path, matrix: np.ndarray, variables: tuple[str, ...]) -> None:
    """Transition-matrix CSV: header is the lagged predictor names, one row
    per outcome variable (first column names the outcome)."""
    matrix = np.asarray(matrix, dtype=float)
    d = matrix.shape[0]
    p = matrix.shape[1] // d
    cols = []
    for lag in range(1, p + 1):
        cols.extend([f"{v}.l{lag}" for v in variables])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outcome"] + cols)
        for i in range(d):
            writer.writerow([variables[i]] + [repr(float(v)) for v in matrix[i]])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(c) for c in row[1:]] for row in reader]
    return np.array(rows, dtype=float)
