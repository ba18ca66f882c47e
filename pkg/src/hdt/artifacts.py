"""On-disk artifacts of a run: synthetic CSV, history CSV and JSON manifest."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .data import TimeSeries, write_csv

HISTORY_COLUMNS = ("iteration", "L_harm", "L_grad", "total", "val_mse")


def dataset_hash(ts: TimeSeries) -> str:
    """SHA-256 over channel names, shape and little-endian float64 values."""
    h = hashlib.sha256()
    h.update(json.dumps(list(ts.channel_names)).encode())
    h.update(np.asarray(ts.values.shape, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(ts.values, dtype="<f8").tobytes())
    return h.hexdigest()


def file_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_stem(dataset: str, method: str, m: int, seed: int) -> str:
    return f"{dataset}_{method}_M{m}_s{seed}"


def write_history(history: list, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for row in history:
            w.writerow(["" if row.get(k) is None else repr(row[k]) for k in HISTORY_COLUMNS])


def read_history(path) -> list[dict]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rec = {k: (None if r[k] == "" else float(r[k])) for k in HISTORY_COLUMNS}
            rec["iteration"] = int(rec["iteration"])
            out.append(rec)
    return out


def write_json(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_distill_result(result, out_dir, stem: str, manifest: dict) -> dict:
    """Write the three artifacts of a distillation run; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "synthetic": out / f"{stem}_synthetic.csv",
        "history": out / f"{stem}_history.csv",
        "manifest": out / f"{stem}_manifest.json",
    }
    write_csv(result.synthetic, paths["synthetic"])
    write_history(result.history, paths["history"])
    doc = dict(manifest)
    doc.update(
        {
            "best_val_mse": result.best_val_mse,
            "snapshot_iteration": result.snapshot_iteration,
            "iterations_run": result.iterations_run,
            "warnings": dict(result.warnings),
            "mse_space": "normalized",
        }
    )
    write_json(doc, paths["manifest"])
    return paths
