# app/services/file_generator.py

import json
import logging
import os

import numpy as np
import pandas as pd

from modules.core import Dataset, Digraph, WeightMatrix
from modules.scm import ScmSpec
from modules.solver import SolveReport

logger = logging.getLogger(__name__)


def ensure_dir(path):
    """Creates the output directory, naming it in the error if that fails."""
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as e:
        raise OSError(f"Cannot create output directory {path}: {e}") from e
    return path


def write_json(payload, path):
    try:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, default=_json_default)
    except OSError as e:
        raise OSError(f"Cannot write {path}: {e}") from e
    logger.info(f"Wrote {path}")
    return path


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as e:
        raise OSError(f"Cannot read {path}: {e}") from e


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


# --- gen outputs ---
def write_generated(out_dir, dataset: Dataset, truth: Digraph, spec_payload: dict):
    """dataset.csv, truth.json and spec.json for one generated instance."""
    ensure_dir(out_dir)
    data_path = os.path.join(out_dir, "dataset.csv")
    dataset.to_csv(data_path)
    logger.info(f"Wrote {data_path} ({dataset.m} x {dataset.d})")
    write_json(truth.to_json(), os.path.join(out_dir, "truth.json"))
    write_json(spec_payload, os.path.join(out_dir, "spec.json"))
    return data_path


def scm_spec_payload(spec: ScmSpec, m: int) -> dict:
    return {**spec.to_json(), "m": m}


# --- fit outputs ---
def write_weights(w: WeightMatrix, names, path):
    pd.DataFrame(w.w, index=list(names), columns=list(names)).to_csv(path, encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_fit(out_dir, report: SolveReport, names):
    """west.csv (raw weights), graph.json (thresholded graph) and report.json."""
    ensure_dir(out_dir)
    write_weights(report.w_est, names, os.path.join(out_dir, "west.csv"))
    write_json(report.est_graph.to_json(), os.path.join(out_dir, "graph.json"))
    write_json({"status": "ok", **report.to_dict()}, os.path.join(out_dir, "report.json"))


def write_error_report(out_dir, error: Exception):
    payload = {"status": "error", "error": str(error), "type": type(error).__name__}
    for attr in ("column", "name", "iteration"):
        value = getattr(error, attr, None)
        if value is not None:
            payload[attr] = value
    cause = error.__cause__
    if cause is not None and getattr(cause, "column", None) is not None:
        payload.setdefault("column", cause.column)
        payload.setdefault("name", cause.name)
    try:
        ensure_dir(out_dir)
        write_json(payload, os.path.join(out_dir, "report.json"))
    except OSError as e:
        logger.error(f"Could not write error report: {e}")
    return payload
