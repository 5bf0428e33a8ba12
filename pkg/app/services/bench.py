# app/services/bench.py
"""
Controlled sweeps: vary one parameter, hold the rest fixed, and fit every
requested method on the same generated instance of each (value, trial) cell.
"""
import logging
import multiprocessing as mp
import os
import time

import pandas as pd
from tqdm import tqdm

from app.models import DataKind, ExperimentConfig, Method, SweepAxis, TrialResult
from modules.core import evaluate
from modules.nonlinear import mlp_solve
from modules.scm import (BivariateSpec, ScmKind, bivariate_truth, generate, generate_bivariate,
                         make_scm_spec, random_dag)
from modules.solver import SolverConfig, solve
from modules.utils import derive_seed

from .file_generator import ensure_dir, write_json

logger = logging.getLogger(__name__)

LINEAR_LAMBDA1 = 0.1
MLP_LAMBDA1 = 0.01
MLP_LAMBDA2 = 0.01
SUMMARY_COLUMNS = ["shd", "fdr", "tpr", "correct", "seconds"]


def cell_parameters(cfg: ExperimentConfig, value: float) -> dict:
    """The fixed parameters of ``cfg`` with the swept one replaced by ``value``."""
    params = {
        "d": cfg.d, "m": cfg.m, "noise_variance": cfg.noise_variance,
        "alpha": cfg.alpha, "sigma_nx": cfg.sigma_nx, "sigma_ny": cfg.sigma_ny,
    }
    if cfg.axis is SweepAxis.SAMPLES:
        params["m"] = int(value)
    elif cfg.axis is SweepAxis.VARIABLES:
        params["d"] = int(value)
    else:
        params[cfg.axis.value] = float(value)
    return params


def generate_instance(cfg: ExperimentConfig, params: dict, seed: int):
    """(dataset, truth) for one cell; every method of the cell sees the same data."""
    if cfg.kind.is_bivariate:
        mechanism = ScmKind.LINEAR if cfg.kind is DataKind.BIVARIATE else ScmKind.NONLINEAR
        spec = BivariateSpec(alpha=params["alpha"], sigma_nx=params["sigma_nx"], sigma_ny=params["sigma_ny"],
                             noise_family=cfg.noise_family, m=params["m"], seed=seed, mechanism=mechanism)
        return generate_bivariate(spec), bivariate_truth()
    dag = random_dag(params["d"], cfg.in_degree, seed)
    spec = make_scm_spec(dag, cfg.kind.value, cfg.noise_family, seed, noise_variance=params["noise_variance"])
    return generate(spec, params["m"]), dag


def solver_config(cfg: ExperimentConfig, method: Method, seed: int) -> SolverConfig:
    if method.model == "mlp":
        lambda1 = MLP_LAMBDA1 if cfg.lambda1 is None else cfg.lambda1
        return SolverConfig(lambda1=lambda1, lambda2=MLP_LAMBDA2, omega=cfg.omega, seed=seed)
    lambda1 = LINEAR_LAMBDA1 if cfg.lambda1 is None else cfg.lambda1
    return SolverConfig(lambda1=lambda1, omega=cfg.omega, seed=seed)


def fit_method(data, method: Method, solver_cfg: SolverConfig):
    if method.model == "mlp":
        return mlp_solve(data, method.loss, solver_cfg)
    return solve(data, method.loss, solver_cfg)


def run_cell(task) -> list[dict]:
    """One (value, trial) cell. Module level so worker processes can pickle it."""
    cfg_payload, axis_index, trial = task
    cfg = ExperimentConfig(**cfg_payload)
    value = cfg.values[axis_index]
    seed = derive_seed(cfg.seed, axis_index, trial)
    base = {"axis": cfg.axis.value, "value": value, "trial": trial, "seed": seed}

    try:
        data, truth = generate_instance(cfg, cell_parameters(cfg, value), seed)
    except Exception as e:
        logger.error(f"Generation failed for {cfg.axis.value}={value} trial {trial}: {e}")
        return [TrialResult(**base, method=m.value, status="error", error=f"{type(e).__name__}: {e}").model_dump()
                for m in cfg.methods]

    rows = []
    for method in cfg.methods:
        start = time.perf_counter()
        try:
            report = fit_method(data, method, solver_config(cfg, method, seed))
            metrics = evaluate(report.est_graph, truth)
            correct = report.est_graph.edges() == truth.edges() if cfg.kind.is_bivariate else metrics.shd == 0
            rows.append(TrialResult(**base, method=method.value, converged=report.converged, correct=correct,
                                    seconds=time.perf_counter() - start, **metrics.to_dict()).model_dump())
        except Exception as e:
            logger.error(f"{method.value} failed for {cfg.axis.value}={value} trial {trial}: {e}")
            rows.append(TrialResult(**base, method=method.value, status="error",
                                    seconds=time.perf_counter() - start,
                                    error=f"{type(e).__name__}: {e}").model_dump())
    return rows


def summarize(results: pd.DataFrame) -> list[dict]:
    """Mean and standard deviation of every metric per (value, method) cell, over successful trials."""
    summary = []
    for (value, method), group in results.groupby(["value", "method"], sort=False):
        ok = group[group["status"] == "ok"]
        cell = {"value": float(value), "method": method, "n_ok": int(len(ok)),
                "n_error": int(len(group) - len(ok))}
        for column in SUMMARY_COLUMNS:
            series = ok[column].astype(float) if len(ok) else pd.Series(dtype=float)
            cell[f"{column}_mean"] = float(series.mean()) if len(series) else None
            cell[f"{column}_std"] = float(series.std(ddof=0)) if len(series) else None
        summary.append(cell)
    return summary


def run_bench(cfg: ExperimentConfig, out_dir=None, jobs=None, progress=True):
    """Runs the sweep and writes results.csv and summary.json. Returns (results, summary)."""
    out_dir = out_dir or cfg.output_dir
    jobs = jobs or cfg.jobs
    payload = cfg.model_dump(mode="json")
    tasks = [(payload, axis_index, trial) for axis_index in range(len(cfg.values)) for trial in range(cfg.trials)]
    logger.info(f"Bench {cfg.kind.value}: {cfg.axis.value} in {cfg.values}, {cfg.trials} trials, "
                f"methods {[m.value for m in cfg.methods]}, jobs={jobs}")

    rows = []
    if jobs > 1:
        # imap keeps task order, so results do not depend on the number of workers
        with mp.Pool(jobs) as pool:
            for cell_rows in tqdm(pool.imap(run_cell, tasks), total=len(tasks), desc="bench", disable=not progress):
                rows.extend(cell_rows)
    else:
        for task in tqdm(tasks, desc="bench", disable=not progress):
            rows.extend(run_cell(task))

    results = pd.DataFrame(rows, columns=list(TrialResult.model_fields))
    summary = summarize(results)
    ensure_dir(out_dir)
    results_path = os.path.join(out_dir, "results.csv")
    results.to_csv(results_path, index=False, encoding="utf-8")
    logger.info(f"Wrote {results_path} ({len(results)} rows)")
    write_json({"config": payload, "cells": summary}, os.path.join(out_dir, "summary.json"))
    n_errors = int((results["status"] != "ok").sum())
    if n_errors:
        logger.warning(f"{n_errors} of {len(results)} fits failed; see the error column of {results_path}")
    return results, summary
