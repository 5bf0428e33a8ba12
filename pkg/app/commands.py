# app/commands.py
import json
import logging
import os

import click
import numpy as np
from pydantic import ValidationError

from modules.core import Dataset, Digraph, evaluate
from modules.nonlinear import mlp_solve
from modules.scm import (BivariateSpec, ScmKind, ScmSpec, bivariate_truth, generate, generate_bivariate,
                         make_scm_spec, random_dag)
from modules.solver import SolverConfig, solve
from modules.theory import (BivariatePopulation, check_entropy_likelihood_consistency, ls_failure_predicted,
                            population_ls_losses, population_regression)

from . import EXIT_RUNTIME
from .models import DataKind, ExperimentConfig
from .services import file_generator
from .services.bench import LINEAR_LAMBDA1, MLP_LAMBDA1, MLP_LAMBDA2, run_bench

logger = logging.getLogger(__name__)

NOISE_CHOICES = click.Choice(["uniform", "gumbel", "gaussian"], case_sensitive=False)
KIND_CHOICES = click.Choice([k.value for k in DataKind])
CONSISTENCY_SAMPLES = 100000


def _seed(ctx, seed):
    return ctx.obj['config'].SEED if seed is None else seed


def _output_dir(ctx, out, name):
    return out or os.path.join(ctx.obj['config'].OUTPUT_DIR, name)


def _usage_error(e: ValidationError):
    problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())
    return click.UsageError(problems)


def _runtime_failure(ctx, what, e):
    logger.exception(f"{what} failed: {e}")
    click.echo(f"Error: {e}", err=True)
    ctx.exit(EXIT_RUNTIME)


def _float_list(value):
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected a comma-separated list of numbers, got {value!r}") from None


# --- gen ---
@click.command("gen")
@click.option("--kind", type=KIND_CHOICES, default=DataKind.LINEAR.value, show_default=True)
@click.option("--d", "d", type=int, default=15, show_default=True, help="Number of variables.")
@click.option("--m", "m", type=int, default=None, help="Number of samples [600; 400 for bivariate kinds].")
@click.option("--in-degree", type=int, default=2, show_default=True)
@click.option("--noise", type=NOISE_CHOICES, default="uniform", show_default=True)
@click.option("--noise-variance", type=float, default=None, help="Pin every noise variance to this value.")
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--sigma-nx", type=float, default=2.0, show_default=True)
@click.option("--sigma-ny", type=float, default=1.0, show_default=True)
@click.option("--seed", type=int, default=None, help="Defaults to ENTDAG_SEED.")
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def gen(ctx, kind, d, m, in_degree, noise, noise_variance, alpha, sigma_nx, sigma_ny, seed, out):
    """Generate a synthetic dataset with its ground-truth graph."""
    kind = DataKind(kind)
    seed = _seed(ctx, seed)
    out = _output_dir(ctx, out, "data")
    if kind.is_bivariate and noise_variance is not None:
        raise click.UsageError("--noise-variance does not apply to bivariate kinds; use --sigma-nx/--sigma-ny")
    if noise_variance is not None and noise_variance <= 0:
        raise click.BadParameter("must be positive", param_hint="--noise-variance")

    # everything is generated before the first write
    try:
        if kind.is_bivariate:
            mechanism = ScmKind.LINEAR if kind is DataKind.BIVARIATE else ScmKind.NONLINEAR
            spec = BivariateSpec(alpha=alpha, sigma_nx=sigma_nx, sigma_ny=sigma_ny, noise_family=noise,
                                 m=m or 400, seed=seed, mechanism=mechanism)
            dataset, truth = generate_bivariate(spec), bivariate_truth()
            spec_payload = {"kind": kind.value, **spec.model_dump(mode="json")}
        else:
            m = m or 600
            dag = random_dag(d, in_degree, seed)
            scm = make_scm_spec(dag, kind.value, noise, seed, noise_variance=noise_variance)
            dataset, truth = generate(scm, m), dag
            spec_payload = file_generator.scm_spec_payload(scm, m)
    except ValidationError as e:
        raise _usage_error(e) from e
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    except Exception as e:
        _runtime_failure(ctx, "gen", e)

    try:
        data_path = file_generator.write_generated(out, dataset, truth, spec_payload)
    except Exception as e:
        _runtime_failure(ctx, "gen", e)
    logger.info(f"Generated {kind.value} data with {truth.n_edges} true edges in {out}")
    click.echo(json.dumps({"dataset": data_path, "m": dataset.m, "d": dataset.d, "true_edges": truth.n_edges}))


# --- fit ---
@click.command("fit")
@click.option("--data", "data_path", type=click.Path(dir_okay=False), required=True, help="dataset.csv")
@click.option("--loss", type=click.Choice(["ls", "entropy"]), default="entropy", show_default=True)
@click.option("--model", type=click.Choice(["linear", "mlp"]), default="linear", show_default=True)
@click.option("--lambda1", type=float, default=None, help="l1 weight [0.1 linear, 0.01 mlp].")
@click.option("--omega", type=float, default=0.3, show_default=True, help="Edge threshold.")
@click.option("--seed", type=int, default=None, help="Defaults to ENTDAG_SEED.")
@click.option("--standardize-columns", is_flag=True, default=False)
@click.option("--remove-cycles", is_flag=True, default=False,
              help="Drop the weakest edge of any cycle left after thresholding.")
@click.option("--entropy-mode", type=click.Choice(["standardized", "raw"]), default="standardized", show_default=True)
@click.option("--h-backend", type=click.Choice(["expm", "poly"]), default="expm", show_default=True)
@click.option("--hidden", type=int, default=10, show_default=True, help="Hidden units per variable (mlp).")
@click.option("--max-outer", type=int, default=100, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default=None)
@click.pass_context
def fit(ctx, data_path, loss, model, lambda1, omega, seed, standardize_columns, remove_cycles,
        entropy_mode, h_backend, hidden, max_outer, out):
    """Learn a DAG from dataset.csv with the least-square or entropy score."""
    out = _output_dir(ctx, out, "fit")
    try:
        options = dict(omega=omega, seed=_seed(ctx, seed), standardize_columns=standardize_columns,
                       remove_cycles=remove_cycles, entropy_mode=entropy_mode, h_backend=h_backend,
                       hidden_width=hidden, max_outer_iters=max_outer)
        if model == "mlp":
            cfg = SolverConfig(lambda1=MLP_LAMBDA1 if lambda1 is None else lambda1, lambda2=MLP_LAMBDA2, **options)
        else:
            cfg = SolverConfig(lambda1=LINEAR_LAMBDA1 if lambda1 is None else lambda1, **options)
    except ValidationError as e:
        raise _usage_error(e) from e

    try:
        dataset = Dataset.from_csv(data_path)
        if model == "mlp":
            report = mlp_solve(dataset, loss, cfg)
        else:
            report = solve(dataset, loss, cfg)
        file_generator.write_fit(out, report, dataset.names)
    except Exception as e:
        logger.exception(f"fit failed: {e}")
        payload = file_generator.write_error_report(out, e)
        click.echo(json.dumps(payload))
        ctx.exit(EXIT_RUNTIME)

    if not report.converged:
        logger.warning(f"Solver stopped with h={report.trace[-1].h:.3e} above h_tol={cfg.h_tol:.0e}")
    click.echo(json.dumps({"status": "ok", "edges": [list(e) for e in report.est_graph.edges()],
                           "converged": report.converged, "out": out}))


# --- eval ---
@click.command("eval")
@click.option("--graph", "graph_path", type=click.Path(dir_okay=False), required=True, help="graph.json")
@click.option("--truth", "truth_path", type=click.Path(dir_okay=False), required=True, help="truth.json")
@click.pass_context
def eval_graph(ctx, graph_path, truth_path):
    """Print SHD, FDR and TPR of an estimated graph against the truth."""
    try:
        metrics = evaluate(Digraph.load(graph_path), Digraph.load(truth_path))
    except Exception as e:
        _runtime_failure(ctx, "eval", e)
    click.echo(json.dumps(metrics.to_dict()))


# --- bench ---
@click.command("bench")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="ExperimentConfig JSON; flags given on the command line override it.")
@click.option("--axis", type=click.Choice(["samples", "variables", "noise_variance", "alpha", "sigma_nx", "sigma_ny"]),
              default=None)
@click.option("--values", type=str, default=None, help="Comma-separated axis values.")
@click.option("--kind", type=KIND_CHOICES, default=None)
@click.option("--methods", type=str, default=None, help="Comma-separated: ls, entropy, mlp-ls, mlp-entropy.")
@click.option("--d", "d", type=int, default=None)
@click.option("--m", "m", type=int, default=None)
@click.option("--in-degree", type=int, default=None)
@click.option("--noise", "noise_family", type=NOISE_CHOICES, default=None)
@click.option("--noise-variance", type=float, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--sigma-nx", type=float, default=None)
@click.option("--sigma-ny", type=float, default=None)
@click.option("--lambda1", type=float, default=None)
@click.option("--omega", type=float, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=None, help="Worker processes [ENTDAG_JOBS].")
@click.option("--out", "output_dir", type=click.Path(file_okay=False), default=None)
@click.option("--progress/--no-progress", default=True)
@click.pass_context
def bench(ctx, config_path, values, methods, progress, **flags):
    """Run a controlled sweep and write results.csv and summary.json."""
    config = ctx.obj['config']
    payload = {"seed": config.SEED, "jobs": config.JOBS, "output_dir": os.path.join(config.OUTPUT_DIR, "bench")}
    if config_path:
        try:
            payload.update(file_generator.read_json(config_path))
        except (OSError, json.JSONDecodeError) as e:
            raise click.BadParameter(str(e), param_hint="--config") from e
    payload.update({k: v for k, v in flags.items() if v is not None})
    if values is not None:
        payload["values"] = _float_list(values)
    if methods is not None:
        payload["methods"] = [s.strip() for s in methods.split(",") if s.strip()]
    try:
        cfg = ExperimentConfig(**payload)
    except ValidationError as e:
        raise _usage_error(e) from e

    try:
        results, summary = run_bench(cfg, progress=progress)
    except Exception as e:
        _runtime_failure(ctx, "bench", e)
    click.echo(json.dumps({"rows": len(results), "errors": int((results["status"] != "ok").sum()),
                           "out": cfg.output_dir}))


# --- theory ---
@click.command("theory")
@click.option("--alpha", type=float, default=0.5, show_default=True)
@click.option("--sigma-nx", type=float, default=2.0, show_default=True)
@click.option("--sigma-ny", type=float, default=1.0, show_default=True)
@click.option("--consistency/--no-consistency", default=False,
              help="Also compare the entropy score with the likelihood on sampled noise.")
@click.option("--spec", "spec_path", type=click.Path(dir_okay=False), default=None,
              help="spec.json of a generated SCM for the consistency check.")
@click.option("--noise", type=NOISE_CHOICES, default="gaussian", show_default=True)
@click.option("--m", "m", type=int, default=CONSISTENCY_SAMPLES, show_default=True)
@click.option("--seed", type=int, default=None)
@click.pass_context
def theory(ctx, alpha, sigma_nx, sigma_ny, consistency, spec_path, noise, m, seed):
    """Population least-square losses of X -> Y against Y -> X, and the failure predicate."""
    try:
        population = BivariatePopulation.from_sigmas(alpha, sigma_nx, sigma_ny)
    except ValueError as e:
        raise click.UsageError(str(e)) from e
    if m < 2:
        raise click.BadParameter("must be at least 2", param_hint="--m")
    ls_causal, ls_anticausal = population_ls_losses(population)
    result = {
        "alpha": alpha, "sigma_nx": sigma_nx, "sigma_ny": sigma_ny,
        "regression": population_regression(population).to_dict(),
        "ls_causal": ls_causal, "ls_anticausal": ls_anticausal,
        "failure": ls_failure_predicted(population),
    }

    if consistency or spec_path:
        try:
            if spec_path:
                scm = ScmSpec.from_json(file_generator.read_json(spec_path))
            else:
                scm = ScmSpec(bivariate_truth(), ScmKind.LINEAR, np.array([[0.0, alpha], [0.0, 0.0]]),
                              noise, np.array([sigma_nx, sigma_ny]), _seed(ctx, seed))
            result["consistency"] = check_entropy_likelihood_consistency(scm, m, seed).to_dict()
        except Exception as e:
            _runtime_failure(ctx, "theory", e)
    click.echo(json.dumps(result))


def register(app):
    for command in (gen, fit, eval_graph, bench, theory):
        app.add_command(command)
