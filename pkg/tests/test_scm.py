import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from modules.core import Dag, DimensionMismatchError
from modules.scm import (BivariateSpec, NoiseFamily, ScmKind, ScmSpec, bivariate_truth, generate,
                         generate_bivariate, generate_linear, generate_nonlinear, implied_covariance,
                         make_scm_spec, random_dag, sample_noise)
from modules.utils import make_rng


def test_random_dag_is_acyclic_and_reproducible():
    a = random_dag(15, 2, seed=123)
    b = random_dag(15, 2, seed=123)
    assert a.is_acyclic()
    assert np.array_equal(a.adjacency, b.adjacency)
    assert not np.array_equal(a.adjacency, random_dag(15, 2, seed=124).adjacency)


def test_random_dag_expected_edge_count():
    counts = [random_dag(15, 2, seed=s).n_edges for s in range(40)]
    assert 25 <= np.mean(counts) <= 35


def test_random_dag_two_nodes_full():
    dag = random_dag(2, 1, seed=0)
    assert dag.n_edges == 1


def test_random_dag_logs_capped_probability(caplog):
    with caplog.at_level(logging.WARNING, logger="modules.scm"):
        dag = random_dag(3, 2, seed=0)
    assert dag.n_edges == 3
    assert "capped at 1" in caplog.text
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger="modules.scm"):
        random_dag(15, 2, seed=0)
    assert "capped" not in caplog.text


def test_random_dag_rejects_impossible_degree():
    with pytest.raises(ValueError):
        random_dag(3, 3, seed=0)
    with pytest.raises(ValueError):
        random_dag(1, 1, seed=0)


@pytest.mark.parametrize("family", list(NoiseFamily))
def test_noise_has_requested_std(family):
    n = sample_noise(family, 2.0, 200000, make_rng(0))
    assert np.std(n) == pytest.approx(2.0, rel=0.02)


def test_uniform_noise_support():
    n = sample_noise("uniform", 1.0, 10000, make_rng(1))
    assert np.max(np.abs(n)) <= math.sqrt(3.0)


def test_unknown_noise_family():
    with pytest.raises(ValueError):
        sample_noise("cauchy", 1.0, 10, make_rng(0))
    with pytest.raises(ValueError):
        sample_noise("uniform", 0.0, 10, make_rng(0))


def test_make_scm_spec_ranges():
    dag = random_dag(10, 2, seed=5)
    spec = make_scm_spec(dag, "linear", "uniform", seed=5)
    on_edges = np.abs(spec.strengths[dag.adjacency == 1])
    assert np.all((on_edges >= 0.4) & (on_edges <= 0.8))
    assert np.all(spec.strengths[dag.adjacency == 0] == 0)
    assert np.all((spec.noise_scales >= 0.5) & (spec.noise_scales <= 1.0))


def test_make_scm_spec_pinned_variance():
    spec = make_scm_spec(random_dag(6, 2, seed=1), "nonlinear", "gumbel", seed=1, noise_variance=3.0)
    assert spec.strengths.shape == (3, 6, 6)
    assert np.allclose(spec.noise_scales, math.sqrt(3.0))


def test_scm_spec_validation():
    dag = Dag.from_edges(2, [(0, 1)])
    with pytest.raises(ValueError):
        ScmSpec(dag, ScmKind.LINEAR, np.array([[0.0, 0.5], [0.7, 0.0]]), NoiseFamily.UNIFORM, np.ones(2), 0)
    with pytest.raises(DimensionMismatchError):
        ScmSpec(dag, ScmKind.NONLINEAR, np.zeros((2, 2)), NoiseFamily.UNIFORM, np.ones(2), 0)
    with pytest.raises(ValueError):
        ScmSpec(dag, ScmKind.LINEAR, np.zeros((2, 2)), NoiseFamily.UNIFORM, np.array([1.0, -1.0]), 0)


def test_scm_spec_json_round_trip():
    spec = make_scm_spec(random_dag(5, 2, seed=9), "linear", "gaussian", seed=9)
    back = ScmSpec.from_json(spec.to_json())
    assert np.allclose(back.strengths, spec.strengths)
    assert back.dag.edges() == spec.dag.edges()
    assert back.noise_family is NoiseFamily.GAUSSIAN


def test_generate_linear_reproducible_and_shaped():
    spec = make_scm_spec(random_dag(15, 2, seed=123), "linear", "uniform", seed=123)
    a = generate_linear(spec, 600)
    b = generate(spec, 600)
    assert a.values.shape == (600, 15)
    assert np.array_equal(a.values, b.values)


def test_generate_linear_covariance_matches_implied():
    dag = Dag.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    spec = ScmSpec(dag, ScmKind.LINEAR, np.array([[0, 0.8, -0.5], [0, 0, 0.6], [0, 0, 0]], dtype=float),
                   NoiseFamily.UNIFORM, np.array([1.0, 0.5, 0.7]), 11)
    x = generate_linear(spec, 200000)
    assert np.allclose(np.cov(x.values, rowvar=False, bias=True), implied_covariance(spec), atol=0.02)


def test_generate_kind_mismatch():
    spec = make_scm_spec(random_dag(4, 1, seed=0), "nonlinear", "uniform", seed=0)
    with pytest.raises(ValueError):
        generate_linear(spec, 10)
    with pytest.raises(ValueError):
        implied_covariance(spec)
    assert generate_nonlinear(spec, 50).values.shape == (50, 4)


def test_nonlinear_roots_are_pure_noise():
    dag = Dag.from_edges(3, [(0, 2), (1, 2)])
    spec = make_scm_spec(dag, "nonlinear", "uniform", seed=3, noise_variance=1.0)
    x = generate_nonlinear(spec, 5000).values
    assert abs(x[:, 0].mean()) < 0.05
    assert abs(np.corrcoef(x[:, 0], x[:, 1])[0, 1]) < 0.05


def test_bivariate_defaults():
    spec = BivariateSpec()
    ds = generate_bivariate(spec)
    assert ds.names == ("X", "Y")
    assert ds.values.shape == (400, 2)
    assert np.std(ds.values[:, 0]) == pytest.approx(2.0, rel=0.1)
    assert bivariate_truth().edges() == [(0, 1)]


def test_bivariate_linear_mechanism():
    ds = generate_bivariate(BivariateSpec(alpha=0.5, m=100000, seed=1))
    x, y = ds.values[:, 0], ds.values[:, 1]
    assert np.cov(x, y)[0, 1] / np.var(x) == pytest.approx(0.5, abs=0.02)


def test_bivariate_spec_validation():
    with pytest.raises(ValidationError):
        BivariateSpec(sigma_nx=0.0)
    with pytest.raises(ValidationError):
        BivariateSpec(noise_family="cauchy")
    assert BivariateSpec(noise_family="UNIFORM").noise_family is NoiseFamily.UNIFORM
