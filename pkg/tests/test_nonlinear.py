import numpy as np
import pytest

from modules.core import Dag, Dataset, DimensionMismatchError, evaluate
from modules.nonlinear import MlpModel, MlpProblem, induced_adjacency, mlp_forward, mlp_loss_and_grad, mlp_solve
from modules.loss import LossKind
from modules.scm import (BivariateSpec, ScmKind, generate_bivariate, generate_linear, generate_nonlinear,
                         make_scm_spec, random_dag)
from modules.solver import SolverConfig, solve
from modules.utils import derive_seed, finite_difference, make_rng, relative_error


def small_data(m=60, d=3, seed=0):
    return Dataset(make_rng(seed).uniform(-1, 1, (m, d)))


def test_self_inputs_are_zeroed():
    model = MlpModel.random(4, 3, seed=1)
    for j in range(4):
        assert np.all(model.first[j][:, j] == 0)
    assert np.all(np.diag(induced_adjacency(model)) == 0)


def test_vector_round_trip():
    model = MlpModel.random(3, 4, seed=2)
    back = MlpModel.from_vector(model.to_vector(), 3, 4)
    assert np.array_equal(back.first, model.first)
    assert np.array_equal(back.output_bias, model.output_bias)


def test_shape_validation():
    with pytest.raises(DimensionMismatchError):
        MlpModel(np.zeros((2, 3, 2)), np.zeros((2, 3)), np.zeros((2, 4)), np.zeros(2))
    with pytest.raises(DimensionMismatchError):
        mlp_forward(MlpModel.zeros(3, 2), small_data(d=2))


def test_induced_adjacency_is_column_norm():
    model = MlpModel.zeros(3, 2)
    model.first[2][:, 0] = [3.0, 4.0]
    w = induced_adjacency(model)
    assert w[0, 2] == pytest.approx(5.0)
    assert np.count_nonzero(w) == 1


def test_forward_respects_permutation():
    x = small_data(seed=3)
    model = MlpModel.random(3, 4, seed=4)
    perm = [2, 0, 1]
    pred, _ = mlp_forward(model, x)
    pred_perm, _ = mlp_forward(model.permuted(perm), x.permuted(perm))
    assert np.allclose(pred_perm, pred[:, perm])


@pytest.mark.parametrize("loss", ["ls", "entropy"])
def test_gradient_matches_finite_differences(loss):
    x = small_data(seed=5)
    model = MlpModel.random(3, 3, seed=6)
    model.output_bias[:] = [0.1, -0.2, 0.05]

    def value(v):
        return mlp_loss_and_grad(MlpModel.from_vector(v, 3, 3), x, loss, lambda1=0.01, lambda2=0.01)[0]

    _, grad = mlp_loss_and_grad(model, x, loss, lambda1=0.01, lambda2=0.01)
    numeric = finite_difference(value, model.to_vector())
    free = MlpModel.from_vector(np.ones_like(numeric), 3, 3).to_vector() != 0
    assert relative_error(grad.to_vector()[free], numeric[free]) < 1e-5


def test_pull_back_matches_finite_differences():
    x = small_data(seed=7)
    problem = MlpProblem(x, LossKind.LEAST_SQUARE, SolverConfig(lambda1=0.01), 3)
    v = MlpModel.random(3, 3, seed=8).to_vector()
    direction = make_rng(9).normal(size=(3, 3))
    np.fill_diagonal(direction, 0.0)
    numeric = finite_difference(lambda u: float(np.sum(direction * problem.adjacency(u))), v)
    assert relative_error(problem.pull_back(v, direction), numeric) < 1e-5


def test_mlp_solve_returns_dag():
    dag = Dag.from_edges(3, [(0, 1), (1, 2)])
    spec = make_scm_spec(dag, "nonlinear", "uniform", seed=10, noise_variance=0.5)
    x = generate_nonlinear(spec, 200)
    cfg = SolverConfig(lambda1=0.01, lambda2=0.01, max_outer_iters=20, max_inner_iters=200)
    report = mlp_solve(x, "ls", cfg, h_width=5)
    assert report.model == "mlp"
    assert report.est_graph.is_acyclic()
    assert report.w_est.w.shape == (3, 3)
    assert np.all(report.w_est.w >= 0)


def test_mlp_solve_needs_two_variables():
    with pytest.raises(ValueError):
        mlp_solve(Dataset(make_rng(0).normal(size=(10, 1))), "ls")


def test_forward_by_hand_on_two_variable_chain():
    model = MlpModel.zeros(2, 1)
    model.first[1][0, 0] = 2.0
    model.hidden_bias[1, 0] = -1.0
    model.second[1, 0] = 3.0
    model.output_bias[:] = [0.5, 0.25]
    x = Dataset(np.array([[0.0, 1.0], [1.0, 2.0], [-1.0, 0.0]]))
    pred, resid = mlp_forward(model, x)
    sigmoid = lambda t: 1.0 / (1.0 + np.exp(-t))
    expected_y = 3.0 * sigmoid(2.0 * x.values[:, 0] - 1.0) + 0.25
    # variable 0 has no inputs: sigmoid(0) * 0 + output bias
    assert np.allclose(pred[:, 0], 0.5)
    assert np.allclose(pred[:, 1], expected_y)
    assert np.allclose(resid, x.values - pred)


@pytest.mark.parametrize("loss", ["ls", "entropy"])
def test_gradient_matches_finite_differences_on_random_configurations(loss):
    rng = make_rng(12)
    for trial in range(10):
        d, width, m = int(rng.integers(2, 5)), int(rng.integers(1, 5)), int(rng.integers(20, 80))
        x = Dataset(rng.uniform(-2, 2, (m, d)))
        model = MlpModel.random(d, width, seed=100 + trial)
        model.output_bias[:] = rng.normal(scale=0.2, size=d)
        lambda1, lambda2 = rng.uniform(0.0, 0.05, 2)

        def value(v):
            return mlp_loss_and_grad(MlpModel.from_vector(v, d, width), x, loss, lambda1, lambda2)[0]

        _, grad = mlp_loss_and_grad(model, x, loss, lambda1, lambda2)
        numeric = finite_difference(value, model.to_vector())
        free = MlpModel.from_vector(np.ones_like(numeric), d, width).to_vector() != 0
        assert relative_error(grad.to_vector()[free], numeric[free]) < 1e-4


def mlp_config():
    return SolverConfig(lambda1=0.01, lambda2=0.01)


def skeleton(graph):
    a = graph.adjacency
    return np.triu((a + a.T) > 0, k=1)


@pytest.mark.slow
def test_mlp_entropy_orients_nonlinear_pairs():
    hits = 0
    for seed in range(10):
        spec = BivariateSpec(sigma_nx=2.0, sigma_ny=1.0, m=600, seed=seed, mechanism=ScmKind.NONLINEAR)
        hits += mlp_solve(generate_bivariate(spec), "entropy", mlp_config()).est_graph.edges() == [(0, 1)]
    assert hits >= 8


@pytest.mark.slow
def test_mlp_entropy_no_worse_than_ls_on_nonlinear_graphs():
    ls, entropy = [], []
    for trial in range(10):
        seed = derive_seed(123, 5, trial)
        spec = make_scm_spec(random_dag(5, 2, seed), "nonlinear", "uniform", seed, noise_variance=3.0)
        x = generate_nonlinear(spec, 600)
        ls.append(evaluate(mlp_solve(x, "ls", mlp_config()).est_graph, spec.dag).shd)
        entropy.append(evaluate(mlp_solve(x, "entropy", mlp_config()).est_graph, spec.dag).shd)
    assert np.mean(entropy) <= np.mean(ls)


@pytest.mark.slow
def test_mlp_matches_linear_skeleton_on_linear_data():
    distances = []
    for trial in range(3):
        seed = derive_seed(7, trial)
        spec = make_scm_spec(random_dag(4, 1, seed), "linear", "uniform", seed)
        x = generate_linear(spec, 600)
        linear = solve(x, "ls").est_graph
        mlp = mlp_solve(x, "ls", mlp_config()).est_graph
        distances.append(int(np.sum(skeleton(linear) != skeleton(mlp))))
    assert np.mean(distances) <= 2
