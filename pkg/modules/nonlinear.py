# modules/nonlinear.py
"""
Nonlinear additive-noise structure learning with one small network per variable.

Variable j is predicted by  a2_j . sigmoid(A_j x + b1_j) + b2_j  where A_j is an
h x d first layer whose column j is a structural zero. The induced adjacency is
W[i, j] = ||A_j[:, i]||_2, which is what the acyclicity constraint, the group
l1 penalty and the final threshold act on.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from modules.core import DegenerateResidualError, Dataset, DimensionMismatchError, WeightMatrix, as_matrix
from modules.entropy import residual_entropy
from modules.loss import LossKind
from modules.solver import SolveReport, SolverConfig, augmented_lagrangian, finalize, prepare_data
from modules.utils import make_rng

logger = logging.getLogger(__name__)

INIT_RANGE = 0.1


@dataclass
class MlpModel:
    first: np.ndarray    # (d, h, d): first[j] is A_j
    hidden_bias: np.ndarray  # (d, h)
    second: np.ndarray   # (d, h)
    output_bias: np.ndarray  # (d,)

    def __post_init__(self):
        d, h, d2 = self.first.shape
        if d != d2 or self.hidden_bias.shape != (d, h) or self.second.shape != (d, h) \
                or self.output_bias.shape != (d,):
            raise DimensionMismatchError("Inconsistent MLP parameter shapes")
        for j in range(d):
            self.first[j][:, j] = 0.0

    @property
    def d(self) -> int:
        return self.first.shape[0]

    @property
    def hidden_width(self) -> int:
        return self.first.shape[1]

    @classmethod
    def zeros(cls, d: int, hidden_width: int = 10) -> "MlpModel":
        return cls(np.zeros((d, hidden_width, d)), np.zeros((d, hidden_width)),
                   np.zeros((d, hidden_width)), np.zeros(d))

    @classmethod
    def random(cls, d: int, hidden_width: int = 10, seed: int = 123) -> "MlpModel":
        rng = make_rng(seed)
        return cls(rng.uniform(-INIT_RANGE, INIT_RANGE, (d, hidden_width, d)),
                   rng.uniform(-INIT_RANGE, INIT_RANGE, (d, hidden_width)),
                   rng.uniform(-INIT_RANGE, INIT_RANGE, (d, hidden_width)),
                   np.zeros(d))

    def permuted(self, perm: Sequence[int]) -> "MlpModel":
        """The same model acting on data whose columns were reordered by ``perm``."""
        perm = np.asarray(perm)
        return MlpModel(self.first[perm][:, :, perm].copy(), self.hidden_bias[perm].copy(),
                        self.second[perm].copy(), self.output_bias[perm].copy())

    # flat parameter vector: [first, hidden_bias, second, output_bias]
    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.first.ravel(), self.hidden_bias.ravel(),
                               self.second.ravel(), self.output_bias.ravel()])

    @classmethod
    def from_vector(cls, v: np.ndarray, d: int, hidden_width: int) -> "MlpModel":
        sizes = [d * hidden_width * d, d * hidden_width, d * hidden_width, d]
        parts = np.split(np.asarray(v, dtype=float), np.cumsum(sizes)[:-1])
        return cls(parts[0].reshape(d, hidden_width, d).copy(), parts[1].reshape(d, hidden_width).copy(),
                   parts[2].reshape(d, hidden_width).copy(), parts[3].copy())


def induced_adjacency(model: MlpModel) -> np.ndarray:
    """W[i, j] = Euclidean norm of column i of A_j."""
    return np.sqrt(np.sum(model.first ** 2, axis=1)).T


def _hidden(model: MlpModel, xv: np.ndarray) -> np.ndarray:
    # (d, m, h)
    return expit(np.einsum("mi,jhi->jmh", xv, model.first) + model.hidden_bias[:, None, :])


def mlp_forward(model: MlpModel, x) -> tuple[np.ndarray, np.ndarray]:
    xv = as_matrix(x)
    if xv.shape[1] != model.d:
        raise DimensionMismatchError(f"Data has {xv.shape[1]} columns, model expects {model.d}")
    hidden = _hidden(model, xv)
    predictions = (np.einsum("jmh,jh->mj", hidden, model.second) + model.output_bias)
    return predictions, xv - predictions


def mlp_loss_and_grad(model: MlpModel, x, loss_kind, lambda1: float, lambda2: float = 0.0,
                      entropy_mode="standardized", floor: float = 1e-8) -> tuple[float, MlpModel]:
    """
    Score of the residuals plus lambda1 * sum of first-layer column norms
    (+ lambda2/2 * squared first-layer weights). The gradient is returned in
    the model's own shape.
    """
    loss_kind = LossKind.parse(loss_kind)
    xv = as_matrix(x)
    names = x.names if isinstance(x, Dataset) else None
    m, d = xv.shape
    hidden = _hidden(model, xv)
    predictions = np.einsum("jmh,jh->mj", hidden, model.second) + model.output_bias
    r = xv - predictions

    if loss_kind is LossKind.LEAST_SQUARE:
        value = 0.5 / m * float(np.sum(r * r))
        d_pred = -r / m
    else:
        value = 0.0
        d_pred = np.zeros_like(r)
        for j in range(d):
            try:
                h_j, g_j = residual_entropy(r[:, j], entropy_mode, floor)
            except DegenerateResidualError as e:
                label = names[j] if names else f"x{j}"
                raise DegenerateResidualError(f"{e} in column {j} ({label})", column=j, name=label) from e
            value += h_j
            d_pred[:, j] = -g_j

    # back-propagate through the output layer and the sigmoid
    g_second = np.einsum("jmh,mj->jh", hidden, d_pred)
    g_output_bias = d_pred.sum(axis=0)
    d_z = d_pred.T[:, :, None] * model.second[:, None, :] * hidden * (1.0 - hidden)  # (d, m, h)
    g_first = np.einsum("jmh,mi->jhi", d_z, xv)
    g_hidden_bias = d_z.sum(axis=1)

    norms = np.sqrt(np.sum(model.first ** 2, axis=1))  # (d, d): norms[j, i]
    value += lambda1 * float(norms.sum()) + 0.5 * lambda2 * float(np.sum(model.first ** 2))
    safe = np.where(norms > 0, norms, 1.0)
    g_first += lambda1 * np.where(norms[:, None, :] > 0, model.first / safe[:, None, :], 0.0)
    g_first += lambda2 * model.first
    for j in range(d):
        g_first[j][:, j] = 0.0
    grad = MlpModel(g_first, g_hidden_bias, g_second, g_output_bias)
    return value, grad


class MlpProblem:
    def __init__(self, x: Dataset, loss_kind: LossKind, cfg: SolverConfig, hidden_width: int):
        self.x = x
        self.loss_kind = loss_kind
        self.cfg = cfg
        self.d = x.d
        self.hidden_width = hidden_width

    def model(self, v: np.ndarray) -> MlpModel:
        return MlpModel.from_vector(v, self.d, self.hidden_width)

    def adjacency(self, v):
        return induced_adjacency(self.model(v))

    def pull_back(self, v, d_adjacency):
        # dW[i, j]/dA_j[:, i] = A_j[:, i] / W[i, j]; zero columns get the zero subgradient
        model = self.model(v)
        w = induced_adjacency(model)
        ratio = np.divide(d_adjacency, w, out=np.zeros_like(d_adjacency), where=w > 0)
        g_first = model.first * ratio.T[:, None, :]
        zeros = MlpModel.zeros(self.d, self.hidden_width)
        zeros.first = g_first
        return zeros.to_vector()

    def score(self, v):
        value, grad = mlp_loss_and_grad(self.model(v), self.x, self.loss_kind, self.cfg.lambda1,
                                        self.cfg.lambda2, self.cfg.entropy_mode, self.cfg.degeneracy_floor)
        return value, grad.to_vector()


def mlp_solve(x: Dataset, loss_kind, cfg: Optional[SolverConfig] = None,
              h_width: Optional[int] = None, init: Optional[MlpModel] = None) -> SolveReport:
    cfg = cfg or SolverConfig(lambda1=0.01, lambda2=0.01)
    loss_kind = LossKind.parse(loss_kind)
    h_width = h_width or (init.hidden_width if init is not None else cfg.hidden_width)
    if x.d < 2:
        raise ValueError(f"mlp_solve needs at least 2 variables, got {x.d}")
    start = time.perf_counter()
    data = prepare_data(x, cfg)
    problem = MlpProblem(data, loss_kind, cfg, h_width)
    model0 = init if init is not None else MlpModel.random(x.d, h_width, cfg.seed)
    logger.info(f"Solving MLP {loss_kind.value} model: m={x.m}, d={x.d}, hidden={h_width}")
    v_est, trace, converged = augmented_lagrangian(problem, model0.to_vector(), None, None, cfg)
    w_est = problem.adjacency(v_est)
    graph = finalize(w_est, cfg)
    return SolveReport(WeightMatrix(w_est), graph, trace, converged, time.perf_counter() - start,
                       loss_kind=loss_kind.value, model="mlp")
