# modules/loss.py
"""
Score functions of the linear model X = XW + N, each with its analytic gradient
with respect to W:

  least_square:  (1/2m) ||X - XW||_F^2
  entropy_loss:  sum_j H(N_j), N = X - XW, with H the negentropy approximation
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from modules.core import DegenerateResidualError, DimensionMismatchError, Dataset, as_matrix
from modules.entropy import DEGENERACY_FLOOR, EntropyMode, residual_entropy

logger = logging.getLogger(__name__)


class LossKind(str, Enum):
    LEAST_SQUARE = "least_square"
    ENTROPY = "entropy"

    @classmethod
    def parse(cls, value) -> "LossKind":
        aliases = {"ls": cls.LEAST_SQUARE, "l2": cls.LEAST_SQUARE}
        if isinstance(value, str) and value.lower() in aliases:
            return aliases[value.lower()]
        return cls(value)


@dataclass(frozen=True)
class LossEval:
    value: float
    gradient: np.ndarray
    residuals: np.ndarray


def _residuals(x, w) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xv, wv = as_matrix(x), as_matrix(w)
    if wv.ndim != 2 or wv.shape[0] != wv.shape[1] or xv.shape[1] != wv.shape[0]:
        raise DimensionMismatchError(f"Data has {xv.shape[1]} columns but W has shape {wv.shape}")
    return xv, wv, xv - xv @ wv


def least_square(x, w) -> LossEval:
    xv, _, r = _residuals(x, w)
    m = xv.shape[0]
    value = 0.5 / m * float(np.sum(r * r))
    gradient = -1.0 / m * xv.T @ r
    return LossEval(value, gradient, r)


def entropy_loss(x, w, mode: EntropyMode = EntropyMode.STANDARDIZED,
                 floor: float = DEGENERACY_FLOOR) -> LossEval:
    xv, _, r = _residuals(x, w)
    names = x.names if isinstance(x, Dataset) else None
    value = 0.0
    d_residual = np.zeros_like(r)
    for j in range(r.shape[1]):
        try:
            h_j, g_j = residual_entropy(r[:, j], mode, floor)
        except DegenerateResidualError as e:
            label = names[j] if names else f"x{j}"
            raise DegenerateResidualError(f"{e} in column {j} ({label})", column=j, name=label) from e
        value += h_j
        d_residual[:, j] = g_j
    # column j of W only moves residual j: dH_j/dW[:, j] = -X^T dH_j/dN_j
    gradient = -xv.T @ d_residual
    return LossEval(value, gradient, r)


def evaluate(kind, x, w, mode: EntropyMode = EntropyMode.STANDARDIZED,
             floor: float = DEGENERACY_FLOOR) -> LossEval:
    if LossKind.parse(kind) is LossKind.LEAST_SQUARE:
        return least_square(x, w)
    return entropy_loss(x, w, mode, floor)


def l1_subgradient_split(w) -> tuple[np.ndarray, np.ndarray]:
    """W = W+ - W- with both halves elementwise nonnegative."""
    w = as_matrix(w)
    return np.maximum(w, 0.0), np.maximum(-w, 0.0)


def l1_norm(w_plus: np.ndarray, w_minus: np.ndarray) -> float:
    return float(np.sum(w_plus) + np.sum(w_minus))
