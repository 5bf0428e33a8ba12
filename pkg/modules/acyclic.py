# modules/acyclic.py
"""
Smooth acyclicity function h(W) = tr(exp(W o W)) - d and its gradient
(E^T o 2W with E = exp(W o W)).

The matrix exponential is computed in-repo by scaling and squaring with an
order-18 Taylor kernel. A polynomial backend, tr((I + W o W / d)^d) - d, is
available for cross-checks.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from modules.core import NonFiniteError, as_matrix

logger = logging.getLogger(__name__)

TAYLOR_ORDER = 18


class HBackend(str, Enum):
    EXPM = "expm"
    POLY = "poly"


@dataclass(frozen=True)
class AcyclicityEval:
    value: float
    gradient: np.ndarray


def expm(a: np.ndarray, order: int = TAYLOR_ORDER) -> np.ndarray:
    """exp(a) by scaling and squaring: exp(a) = exp(a / 2^s)^(2^s) with ||a / 2^s||_inf <= 1/2."""
    a = np.asarray(a, dtype=float)
    norm = np.max(np.sum(np.abs(a), axis=1)) if a.size else 0.0
    if not np.isfinite(norm):
        return np.full(a.shape, np.inf)
    squarings = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    scaled = a / (2.0 ** squarings)
    n = a.shape[0]
    # Horner: I + A(I + A/2 (I + A/3 (...)))
    result = np.eye(n)
    for k in range(order, 0, -1):
        result = np.eye(n) + scaled @ result / k
    for _ in range(squarings):
        result = result @ result
    return result


def _check(w) -> np.ndarray:
    w = as_matrix(w)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"h(W) needs a square matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NonFiniteError("h(W) received NaN/Inf entries")
    return w


def evaluate(w, backend: HBackend = HBackend.EXPM) -> AcyclicityEval:
    w = _check(w)
    d = w.shape[0]
    sq = w * w
    if HBackend(backend) is HBackend.EXPM:
        e = expm(sq)
        value = float(np.trace(e)) - d
        gradient = e.T * w * 2.0
    else:
        m = np.eye(d) + sq / d
        e = np.linalg.matrix_power(m, d - 1)
        value = float(np.sum(e.T * m)) - d
        gradient = e.T * w * 2.0
    # each series term of a nonnegative matrix has nonnegative trace
    return AcyclicityEval(max(value, 0.0), gradient)


def h_value(w, backend: HBackend = HBackend.EXPM) -> float:
    return evaluate(w, backend).value


def h_gradient(w, backend: HBackend = HBackend.EXPM) -> np.ndarray:
    return evaluate(w, backend).gradient
