# modules/entropy.py
"""
Differential entropy by the maximum-entropy (negentropy) approximation with the
nonpolynomial contrasts G1(u) = u exp(-u^2/2) and G2(u) = exp(-u^2/2):

    H(x) ~= H(nu) - k1 * E{G1(x)}^2 - k2 * (E{G2(x)} - sqrt(1/2))^2

for a zero-mean unit-variance x, where nu is the standard Gaussian. Arbitrary
scales are handled by standardizing first and adding log(sigma), so the score
keeps the scale sensitivity a likelihood has.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from modules.core import DegenerateResidualError, NonFiniteError

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329
DEGENERACY_FLOOR = 1e-8


@dataclass(frozen=True)
class EntropyConstants:
    k1: float = 36.0 / (8.0 * math.sqrt(3.0) - 9.0)
    k2: float = 24.0 / (16.0 * math.sqrt(3.0) - 27.0)
    g2_nu: float = math.sqrt(0.5)
    h_nu: float = 0.5 * (1.0 + math.log(2.0 * math.pi))

    def __post_init__(self):
        assert self.k1 > 0 and self.k2 > 0
        assert abs(self.h_nu - 1.4189385332046727) < 1e-12


CONSTANTS = EntropyConstants()


class EntropyMode(str, Enum):
    STANDARDIZED = "standardized"
    RAW = "raw"


def _check_sample(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < 2:
        raise ValueError(f"Entropy estimation needs at least 2 samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("Entropy estimation received NaN/Inf samples")
    return x


def _contrast_means(x: np.ndarray) -> tuple[float, float, np.ndarray]:
    e = np.exp(-0.5 * x * x)
    a = float(np.mean(x * e))
    b = float(np.mean(e)) - CONSTANTS.g2_nu
    return a, b, e


def entropy_standardized(x) -> float:
    """Approximation for an already standardized sample; always <= H(nu)."""
    x = _check_sample(x)
    if np.std(x) <= DEGENERACY_FLOOR:
        raise DegenerateResidualError("degenerate residual: sample has zero variance")
    a, b, _ = _contrast_means(x)
    return CONSTANTS.h_nu - CONSTANTS.k1 * a * a - CONSTANTS.k2 * b * b


def entropy_gradient_standardized(x) -> np.ndarray:
    """dH/dx_i of ``entropy_standardized``, treating every x_i as a free input."""
    x = _check_sample(x)
    a, b, e = _contrast_means(x)
    dg1 = (1.0 - x * x) * e
    dg2 = -x * e
    return (-2.0 * CONSTANTS.k1 * a * dg1 - 2.0 * CONSTANTS.k2 * b * dg2) / x.size


def standardize_entropy(x, floor: float = DEGENERACY_FLOOR) -> float:
    return standardize_entropy_and_gradient(x, floor)[0]


def standardize_entropy_and_gradient(x, floor: float = DEGENERACY_FLOOR) -> tuple[float, np.ndarray]:
    """
    H((x - mean)/s) + log s with the population standard deviation s (divisor m),
    and its gradient with respect to the raw sample, chained through both the
    centering and s.
    """
    x = _check_sample(x)
    m = x.size
    mu = x.mean()
    s = float(np.sqrt(np.mean((x - mu) ** 2)))
    if s <= floor:
        raise DegenerateResidualError(f"degenerate residual: standard deviation {s:.3e} <= {floor:.0e}")
    z = (x - mu) / s
    a, b, _ = _contrast_means(z)
    value = CONSTANTS.h_nu - CONSTANTS.k1 * a * a - CONSTANTS.k2 * b * b + math.log(s)
    g = entropy_gradient_standardized(z)
    # dz_i/dx_k = (delta_ik - 1/m)/s - z_i z_k/(m s); d log s/dx_k = z_k/(m s)
    grad = (g - g.mean() - z * np.mean(g * z) + z / m) / s
    return value, grad


def residual_entropy(x, mode: EntropyMode = EntropyMode.STANDARDIZED,
                     floor: float = DEGENERACY_FLOOR) -> tuple[float, np.ndarray]:
    """Value and raw-sample gradient of the entropy score used by the losses."""
    if EntropyMode(mode) is EntropyMode.STANDARDIZED:
        return standardize_entropy_and_gradient(x, floor)
    # raw: the approximation applied to the residual as-is, without rescaling
    return entropy_standardized(x), entropy_gradient_standardized(x)


# --- Closed forms, used as oracles ---
def gaussian_entropy(sigma: float) -> float:
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return 0.5 * math.log(2.0 * math.pi * math.e * sigma * sigma)


def uniform_entropy(sigma: float) -> float:
    """Entropy of sigma * Uniform(-sqrt 3, sqrt 3) (standard deviation sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return math.log(2.0 * math.sqrt(3.0) * sigma)


def gumbel_entropy(sigma: float) -> float:
    """Entropy of sigma * Gumbel(0, sqrt 6/pi) (standard deviation sigma)."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    return math.log(sigma * math.sqrt(6.0) / math.pi) + EULER_GAMMA + 1.0
