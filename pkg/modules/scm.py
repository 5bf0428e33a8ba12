# modules/scm.py
"""
Synthetic ground truth: random DAGs, linear and nonlinear additive-noise SCMs,
and the two-variable generator used by the cause/effect control study.

Edge convention follows modules.core: strengths[i, j] is the effect of X_i on X_j.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from modules.core import Dag, Dataset, DimensionMismatchError
from modules.utils import make_rng, split_seed

logger = logging.getLogger(__name__)

GUMBEL_SCALE = math.sqrt(6.0) / math.pi
LINEAR_STRENGTH_RANGE = (0.4, 0.8)
NONLINEAR_STRENGTH_RANGE = (0.5, 2.0)
NOISE_SCALE_RANGE = (0.5, 1.0)


class NoiseFamily(str, Enum):
    UNIFORM = "uniform"
    GUMBEL = "gumbel"
    GAUSSIAN = "gaussian"


class ScmKind(str, Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


def random_dag(d: int, expected_in_degree: int, seed: int) -> Dag:
    """
    Erdos-Renyi graph on the lower triangle of a random node permutation.

    The edge probability is min(1, 2k/(d-1)), so the expected number of edges is
    k*d and the average in-degree is k (15 variables, k=2 -> about 30 edges).
    """
    if d < 2:
        raise ValueError(f"random_dag needs d >= 2, got {d}")
    if expected_in_degree < 1:
        raise ValueError(f"expected_in_degree must be >= 1, got {expected_in_degree}")
    if expected_in_degree / (d - 1) > 1:
        raise ValueError(f"in-degree {expected_in_degree} is impossible with {d} variables")
    p = 2.0 * expected_in_degree / (d - 1)
    if p > 1.0:
        logger.warning(f"Edge probability {p:.3f} capped at 1 for d={d}, in-degree {expected_in_degree}: "
                       f"the graph is complete and its mean in-degree is {(d - 1) / 2:.1f}")
        p = 1.0
    rng = make_rng(seed)
    lower = np.tril(rng.random((d, d)) < p, k=-1).astype(np.int8)
    perm = rng.permutation(d)
    # relabel node k as perm[k]
    adjacency = np.zeros((d, d), dtype=np.int8)
    adjacency[np.ix_(perm, perm)] = lower
    return Dag(adjacency)


def sample_noise(family, sigma: float, m: int, rng: np.random.Generator) -> np.ndarray:
    """Noise with standard deviation ``sigma`` (the Gumbel variant keeps its positive mean)."""
    if sigma <= 0:
        raise ValueError(f"noise sigma must be positive, got {sigma}")
    try:
        family = NoiseFamily(family)
    except ValueError:
        raise ValueError(f"Unknown noise family: {family!r}") from None
    if family is NoiseFamily.UNIFORM:
        return sigma * rng.uniform(-math.sqrt(3.0), math.sqrt(3.0), size=m)
    if family is NoiseFamily.GUMBEL:
        return sigma * rng.gumbel(0.0, GUMBEL_SCALE, size=m)
    return sigma * rng.normal(0.0, 1.0, size=m)


@dataclass(frozen=True)
class ScmSpec:
    dag: Dag
    kind: ScmKind
    strengths: np.ndarray  # (d, d) for linear, (3, d, d) for nonlinear
    noise_family: NoiseFamily
    noise_scales: np.ndarray
    seed: int

    def __post_init__(self):
        d = self.dag.d
        kind = ScmKind(self.kind)
        strengths = np.array(self.strengths, dtype=float)
        expected = (d, d) if kind is ScmKind.LINEAR else (3, d, d)
        if strengths.shape != expected:
            raise DimensionMismatchError(f"{kind.value} strengths need shape {expected}, got {strengths.shape}")
        off_graph = (self.dag.adjacency == 0)
        if np.any(strengths[..., off_graph] != 0):
            raise ValueError("strengths must be zero off the DAG edges")
        scales = np.array(self.noise_scales, dtype=float).ravel()
        if scales.shape != (d,):
            raise DimensionMismatchError(f"Need {d} noise scales, got {scales.shape}")
        if np.any(scales <= 0):
            raise ValueError("noise scales must be positive")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "noise_family", NoiseFamily(self.noise_family))
        object.__setattr__(self, "strengths", strengths)
        object.__setattr__(self, "noise_scales", scales)

    @property
    def d(self) -> int:
        return self.dag.d

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "kind": self.kind.value,
            "edges": [list(e) for e in self.dag.edges()],
            "strengths": self.strengths.tolist(),
            "noise_family": self.noise_family.value,
            "noise_scales": self.noise_scales.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, payload: dict) -> "ScmSpec":
        return cls(
            dag=Dag.from_edges(int(payload["d"]), payload["edges"]),
            kind=ScmKind(payload["kind"]),
            strengths=np.array(payload["strengths"]),
            noise_family=NoiseFamily(payload["noise_family"]),
            noise_scales=np.array(payload["noise_scales"]),
            seed=int(payload["seed"]),
        )


def make_scm_spec(dag: Dag, kind, noise_family, seed: int,
                  noise_scales: Optional[np.ndarray] = None,
                  noise_variance: Optional[float] = None) -> ScmSpec:
    """
    Draws strengths and noise scales for ``dag``.

    Linear strengths have magnitude U(0.4, 0.8) with a uniform random sign;
    nonlinear strengths are three U(0.5, 2.0) sets. Noise scales are U(0.5, 1.0)
    per variable unless pinned by ``noise_scales`` or ``noise_variance``.
    """
    kind = ScmKind(kind)
    rng = make_rng(split_seed(seed, 2)[0])
    d = dag.d
    mask = dag.adjacency.astype(bool)
    if kind is ScmKind.LINEAR:
        magnitude = rng.uniform(*LINEAR_STRENGTH_RANGE, size=(d, d))
        sign = rng.choice([-1.0, 1.0], size=(d, d))
        strengths = np.where(mask, sign * magnitude, 0.0)
    else:
        strengths = np.where(mask[None], rng.uniform(*NONLINEAR_STRENGTH_RANGE, size=(3, d, d)), 0.0)
    if noise_scales is None:
        if noise_variance is not None:
            noise_scales = np.full(d, math.sqrt(noise_variance))
        else:
            noise_scales = rng.uniform(*NOISE_SCALE_RANGE, size=d)
    return ScmSpec(dag, kind, strengths, NoiseFamily(noise_family), np.asarray(noise_scales), int(seed))


def _noise_matrix(spec: ScmSpec, m: int) -> np.ndarray:
    rng = make_rng(split_seed(spec.seed, 2)[1])
    return np.column_stack([sample_noise(spec.noise_family, s, m, rng) for s in spec.noise_scales])


def generate_linear(spec: ScmSpec, m: int) -> Dataset:
    if spec.kind is not ScmKind.LINEAR:
        raise ValueError("generate_linear needs a linear ScmSpec")
    noise = _noise_matrix(spec, m)
    x = np.zeros((m, spec.d))
    for j in spec.dag.topological_order():
        x[:, j] = x @ spec.strengths[:, j] + noise[:, j]
    return Dataset(x)


def generate_nonlinear(spec: ScmSpec, m: int) -> Dataset:
    """X_j = tanh(X b1_j) + cos(X b2_j) + sin(X b3_j) + N_j; parentless nodes are pure noise."""
    if spec.kind is not ScmKind.NONLINEAR:
        raise ValueError("generate_nonlinear needs a nonlinear ScmSpec")
    noise = _noise_matrix(spec, m)
    b1, b2, b3 = spec.strengths
    x = np.zeros((m, spec.d))
    for j in spec.dag.topological_order():
        if len(spec.dag.parents(j)) == 0:
            x[:, j] = noise[:, j]
        else:
            x[:, j] = np.tanh(x @ b1[:, j]) + np.cos(x @ b2[:, j]) + np.sin(x @ b3[:, j]) + noise[:, j]
    return Dataset(x)


def generate(spec: ScmSpec, m: int) -> Dataset:
    if spec.kind is ScmKind.LINEAR:
        return generate_linear(spec, m)
    return generate_nonlinear(spec, m)


def implied_covariance(spec: ScmSpec) -> np.ndarray:
    """(I - B)^-T D (I - B)^-1 for a linear spec, D the diagonal of noise variances."""
    if spec.kind is not ScmKind.LINEAR:
        raise ValueError("implied_covariance needs a linear ScmSpec")
    inv = np.linalg.inv(np.eye(spec.d) - spec.strengths)
    return inv.T @ np.diag(spec.noise_scales ** 2) @ inv


# --- Two-variable generator ---
class BivariateSpec(BaseModel):
    """X = N_X, Y = alpha X + N_Y (or tanh X + cos X + sin X + N_Y)."""
    model_config = ConfigDict(frozen=True)

    alpha: float = 0.5
    sigma_nx: float = Field(2.0, gt=0)
    sigma_ny: float = Field(1.0, gt=0)
    noise_family: NoiseFamily = NoiseFamily.UNIFORM
    m: int = Field(400, ge=2)
    seed: int = 123
    mechanism: ScmKind = ScmKind.LINEAR

    @field_validator("noise_family", mode="before")
    @classmethod
    def _lower_family(cls, v):
        return v.lower() if isinstance(v, str) else v


def generate_bivariate(spec: BivariateSpec) -> Dataset:
    rng = make_rng(spec.seed)
    x = sample_noise(spec.noise_family, spec.sigma_nx, spec.m, rng)
    ny = sample_noise(spec.noise_family, spec.sigma_ny, spec.m, rng)
    if spec.mechanism is ScmKind.LINEAR:
        y = spec.alpha * x + ny
    else:
        y = np.tanh(x) + np.cos(x) + np.sin(x) + ny
    return Dataset(np.column_stack([x, y]), ("X", "Y"))


def bivariate_truth() -> Dag:
    return Dag.from_edges(2, [(0, 1)])
