from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

DEFAULT_SAMPLES = [200, 400, 600, 800, 1000]
DEFAULT_VARIABLES = [5, 10, 15, 20, 25]
DEFAULT_NOISE_VARIANCES = [1.0, 2.0, 3.0, 4.0, 5.0]
DEFAULT_ALPHAS = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


class SweepAxis(str, Enum):
    SAMPLES = "samples"
    VARIABLES = "variables"
    NOISE_VARIANCE = "noise_variance"
    ALPHA = "alpha"
    SIGMA_NX = "sigma_nx"
    SIGMA_NY = "sigma_ny"


BIVARIATE_AXES = (SweepAxis.ALPHA, SweepAxis.SIGMA_NX, SweepAxis.SIGMA_NY)


class DataKind(str, Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"
    BIVARIATE = "bivariate"
    BIVARIATE_NONLINEAR = "bivariate-nonlinear"

    @property
    def is_bivariate(self) -> bool:
        return self in (DataKind.BIVARIATE, DataKind.BIVARIATE_NONLINEAR)


class Method(str, Enum):
    """A (model, loss) pair run by bench."""
    LS = "ls"
    ENTROPY = "entropy"
    MLP_LS = "mlp-ls"
    MLP_ENTROPY = "mlp-entropy"

    @property
    def model(self) -> str:
        return "mlp" if self.value.startswith("mlp") else "linear"

    @property
    def loss(self) -> str:
        return "entropy" if self.value.endswith("entropy") else "least_square"


class ExperimentConfig(BaseModel):
    """One controlled sweep: vary ``axis`` over ``values`` and keep everything else fixed."""
    model_config = ConfigDict(frozen=True)

    axis: SweepAxis = SweepAxis.SAMPLES
    values: list[float] = Field(default_factory=list)
    kind: DataKind = DataKind.LINEAR
    methods: list[Method] = Field(default_factory=lambda: [Method.LS, Method.ENTROPY])
    d: int = Field(15, ge=2)
    m: int = Field(600, ge=2)
    in_degree: int = Field(2, ge=1)
    noise_family: str = "uniform"
    noise_variance: Optional[float] = Field(None, gt=0)
    alpha: float = 0.5
    sigma_nx: float = Field(2.0, gt=0)
    sigma_ny: float = Field(1.0, gt=0)
    lambda1: Optional[float] = Field(None, ge=0)
    omega: float = Field(0.3, gt=0)
    trials: int = Field(10, ge=1)
    seed: int = 123
    jobs: int = Field(1, ge=1)
    output_dir: str = "outputs/bench"

    @field_validator("noise_family")
    @classmethod
    def _known_family(cls, v):
        if v.lower() not in ("uniform", "gumbel", "gaussian"):
            raise ValueError(f"Unknown noise family: {v}")
        return v.lower()

    @model_validator(mode="before")
    @classmethod
    def _fill_axis_values(cls, data):
        if isinstance(data, dict) and not data.get("values"):
            axis = SweepAxis(data.get("axis", SweepAxis.SAMPLES))
            defaults = {
                SweepAxis.SAMPLES: DEFAULT_SAMPLES,
                SweepAxis.VARIABLES: DEFAULT_VARIABLES,
                SweepAxis.NOISE_VARIANCE: DEFAULT_NOISE_VARIANCES,
                SweepAxis.ALPHA: DEFAULT_ALPHAS,
                SweepAxis.SIGMA_NX: [1.0, 1.5, 2.0, 2.5, 3.0],
                SweepAxis.SIGMA_NY: [0.5, 1.0, 1.5, 2.0],
            }
            data = {**data, "values": list(defaults[axis])}
        return data

    @model_validator(mode="after")
    def _check_combination(self):
        if not self.methods:
            raise ValueError("At least one method is required")
        if self.kind.is_bivariate and self.axis in (SweepAxis.VARIABLES, SweepAxis.NOISE_VARIANCE):
            raise ValueError(f"Axis {self.axis.value} does not apply to {self.kind.value} data")
        if not self.kind.is_bivariate and self.axis in BIVARIATE_AXES:
            raise ValueError(f"Axis {self.axis.value} needs a bivariate kind, got {self.kind.value}")
        if self.axis in (SweepAxis.SAMPLES, SweepAxis.VARIABLES) and any(v < 2 for v in self.values):
            raise ValueError(f"{self.axis.value} values must be >= 2")
        if self.axis is not SweepAxis.ALPHA and any(v <= 0 for v in self.values):
            raise ValueError(f"{self.axis.value} values must be positive")
        return self


class TrialResult(BaseModel):
    """One row of results.csv."""
    axis: str
    value: float
    trial: int
    method: str
    seed: int
    status: str = "ok"
    shd: Optional[int] = None
    fdr: Optional[float] = None
    tpr: Optional[float] = None
    predicted_edges: Optional[int] = None
    true_edges: Optional[int] = None
    correct: Optional[bool] = None
    converged: Optional[bool] = None
    seconds: float = 0.0
    error: str = ""
