# modules/solver.py
"""
Augmented-Lagrangian structure learning with a bounded L-BFGS inner solver.

    min_W  F(W) + lambda1 ||W||_1   s.t.  h(W) = 0

The l1 term is made smooth by splitting W = W+ - W- into two nonnegative
halves; the diagonal is left out of the parameter vector entirely.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from modules import acyclic
from modules.acyclic import HBackend
from modules.core import (DegenerateResidualError, Dataset, Digraph, DimensionMismatchError, EntDagError,
                          NonFiniteError, WeightMatrix, as_matrix, remove_cycles, threshold)
from modules.entropy import EntropyMode
from modules.loss import LossKind, evaluate as evaluate_loss, l1_norm, l1_subgradient_split

logger = logging.getLogger(__name__)


class SolverError(EntDagError):
    def __init__(self, message: str, iteration: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    omega: float = Field(0.3, gt=0)
    h_tol: float = Field(1e-8, gt=0)
    progress_rate: float = Field(0.25, gt=0, lt=1)
    alpha0: float = 0.0
    rho0: float = Field(1.0, gt=0)
    rho_factor: float = Field(10.0, gt=1)
    rho_max: float = Field(1e16, gt=0)
    lambda1: float = Field(0.1, ge=0)
    lambda2: float = Field(0.0, ge=0)
    max_outer_iters: int = Field(100, ge=1)
    max_inner_iters: int = Field(500, ge=1)
    lbfgs_memory: int = Field(10, ge=1)
    lbfgs_tol: float = Field(1e-8, gt=0)
    inner_ftol: float = Field(2.2e-9, ge=0)
    seed: int = 123
    h_backend: HBackend = HBackend.EXPM
    entropy_mode: EntropyMode = EntropyMode.STANDARDIZED
    degeneracy_floor: float = Field(1e-8, gt=0)
    standardize_columns: bool = False
    remove_cycles: bool = False
    hidden_width: int = Field(10, ge=1)

    @model_validator(mode="after")
    def _check_rho(self):
        if self.rho0 >= self.rho_max:
            raise ValueError("rho0 must be below rho_max")
        return self


class OuterRecord(BaseModel):
    iteration: int
    loss: float
    h: float
    rho: float
    multiplier: float
    inner_iterations: int
    inner_converged: bool


@dataclass
class SolveReport:
    w_est: WeightMatrix
    est_graph: Digraph
    trace: list[OuterRecord]
    converged: bool
    wall_time: float
    loss_kind: str = ""
    model: str = "linear"
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "loss": self.loss_kind,
            "model": self.model,
            "converged": self.converged,
            "wall_time": self.wall_time,
            "h_final": self.trace[-1].h if self.trace else None,
            "edges": [list(e) for e in self.est_graph.edges()],
            "acyclic": self.est_graph.is_acyclic(),
            "trace": [r.model_dump() for r in self.trace],
            **self.extra,
        }


# ----------------------------------------------------------------------
# --- Bounded L-BFGS ---
# ----------------------------------------------------------------------
@dataclass
class InnerResult:
    x: np.ndarray
    fun: float
    n_iter: int
    converged: bool
    line_search_failed: bool = False
    message: str = ""


def _project(x, lower, upper):
    return np.minimum(np.maximum(x, lower), upper)


def _two_loop(g: np.ndarray, s_hist: list, y_hist: list) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    if s_hist:
        q *= float(s_hist[-1] @ y_hist[-1]) / float(y_hist[-1] @ y_hist[-1])
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return q


def inner_minimize(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0: np.ndarray,
                   lower=None, upper=None, memory: int = 10, tol: float = 1e-8,
                   max_iter: int = 500, ftol: float = 2.2e-9, max_backtracks: int = 60) -> InnerResult:
    """
    Projected L-BFGS for box constraints.

    Variables sitting on a bound with the gradient pushing outward are frozen
    for the step; the two-loop direction is computed on the free variables and
    a backtracking Armijo search runs along the projected path. Stops when the
    projected-gradient inf-norm is <= ``tol``, when the relative decrease of the
    objective drops below ``ftol`` or after ``max_iter`` iterations. A failed
    line search returns the best point so far with ``line_search_failed`` set.
    """
    n = x0.size
    lower = np.full(n, -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, float), (n,))
    upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), (n,))
    x = _project(np.asarray(x0, dtype=float).copy(), lower, upper)
    f, g = fun(x)
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise SolverError("objective is not finite at the initial point")
    s_hist: list = []
    y_hist: list = []
    for it in range(max_iter):
        pg = x - _project(x - g, lower, upper)
        if np.max(np.abs(pg), initial=0.0) <= tol:
            return InnerResult(x, f, it, True, message="projected gradient below tolerance")
        active = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        g_free = np.where(active, 0.0, g)
        direction = -_two_loop(g_free, s_hist, y_hist)
        direction[active] = 0.0
        slope = float(g @ direction)
        if slope >= 0 or not np.all(np.isfinite(direction)):
            s_hist.clear()
            y_hist.clear()
            direction, slope = -g_free, -float(g_free @ g_free)
        step = 1.0 if s_hist else min(1.0, 1.0 / max(np.max(np.abs(g_free)), 1e-12))
        accepted = False
        for _ in range(max_backtracks):
            x_new = _project(x + step * direction, lower, upper)
            f_new, g_new = fun(x_new)
            if np.isfinite(f_new) and np.all(np.isfinite(g_new)) and f_new <= f + 1e-4 * float(g @ (x_new - x)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if s_hist:
                s_hist.clear()
                y_hist.clear()
                continue
            logger.debug(f"Line search failed at inner iteration {it} (f={f:.6e})")
            return InnerResult(x, f, it, False, line_search_failed=True, message="line search failed")
        s, y = x_new - x, g_new - g
        if not np.any(s):
            return InnerResult(x, f, it + 1, False, message="step blocked by bounds")
        if float(s @ y) > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        f_old = f
        x, f, g = x_new, f_new, g_new
        if ftol > 0 and (f_old - f) <= ftol * max(abs(f_old), abs(f), 1.0):
            return InnerResult(x, f, it + 1, True, message="relative reduction below ftol")
    return InnerResult(x, f, max_iter, False, message="iteration limit reached")


# ----------------------------------------------------------------------
# --- Augmented Lagrangian ---
# ----------------------------------------------------------------------
class ConstrainedProblem(Protocol):
    """Score plus the map from parameters to the weighted adjacency used by h."""

    def score(self, v: np.ndarray) -> tuple[float, np.ndarray]: ...

    def adjacency(self, v: np.ndarray) -> np.ndarray: ...

    def pull_back(self, v: np.ndarray, d_adjacency: np.ndarray) -> np.ndarray: ...


def augmented_lagrangian(problem: ConstrainedProblem, v0: np.ndarray, lower, upper,
                         cfg: SolverConfig) -> tuple[np.ndarray, list[OuterRecord], bool]:
    """
    Outer loop: solve the inner problem; while h did not shrink below
    c * h_previous, multiply rho by rho_factor (capped at rho_max) and resolve;
    then take the multiplier step alpha += rho * h. Stops at h <= h_tol,
    rho >= rho_max or after max_outer_iters.
    """
    rho, multiplier, h = cfg.rho0, cfg.alpha0, np.inf
    v_est = v0
    trace: list[OuterRecord] = []

    def objective(v):
        # an overflowing trial point reports +inf so the line search halves the step
        try:
            value, grad = problem.score(v)
            hv = acyclic.evaluate(problem.adjacency(v), cfg.h_backend)
        except (OverflowError, FloatingPointError, NonFiniteError):
            return np.inf, np.zeros_like(v)
        h_trial = np.float64(hv.value)
        with np.errstate(over="ignore", invalid="ignore"):
            penalty = 0.5 * rho * h_trial * h_trial + multiplier * h_trial
            weight = rho * h_trial + multiplier
        if not (np.isfinite(value) and np.isfinite(penalty) and np.isfinite(weight)):
            return np.inf, np.zeros_like(v)
        grad = grad + problem.pull_back(v, weight * hv.gradient)
        return float(value + penalty), grad

    for it in range(cfg.max_outer_iters):
        v_new, h_new, inner = None, None, None
        while rho < cfg.rho_max:
            try:
                inner = inner_minimize(objective, v_est, lower, upper, memory=cfg.lbfgs_memory,
                                       tol=cfg.lbfgs_tol, max_iter=cfg.max_inner_iters, ftol=cfg.inner_ftol)
            except DegenerateResidualError as e:
                raise SolverError(f"outer iteration {it}: {e}", iteration=it) from e
            except SolverError as e:
                raise SolverError(f"outer iteration {it}: {e}", iteration=it) from e
            v_new = inner.x
            h_new = acyclic.h_value(problem.adjacency(v_new), cfg.h_backend)
            if not np.isfinite(inner.fun):
                raise SolverError(f"outer iteration {it}: objective became non-finite", iteration=it)
            logger.debug(f"outer {it}: rho={rho:.1e} h={h_new:.3e} inner_iters={inner.n_iter}")
            if h_new > cfg.progress_rate * h:
                rho = min(rho * cfg.rho_factor, cfg.rho_max)
            else:
                break
        v_est, h = v_new, h_new
        multiplier += rho * h
        score_value, _ = problem.score(v_est)
        trace.append(OuterRecord(iteration=it, loss=score_value, h=h, rho=rho, multiplier=multiplier,
                                 inner_iterations=inner.n_iter, inner_converged=inner.converged))
        logger.info(f"Outer iteration {it}: loss={score_value:.6f}, h={h:.3e}, rho={rho:.1e}, alpha={multiplier:.3e}")
        if h <= cfg.h_tol or rho >= cfg.rho_max:
            break
    return v_est, trace, bool(h <= cfg.h_tol)


# ----------------------------------------------------------------------
# --- Linear model ---
# ----------------------------------------------------------------------
def prepare_data(x: Dataset, cfg: SolverConfig) -> Dataset:
    """Centers every column; rescales to unit variance only if ``standardize_columns``."""
    centered = x.centered()
    if not cfg.standardize_columns:
        return centered
    std = centered.values.std(axis=0)
    std[std == 0] = 1.0
    return Dataset(centered.values / std, x.names)


class LinearProblem:
    """Split parameterization v = [W+ offdiag, W- offdiag], both >= 0."""

    def __init__(self, x: Dataset, loss_kind: LossKind, cfg: SolverConfig):
        self.x = x
        self.loss_kind = loss_kind
        self.cfg = cfg
        self.d = x.d
        self.offdiag = ~np.eye(self.d, dtype=bool)
        self.n = int(self.offdiag.sum())

    def adjacency(self, v: np.ndarray) -> np.ndarray:
        w = np.zeros((self.d, self.d))
        w[self.offdiag] = v[:self.n] - v[self.n:]
        return w

    def split(self, w) -> np.ndarray:
        w_plus, w_minus = l1_subgradient_split(w)
        return np.concatenate([w_plus[self.offdiag], w_minus[self.offdiag]])

    def pull_back(self, v, d_adjacency):
        g = d_adjacency[self.offdiag]
        return np.concatenate([g, -g])

    def score(self, v):
        w = self.adjacency(v)
        ev = evaluate_loss(self.loss_kind, self.x, w, self.cfg.entropy_mode, self.cfg.degeneracy_floor)
        value = ev.value + self.cfg.lambda1 * l1_norm(v[:self.n], v[self.n:])
        grad = self.pull_back(v, ev.gradient) + self.cfg.lambda1
        return value, grad


def finalize(w_est: np.ndarray, cfg: SolverConfig) -> Digraph:
    graph = threshold(w_est, cfg.omega)
    if graph.is_acyclic():
        return graph.as_dag()
    if cfg.remove_cycles:
        return remove_cycles(w_est, graph)
    logger.warning(f"Thresholded graph still has a cycle; reporting it as is ({graph.n_edges} edges)")
    return graph


def solve(x: Dataset, loss_kind, cfg: Optional[SolverConfig] = None, w_init=None) -> SolveReport:
    """Fits the linear model; ``w_init`` warm-starts the search (zero matrix by default)."""
    cfg = cfg or SolverConfig()
    loss_kind = LossKind.parse(loss_kind)
    if x.d < 2:
        raise ValueError(f"solve needs at least 2 variables, got {x.d}")
    start = time.perf_counter()
    data = prepare_data(x, cfg)
    problem = LinearProblem(data, loss_kind, cfg)
    logger.info(f"Solving {loss_kind.value} model: m={x.m}, d={x.d}, lambda1={cfg.lambda1}")
    if w_init is None:
        w_init = np.zeros((x.d, x.d))
    w_init = as_matrix(w_init)
    if w_init.shape != (x.d, x.d):
        raise DimensionMismatchError(f"w_init has shape {w_init.shape}, expected {(x.d, x.d)}")
    v0 = problem.split(w_init)
    v_est, trace, converged = augmented_lagrangian(problem, v0, 0.0, np.inf, cfg)
    w_est = problem.adjacency(v_est)
    graph = finalize(w_est, cfg)
    return SolveReport(WeightMatrix(w_est), graph, trace, converged, time.perf_counter() - start,
                       loss_kind=loss_kind.value, model="linear")
