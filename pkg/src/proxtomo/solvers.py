"""Proximal-gradient solvers with randomised prox skipping.

The main loop implements the skip-capable step: a gradient step using a
pluggable stochastic estimator, a Bernoulli(p) draw deciding whether the
proximal map (TV prox or plug-and-play denoiser) is applied with weight
gamma/p, and a control-variate update that keeps the skipped iterations
unbiased:

    x_hat = x - gamma * (G(x) - h)
    if theta ~ Bernoulli(p):  x+ = prox_{(gamma/p) g}(x_hat - (gamma/p) h)
    else:                     x+ = x_hat
    h+ = h + (p / gamma) * (x+ - x_hat)

With p = 1 and the full-gradient estimator this is exactly ISTA.  A plain
ISTA, FISTA, and a diagonally preconditioned primal-dual (PDHG) reference
solver live alongside for comparison and for computing high-accuracy
reference solutions.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .geometry import SubsetPartition, build_staggered_partition
from .metrics import psnr as _psnr
from .metrics import relative_error_sq as _relative_error_sq
from .metrics import ssim as _ssim
from .projector import Projector
from .regularizers import (DenoiserSpec, TvDualState, TvProxConfig,
                           _diff_adjoint, _forward_diff, apply_denoiser,
                           tv_prox, tv_value)

RUN_COLUMNS = ("data_passes", "wall_seconds", "rel_err", "psnr", "ssim",
               "prox_calls", "objective")


class DivergenceError(RuntimeError):
    """Iterate became non-finite; carries the partial run record."""

    def __init__(self, iteration: int, gamma: float, record=None):
        super().__init__(
            f"non-finite iterate at iteration {iteration} (gamma={gamma:g})"
        )
        self.iteration = iteration
        self.gamma = gamma
        self.record = record


@dataclass(frozen=True)
class SolverConfig:
    """One solver run: step size, skipping probability, estimator, budgets."""

    gamma: float
    skip_probability: float = 1.0
    n_subsets: int = 1
    estimator: str = "full"
    max_data_passes: float = 200.0
    tolerance: float | None = None
    time_budget: float | None = None
    mu: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if not 0.0 < self.skip_probability <= 1.0:
            raise ValueError("skip_probability must be in (0, 1]")
        if self.estimator not in est.ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.n_subsets < 1:
            raise ValueError("n_subsets must be >= 1")
        if self.max_data_passes <= 0.0:
            raise ValueError("max_data_passes must be positive")
        if self.time_budget is not None and self.time_budget <= 0.0:
            raise ValueError("time_budget must be positive")


@dataclass
class TomoProblem:
    """Measured sinogram, its projector, and the regularisation choice.

    Set ``tv`` for the variational problem, ``denoiser`` for plug-and-play
    mode, or neither for plain least squares (identity prox).
    """

    projector: Projector
    data: np.ndarray
    tv: TvProxConfig | None = None
    denoiser: DenoiserSpec | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        geometry = self.projector.geometry
        if self.data.shape != (geometry.n_angles, geometry.n_bins):
            raise ValueError(
                f"data shape {self.data.shape} does not match geometry "
                f"({geometry.n_angles}, {geometry.n_bins})"
            )
        if self.tv is not None and self.denoiser is not None:
            raise ValueError("choose either tv or denoiser, not both")


@dataclass
class IterateState:
    """Mutable loop state: iterate, control variate, counters, rng streams."""

    x: np.ndarray
    h: np.ndarray
    partition: SubsetPartition | None
    rng_subset: np.random.Generator
    rng_theta: np.random.Generator
    rng_refresh: np.random.Generator
    saga: est.SagaState | None = None
    svrg: est.SvrgState | None = None
    tv_warm: TvDualState | None = None
    k: int = 0
    data_passes: float = 0.0
    prox_calls: int = 0
    denoiser_calls: int = 0
    work_seconds: float = 0.0


@dataclass
class RunRecord:
    """Per-logging-event rows plus the final iterate.

    Rows are (data_passes, wall_seconds, rel_err, psnr, ssim, prox_calls,
    objective) with None for metrics that were not computed; ``iterations``
    tracks the iteration count at each row but is not part of the CSV schema.
    """

    rows: list = field(default_factory=list)
    iterations: list = field(default_factory=list)
    image: np.ndarray | None = None

    def column(self, name: str) -> np.ndarray:
        j = RUN_COLUMNS.index(name)
        return np.array([math.nan if r[j] is None else float(r[j])
                         for r in self.rows])

    @property
    def final_rel_err(self) -> float:
        return float(self.rows[-1][RUN_COLUMNS.index("rel_err")]) if self.rows else math.nan

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(",".join(RUN_COLUMNS) + "\n")
            for row in self.rows:
                handle.write(",".join("" if v is None else repr(float(v))
                                      if isinstance(v, float) else str(v)
                                      for v in row) + "\n")


def _init_state(config: SolverConfig, problem: TomoProblem, x0) -> IterateState:
    shape = problem.projector.shape
    x = np.zeros(shape) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != shape:
        raise ValueError(f"x0 shape {x.shape} does not match grid {shape}")
    streams = np.random.SeedSequence(config.seed).spawn(3)
    partition = None
    if config.estimator != "full":
        partition = build_staggered_partition(
            problem.projector.geometry.n_angles, config.n_subsets
        )
    state = IterateState(
        x=x,
        h=np.zeros(shape),
        partition=partition,
        rng_subset=np.random.default_rng(streams[0]),
        rng_theta=np.random.default_rng(streams[1]),
        rng_refresh=np.random.default_rng(streams[2]),
    )
    if config.estimator == "saga":
        state.saga = est.SagaState.zeros(config.n_subsets, shape)
    elif config.estimator in ("svrg", "lsvrg"):
        kwargs = ({"refresh_period": config.n_subsets}
                  if config.estimator == "svrg"
                  else {"refresh_probability": 1.0 / config.n_subsets})
        state.svrg = est.init_svrg_state(x, problem.projector, problem.data, **kwargs)
        state.data_passes += 1.0
    return state


def _gradient_estimate(state: IterateState, config: SolverConfig,
                       problem: TomoProblem):
    """(estimate, data passes charged) for one iteration."""
    projector, data = problem.projector, problem.data
    kind = config.estimator
    if kind == "full":
        return est.full_gradient(state.x, projector, data), 1.0
    n = state.partition.n_subsets
    if kind == "sgd":
        i = int(state.rng_subset.integers(n))
        return est.sgd_estimate(state.x, i, projector, data, state.partition), 1.0 / n
    if kind == "saga":
        i = int(state.rng_subset.integers(n))
        grad = est.saga_estimate_update(state.x, i, state.saga, projector, data,
                                        state.partition)
        return grad, 1.0 / n
    # svrg / lsvrg: possibly refresh the snapshot first, charged one pass
    passes = 0.0
    if est.refresh_policy(state.svrg, state.rng_refresh):
        est.refresh_svrg_state(state.svrg, state.x, projector, data)
        passes += 1.0
    i = int(state.rng_subset.integers(n))
    grad = est.svrg_estimate(state.x, i, state.svrg, projector, data,
                             state.partition)
    state.svrg.iterations_since_refresh += 1
    return grad, passes + 2.0 / n


def _apply_prox(target, tau: float, state: IterateState,
                problem: TomoProblem) -> np.ndarray:
    """Regulariser prox with weight tau: TV via FGP, denoiser, or identity."""
    if problem.tv is not None:
        warm = state.tv_warm if problem.tv.warm_start else None
        out, state.tv_warm = tv_prox(target, tau, problem.tv, warm)
        return out
    if problem.denoiser is not None:
        state.denoiser_calls += 1
        return apply_denoiser(target, problem.denoiser)
    return target


def proxskip_step(state: IterateState, config: SolverConfig,
                  problem: TomoProblem) -> IterateState:
    """One iteration of the skip-capable proximal-gradient loop."""
    gamma = config.gamma
    p = config.skip_probability
    grad, passes = _gradient_estimate(state, config, problem)
    base = state.x - gamma * grad
    x_hat = base + gamma * state.h
    theta = True if p >= 1.0 else bool(state.rng_theta.random() < p)
    if theta:
        # algebraically x_hat - (gamma/p) h; written so the control-variate
        # term cancels exactly when p == 1
        x_next = _apply_prox(base + (gamma - gamma / p) * state.h, gamma / p,
                             state, problem)
        state.prox_calls += 1
    else:
        x_next = x_hat
    if not np.all(np.isfinite(x_next)):
        raise DivergenceError(state.k, gamma)
    if theta:
        state.h = state.h + (p / gamma) * (x_next - x_hat)
    state.x = x_next
    state.k += 1
    state.data_passes += passes
    return state


def _metrics_row(state_passes, wall, x, reference, ground_truth, prox_calls,
                 problem, record_objective):
    rel = psnr_val = ssim_val = obj = None
    if reference is not None:
        rel = _relative_error_sq(x, reference)
    if ground_truth is not None:
        rng_val = float(ground_truth.max() - ground_truth.min())
        psnr_val = _psnr(x, ground_truth, rng_val if rng_val > 0 else 1.0)
        ssim_val = _ssim(x, ground_truth)
    if record_objective:
        obj = composite_objective(x, problem)
    return (state_passes, wall, rel, psnr_val, ssim_val, prox_calls, obj)


def composite_objective(x, problem: TomoProblem) -> float:
    """0.5 ||A x - b||^2 plus alpha * TV(x) when TV regularisation is set."""
    residual = problem.projector.forward(x) - problem.data
    value = 0.5 * float(np.sum(residual * residual))
    if problem.tv is not None:
        value += problem.tv.alpha * tv_value(x)
    return value


def _run_loop(step, state: IterateState, config: SolverConfig,
              problem: TomoProblem, reference, ground_truth,
              record_objective) -> RunRecord:
    record = RunRecord()

    def log_row():
        row = _metrics_row(state.data_passes, state.work_seconds, state.x,
                           reference, ground_truth, state.prox_calls,
                           problem, record_objective)
        record.rows.append(row)
        record.iterations.append(state.k)
        return row

    def satisfied(row):
        rel = row[RUN_COLUMNS.index("rel_err")]
        return (config.tolerance is not None and rel is not None
                and rel < config.tolerance)

    row = log_row()
    if satisfied(row):
        record.image = state.x.copy()
        return record
    last_floor = math.floor(state.data_passes + 1e-12)
    while True:
        # perf_counter, not process_time: the process CPU clock ticks too
        # coarsely (10 ms on some hosts) for sub-second solver regions
        t0 = time.perf_counter()
        try:
            step(state, config, problem)
        except DivergenceError as exc:
            record.image = None
            exc.record = record
            raise
        state.work_seconds += time.perf_counter() - t0
        exhausted = state.data_passes >= config.max_data_passes - 1e-9
        if config.time_budget is not None:
            exhausted = exhausted or state.work_seconds >= config.time_budget
        crossed = math.floor(state.data_passes + 1e-12) > last_floor
        if crossed or exhausted:
            last_floor = math.floor(state.data_passes + 1e-12)
            row = log_row()
            if satisfied(row) or exhausted:
                break
    record.image = state.x.copy()
    return record


def run(config: SolverConfig, problem: TomoProblem, x0=None, reference=None,
        ground_truth=None, record_objective: bool = False) -> RunRecord:
    """Run the skip-capable loop until tolerance or budget exhaustion.

    Metrics are evaluated and a row logged at every data-pass boundary;
    wall_seconds counts the solver work only, not the metric evaluation.
    """
    state = _init_state(config, problem, x0)
    return _run_loop(proxskip_step, state, config, problem, reference,
                     ground_truth, record_objective)


def run_ista(config: SolverConfig, problem: TomoProblem, x0=None,
             reference=None, ground_truth=None,
             record_objective: bool = False) -> RunRecord:
    """Plain proximal gradient descent: x+ = prox_gamma(x - gamma grad f(x)).

    Standalone implementation, kept independent of the skip loop; the
    estimator and skipping fields of the config are ignored.
    """
    state = _init_state(
        SolverConfig(gamma=config.gamma, max_data_passes=config.max_data_passes,
                     tolerance=config.tolerance, time_budget=config.time_budget,
                     seed=config.seed),
        problem, x0)

    def ista_step(state, cfg, problem):
        grad = est.full_gradient(state.x, problem.projector, problem.data)
        x_next = _apply_prox(state.x - cfg.gamma * grad, cfg.gamma, state, problem)
        state.prox_calls += 1
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError(state.k, cfg.gamma)
        state.x = x_next
        state.k += 1
        state.data_passes += 1.0

    return _run_loop(ista_step, state, config, problem, reference,
                     ground_truth, record_objective)


def run_fista(config: SolverConfig, problem: TomoProblem, x0=None,
              reference=None, ground_truth=None,
              record_objective: bool = False) -> RunRecord:
    """FISTA: the accelerated variant; prox applied every iteration."""
    state = _init_state(
        SolverConfig(gamma=config.gamma, max_data_passes=config.max_data_passes,
                     tolerance=config.tolerance, time_budget=config.time_budget,
                     seed=config.seed),
        problem, x0)
    aux = {"y": state.x.copy(), "t": 1.0}

    def fista_step(state, cfg, problem):
        grad = est.full_gradient(aux["y"], problem.projector, problem.data)
        x_next = _apply_prox(aux["y"] - cfg.gamma * grad, cfg.gamma, state, problem)
        state.prox_calls += 1
        if not np.all(np.isfinite(x_next)):
            raise DivergenceError(state.k, cfg.gamma)
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * aux["t"] * aux["t"])) / 2.0
        aux["y"] = x_next + ((aux["t"] - 1.0) / t_next) * (x_next - state.x)
        aux["t"] = t_next
        state.x = x_next
        state.k += 1
        state.data_passes += 1.0

    return _run_loop(fista_step, state, config, problem, reference,
                     ground_truth, record_objective)


def run_pdhg_reference(problem: TomoProblem, n_iterations: int,
                       snapshot_at: int | None = None):
    """High-accuracy reference via diagonally preconditioned primal-dual
    iterations on the saddle form of the TV-regularised problem.

    The stacked operator couples the projector with the image gradient;
    per-coordinate steps follow the row/column absolute-sum rule.  Returns
    the final iterate, or (final, snapshot) when ``snapshot_at`` is given.
    """
    if n_iterations < 1:
        raise ValueError("n_iterations must be >= 1")
    if problem.denoiser is not None:
        raise ValueError("reference solver needs an explicit objective, not a denoiser")
    projector, data = problem.projector, problem.data
    alpha = problem.tv.alpha if problem.tv is not None else 0.0
    nonneg = problem.tv.nonneg if problem.tv is not None else False
    shape = projector.shape

    row_sums = projector.forward(np.ones(shape))
    with np.errstate(divide="ignore"):
        sigma_a = np.where(row_sums > 0.0, 1.0 / row_sums, 0.0)
    col_sums = projector.adjoint(np.ones_like(data))
    if alpha > 0.0:
        diff_cols = np.zeros(shape)
        diff_cols[:-1, :] += 1.0
        diff_cols[1:, :] += 1.0
        diff_cols[:, :-1] += 1.0
        diff_cols[:, 1:] += 1.0
        col_sums = col_sums + diff_cols
    tau = 1.0 / np.maximum(col_sums, 1e-12)
    sigma_d = 0.5  # 1 / (row sum of the difference operator)

    x = np.zeros(shape)
    x_bar = x.copy()
    y = np.zeros_like(data)
    zv = np.zeros(shape)
    zh = np.zeros(shape)
    snapshot = None
    for it in range(1, n_iterations + 1):
        y = (y + sigma_a * (projector.forward(x_bar) - data)) / (1.0 + sigma_a)
        ascent = projector.adjoint(y)
        if alpha > 0.0:
            gv, gh = _forward_diff(x_bar)
            zv = zv + sigma_d * gv
            zh = zh + sigma_d * gh
            scale = np.maximum(1.0, np.sqrt(zv * zv + zh * zh) / alpha)
            zv /= scale
            zh /= scale
            ascent = ascent + _diff_adjoint(zv, zh)
        x_old = x
        x = x - tau * ascent
        if nonneg:
            np.maximum(x, 0.0, out=x)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(it, float(np.max(tau)))
        x_bar = 2.0 * x - x_old
        if snapshot_at is not None and it == snapshot_at:
            snapshot = x.copy()
    if snapshot_at is not None:
        return x, snapshot
    return x


def optimal_p(mu: float, lipschitz: float) -> float:
    """Rate-optimal skipping probability sqrt(mu / L) for mu-strongly
    convex fidelity, clamped into (0, 1]."""
    if mu <= 0.0 or lipschitz <= 0.0:
        raise ValueError("mu and L must be positive")
    if mu > lipschitz:
        raise ValueError("mu cannot exceed L")
    return min(1.0, math.sqrt(mu / lipschitz))


def default_gamma(estimator: str, lipschitz: float) -> float:
    """Step-size rule per estimator: 1.99/L for full gradients, 1/(3L)
    for the table estimator, 1/L otherwise."""
    if lipschitz <= 0.0:
        raise ValueError("L must be positive")
    if estimator == "full":
        return 1.99 / lipschitz
    if estimator == "saga":
        return 1.0 / (3.0 * lipschitz)
    if estimator in ("sgd", "svrg", "lsvrg"):
        return 1.0 / lipschitz
    raise ValueError(f"unknown estimator {estimator!r}")


def fista_gamma(lipschitz: float) -> float:
    if lipschitz <= 0.0:
        raise ValueError("L must be positive")
    return 1.0 / lipschitz
