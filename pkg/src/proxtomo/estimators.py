"""Unbiased gradient estimators for the subset-split least-squares fidelity.

The fidelity 1/2 ||A x - b||^2 decomposes over a staggered angle partition
into N terms f_i(x) = 1/2 ||A_i x - b_i||^2.  Each estimator returns an
image-shaped unbiased estimate of the full gradient A^T (A x - b):

    full   A^T (A x - b)
    sgd    N * grad f_i(x)
    saga   N * (grad f_i(x) - table_i) + table_sum, then table_i updated
    svrg   N * (grad f_i(x) - grad f_i(snapshot)) + full_grad(snapshot)
    lsvrg  as svrg, snapshot refreshed with probability 1/N
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import SubsetPartition
from .projector import Projector

ESTIMATOR_KINDS = ("full", "sgd", "saga", "svrg", "lsvrg")

SAGA_TABLE_WARN_BYTES = 256 * 2**20


def _subset_gradient(x, i, projector: Projector, data, partition: SubsetPartition):
    subset = partition.subsets[i]
    residual = projector.forward(x, subset) - data[np.asarray(subset), :]
    return projector.adjoint(residual, subset)


def _check_index(i, partition):
    if not 0 <= i < partition.n_subsets:
        raise ValueError(f"subset index {i} out of range [0, {partition.n_subsets})")


def full_gradient(x, projector: Projector, data,
                  partition: SubsetPartition | None = None) -> np.ndarray:
    """A^T (A x - b); with a partition, summed over the subset blocks."""
    if partition is None:
        return projector.adjoint(projector.forward(x) - data)
    total = np.zeros(projector.shape)
    for i in range(partition.n_subsets):
        total += _subset_gradient(x, i, projector, data, partition)
    return total


def sgd_estimate(x, i, projector: Projector, data,
                 partition: SubsetPartition) -> np.ndarray:
    """Plain subset estimate N * grad f_i(x)."""
    _check_index(i, partition)
    return partition.n_subsets * _subset_gradient(x, i, projector, data, partition)


@dataclass
class SagaState:
    """Per-subset gradient table and its incrementally maintained sum."""

    table: np.ndarray        # (n_subsets, height, width)
    running_sum: np.ndarray  # (height, width)

    @classmethod
    def zeros(cls, n_subsets: int, shape) -> "SagaState":
        nbytes = n_subsets * shape[0] * shape[1] * 8
        if nbytes > SAGA_TABLE_WARN_BYTES:
            warnings.warn(
                f"SAGA table needs {nbytes / 2**20:.0f} MiB "
                f"({n_subsets} image-sized entries)",
                ResourceWarning,
                stacklevel=2,
            )
        return cls(table=np.zeros((n_subsets,) + tuple(shape)),
                   running_sum=np.zeros(shape))

    def sum_drift(self) -> float:
        """Relative gap between the running sum and a fresh table sum."""
        fresh = self.table.sum(axis=0)
        denom = float(np.linalg.norm(fresh))
        return float(np.linalg.norm(self.running_sum - fresh)) / max(denom, 1e-300)


def saga_estimate_update(x, i, state: SagaState, projector: Projector, data,
                         partition: SubsetPartition) -> np.ndarray:
    """SAGA estimate at x, overwriting table entry i with the new gradient."""
    _check_index(i, partition)
    n = partition.n_subsets
    grad_i = _subset_gradient(x, i, projector, data, partition)
    old = state.table[i]
    estimate = n * grad_i + (state.running_sum - n * old)
    state.running_sum = (state.running_sum - old) + grad_i
    state.table[i] = grad_i
    return estimate


@dataclass
class SvrgState:
    """Snapshot point, its full gradient, and the refresh bookkeeping.

    Exactly one of ``refresh_period`` (deterministic schedule) and
    ``refresh_probability`` (loopless variant) is set.
    """

    snapshot: np.ndarray
    full_grad: np.ndarray
    iterations_since_refresh: int = 0
    refresh_period: int | None = None
    refresh_probability: float | None = None

    def __post_init__(self):
        if (self.refresh_period is None) == (self.refresh_probability is None):
            raise ValueError("set exactly one of refresh_period / refresh_probability")


def init_svrg_state(x0, projector: Projector, data, *, refresh_period=None,
                    refresh_probability=None) -> SvrgState:
    """Snapshot at x0 with its full gradient (costs one data pass)."""
    return SvrgState(snapshot=np.array(x0, dtype=np.float64),
                     full_grad=full_gradient(x0, projector, data),
                     refresh_period=refresh_period,
                     refresh_probability=refresh_probability)


def refresh_svrg_state(state: SvrgState, x, projector: Projector, data) -> None:
    """Move the snapshot to x and recompute its full gradient in place."""
    state.snapshot = np.array(x, dtype=np.float64)
    state.full_grad = full_gradient(x, projector, data)
    state.iterations_since_refresh = 0


def svrg_estimate(x, i, state: SvrgState, projector: Projector, data,
                  partition: SubsetPartition) -> np.ndarray:
    """Snapshot-corrected estimate; does not mutate the state."""
    _check_index(i, partition)
    if (state.refresh_period is not None
            and state.iterations_since_refresh > state.refresh_period):
        raise ValueError(
            f"stale snapshot: {state.iterations_since_refresh} iterations since "
            f"refresh exceeds the period {state.refresh_period}"
        )
    n = partition.n_subsets
    grad_i = _subset_gradient(x, i, projector, data, partition)
    grad_snap = _subset_gradient(state.snapshot, i, projector, data, partition)
    return n * (grad_i - grad_snap) + state.full_grad


def refresh_policy(state: SvrgState, rng: np.random.Generator | None = None) -> bool:
    """Decide whether the snapshot must be refreshed now.

    Deterministic schedule: refresh once ``refresh_period`` iterations have
    elapsed.  Loopless schedule: one Bernoulli(refresh_probability) draw
    from ``rng``.
    """
    if state.refresh_period is not None:
        return state.iterations_since_refresh >= state.refresh_period
    if rng is None:
        raise ValueError("loopless refresh needs an rng")
    if state.refresh_probability >= 1.0:
        return True
    return bool(rng.random() < state.refresh_probability)
