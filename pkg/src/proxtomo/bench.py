"""Sweep harness: run (algorithm x subsets x probability) grids and report
time-to-accuracy, iteration counts, prox-call economics, and skip speed-ups.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from itertools import product
from multiprocessing import get_context

import numpy as np

from .metrics import StoppingRule
from .solvers import (DivergenceError, RunRecord, SolverConfig, TomoProblem,
                      default_gamma, fista_gamma, run, run_fista, run_ista)

NOT_REACHED = "--"

SUMMARY_COLUMNS = ("algorithm", "estimator", "n_subsets", "probability",
                   "inner_iterations", "seed", "reached", "time_to_tol",
                   "iterations_to_tol", "passes_to_tol", "prox_calls",
                   "final_rel_err", "wall_seconds", "diverged")

SWEEP_ALGORITHMS = ("ista", "fista", "sgd", "saga", "svrg", "lsvrg")


def algorithm_label(base: str, probability: float) -> str:
    """Display name: the estimator family plus a -skip suffix when p < 1."""
    if base == "fista":
        return "fista"
    if base == "ista":
        return "ista" if probability >= 1.0 else "proxskip"
    name = f"prox{base}"
    return name if probability >= 1.0 else f"{name}-skip"


@dataclass(frozen=True)
class SweepGrid:
    """Axes of the benchmark sweep; deterministic algorithms ignore the
    subset axis and run once per (probability, inner, seed) cell."""

    algorithms: tuple[str, ...]
    n_subsets: tuple[int, ...] = (10,)
    probabilities: tuple[float, ...] = (1.0,)
    inner_iterations: tuple[int, ...] = (10,)
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        for name in ("algorithms", "n_subsets", "probabilities",
                     "inner_iterations", "seeds"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"sweep axis {name} is empty")
        for algo in self.algorithms:
            if algo not in SWEEP_ALGORITHMS:
                raise ValueError(f"unknown algorithm {algo!r}")

    def cells(self):
        """(algorithm, n_subsets, probability, inner, seed) tuples."""
        out = []
        for algo, inner, seed in product(self.algorithms, self.inner_iterations,
                                         self.seeds):
            if algo == "fista":
                out.append((algo, 1, 1.0, inner, seed))
            elif algo == "ista":
                for p in self.probabilities:
                    out.append((algo, 1, p, inner, seed))
            else:
                for n, p in product(self.n_subsets, self.probabilities):
                    out.append((algo, n, p, inner, seed))
        return out


def cell_name(algo, n_subsets, probability, inner, seed) -> str:
    return (f"{algorithm_label(algo, probability)}_N{n_subsets}"
            f"_p{probability:g}_inner{inner}_seed{seed}")


def _cell_problem(problem: TomoProblem, inner: int) -> TomoProblem:
    if problem.tv is None:
        return problem
    return TomoProblem(problem.projector, problem.data,
                       tv=replace(problem.tv, inner_iterations=inner),
                       denoiser=problem.denoiser)


def _run_cell(args):
    (problem, reference, stopping, lipschitz, cell, gamma_override) = args
    algo, n_subsets, probability, inner, seed = cell
    cell_problem = _cell_problem(problem, inner)
    estimator = "full" if algo in ("ista", "fista") else algo
    gamma = gamma_override
    if gamma is None:
        gamma = (fista_gamma(lipschitz) if algo == "fista"
                 else default_gamma(estimator, lipschitz))
    config = SolverConfig(
        gamma=gamma,
        skip_probability=probability,
        n_subsets=n_subsets,
        estimator=estimator,
        max_data_passes=(stopping.max_data_passes
                         if stopping.max_data_passes is not None else math.inf),
        tolerance=stopping.tolerance,
        time_budget=stopping.time_budget,
        seed=seed,
    )
    diverged = False
    try:
        if algo == "fista":
            record = run_fista(config, cell_problem, reference=reference)
        elif algo == "ista" and probability >= 1.0:
            record = run_ista(config, cell_problem, reference=reference)
        else:
            record = run(config, cell_problem, reference=reference)
    except DivergenceError as exc:
        record = exc.record if exc.record is not None else RunRecord()
        diverged = True
    return cell, record, diverged


def _summarise(cell, record: RunRecord, diverged: bool,
               tolerance: float | None) -> dict:
    algo, n_subsets, probability, inner, seed = cell
    passes = record.column("data_passes")
    wall = record.column("wall_seconds")
    rel = record.column("rel_err")
    prox = record.column("prox_calls")
    reached = False
    time_to = iters_to = passes_to = None
    with np.errstate(invalid="ignore"):
        below = rel < tolerance if tolerance is not None else np.array([])
    if tolerance is not None and rel.size and np.any(below):
        idx = int(np.argmax(below))
        reached = True
        time_to = float(wall[idx])
        passes_to = float(passes[idx])
        iters_to = int(record.iterations[idx])
    final_prox = int(prox[-1]) if prox.size else 0
    return {
        "algorithm": algorithm_label(algo, probability),
        "estimator": "full" if algo in ("ista", "fista") else algo,
        "n_subsets": n_subsets,
        "probability": probability,
        "inner_iterations": inner,
        "seed": seed,
        "reached": reached,
        "time_to_tol": time_to,
        "iterations_to_tol": iters_to,
        "passes_to_tol": passes_to,
        "prox_calls": final_prox,
        "final_rel_err": float(rel[-1]) if rel.size and not math.isnan(rel[-1]) else None,
        "wall_seconds": float(wall[-1]) if wall.size else 0.0,
        "diverged": diverged,
    }


def _format_field(value) -> str:
    if value is None:
        return NOT_REACHED
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_summary_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([_format_field(row[c]) for c in SUMMARY_COLUMNS])


def compute_speedups(rows) -> list[dict]:
    """Pair each skipped cell with its non-skipped twin at the same
    (estimator, N, inner, seed) and report time-to-tolerance ratios."""
    nonskip = {}
    for row in rows:
        if row["probability"] >= 1.0:
            key = (row["estimator"], row["n_subsets"],
                   row["inner_iterations"], row["seed"])
            nonskip[key] = row
    out = []
    for row in rows:
        if row["probability"] >= 1.0:
            continue
        key = (row["estimator"], row["n_subsets"],
               row["inner_iterations"], row["seed"])
        twin = nonskip.get(key)
        if twin is None:
            continue
        speedup = None
        if row["time_to_tol"] is not None and twin["time_to_tol"] is not None \
                and row["time_to_tol"] > 0:
            speedup = twin["time_to_tol"] / row["time_to_tol"]
        out.append({
            "estimator": row["estimator"],
            "n_subsets": row["n_subsets"],
            "probability": row["probability"],
            "inner_iterations": row["inner_iterations"],
            "seed": row["seed"],
            "time_skip": row["time_to_tol"],
            "time_nonskip": twin["time_to_tol"],
            "speedup": speedup,
        })
    return out


def write_speedups_csv(path, pairs) -> None:
    columns = ("estimator", "n_subsets", "probability", "inner_iterations",
               "seed", "time_skip", "time_nonskip", "speedup")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for pair in pairs:
            writer.writerow([_format_field(pair[c]) for c in columns])


def export_curve(record: RunRecord, path, x_column: str = "wall_seconds",
                 y_column: str = "rel_err") -> None:
    """Whitespace-separated two-column series for external plotting."""
    xs = record.column(x_column)
    ys = record.column(y_column)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# {x_column} {y_column}\n")
        for x, y in zip(xs, ys):
            if not (math.isnan(x) or math.isnan(y)):
                handle.write(f"{float(x)!r} {float(y)!r}\n")


def run_sweep(grid: SweepGrid, problem: TomoProblem, reference, out_dir,
              stopping: StoppingRule, lipschitz: float | None = None,
              jobs: int = 1, gamma_override: float | None = None) -> list[dict]:
    """Execute every grid cell, write one record CSV per cell plus
    summary.csv and speedups.csv, and return the summary rows.

    Cells are deterministic given their seed, so jobs > 1 changes only the
    wall-clock columns.  Timing-grade runs should keep jobs = 1.
    """
    os.makedirs(out_dir, exist_ok=True)
    if lipschitz is None:
        lipschitz = problem.projector.norm_sq(iterations=100, seed=0)
    reference = None if reference is None else np.asarray(reference, dtype=np.float64)
    cells = grid.cells()
    tasks = [(problem, reference, stopping, lipschitz, cell, gamma_override)
             for cell in cells]
    if jobs > 1:
        with get_context("spawn").Pool(jobs) as pool:
            results = pool.map(_run_cell, tasks)
    else:
        results = [_run_cell(task) for task in tasks]
    rows = []
    for cell, record, diverged in results:
        record.to_csv(os.path.join(out_dir, cell_name(*cell) + ".csv"))
        rows.append(_summarise(cell, record, diverged, stopping.tolerance))
    write_summary_csv(os.path.join(out_dir, "summary.csv"), rows)
    write_speedups_csv(os.path.join(out_dir, "speedups.csv"),
                       compute_speedups(rows))
    return rows
