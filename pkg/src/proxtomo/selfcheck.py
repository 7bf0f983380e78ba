"""Built-in oracle and property self-checks, run by the `validate` subcommand.

Each check recomputes an expected value through an independent route
(dense matrices, enumeration, closed forms) and compares against the
library implementation.  Prints one PASS/FAIL line per check.
"""

from __future__ import annotations

import math

import numpy as np

from .estimators import (SagaState, full_gradient, init_svrg_state,
                         saga_estimate_update, sgd_estimate, svrg_estimate)
from .geometry import ParallelGeometry, build_staggered_partition
from .metrics import psnr, relative_error_sq, ssim
from .projector import Projector, assemble_dense, forward_project, operator_norm_sq
from .regularizers import TvProxConfig, tv_prox, tv_value
from .solvers import SolverConfig, TomoProblem, run, run_ista


def check_adjoint():
    rng = np.random.default_rng(0)
    geom = ParallelGeometry.uniform(9, 13)
    proj = Projector(geom, 8, 8)
    worst = 0.0
    for _ in range(50):
        x = rng.standard_normal((8, 8))
        y = rng.standard_normal((9, 13))
        lhs = float(np.sum(proj.forward(x) * y))
        rhs = float(np.sum(x * proj.adjoint(y)))
        scale = np.linalg.norm(x) * np.linalg.norm(y)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst <= 1e-12, f"max_rel={worst:.3e}"


def check_dense_oracle():
    geom = ParallelGeometry.uniform(5, 9)
    dense = assemble_dense(geom, 6, 6)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10):
        x = rng.standard_normal((6, 6))
        direct = forward_project(x, geom).ravel()
        worst = max(worst, float(np.abs(dense @ x.ravel() - direct).max()))
    return worst <= 1e-12, f"max_abs={worst:.3e}"


def check_power_method():
    geom = ParallelGeometry.uniform(3, 7)
    dense = assemble_dense(geom, 4, 4)
    truth = float(np.linalg.svd(dense, compute_uv=False)[0] ** 2)
    estimate = operator_norm_sq(geom, 4, 4, iterations=200, seed=0)
    rel = abs(estimate - truth) / truth
    return rel <= 1e-6 and estimate <= truth + 1e-12 * truth, f"rel={rel:.3e}"


def check_partition():
    part = build_staggered_partition(400, 5)
    ok = (part.subsets[0] == tuple(range(0, 400, 5))
          and all(len(s) == 80 for s in part.subsets))
    return ok, f"subset0_head={part.subsets[0][:3]}"


def check_tv_prox_oracle():
    rng = np.random.default_rng(2)
    u = rng.standard_normal((3, 3))
    lam = 0.5
    got, _ = tv_prox(u, 1.0, TvProxConfig(alpha=lam, inner_iterations=2000,
                                          warm_start=False, nonneg=False))
    n = u.size
    dv = np.zeros((n, n))
    dh = np.zeros((n, n))
    for i in range(3):
        for j in range(3):
            k = i * 3 + j
            if i < 2:
                dv[k, (i + 1) * 3 + j] = 1.0
                dv[k, k] = -1.0
            if j < 2:
                dh[k, k + 1] = 1.0
                dh[k, k] = -1.0
    pv = np.zeros(n)
    ph = np.zeros(n)
    step = 1.0 / (8.0 * lam)
    uf = u.ravel()
    for _ in range(50000):
        z = uf - lam * (dv.T @ pv + dh.T @ ph)
        pv2 = pv + step * (dv @ z)
        ph2 = ph + step * (dh @ z)
        scale = np.maximum(1.0, np.hypot(pv2, ph2))
        pv, ph = pv2 / scale, ph2 / scale
    want = (uf - lam * (dv.T @ pv + dh.T @ ph)).reshape(3, 3)
    err = float(np.abs(got - want).max())
    return err <= 1e-6, f"max_abs={err:.3e}"


def check_tv_value():
    rng = np.random.default_rng(3)
    img = rng.standard_normal((5, 5))
    direct = 0.0
    for i in range(5):
        for j in range(5):
            dv = img[i + 1, j] - img[i, j] if i < 4 else 0.0
            dh = img[i, j + 1] - img[i, j] if j < 4 else 0.0
            direct += math.hypot(dv, dh)
    err = abs(tv_value(img) - direct)
    return err <= 1e-12, f"abs={err:.3e}"


def check_estimator_unbiasedness():
    rng = np.random.default_rng(4)
    geom = ParallelGeometry.uniform(12, 9)
    proj = Projector(geom, 6, 6)
    x = rng.standard_normal((6, 6))
    data = rng.standard_normal((12, 9))
    worst = 0.0
    for n in (2, 3, 4):
        part = build_staggered_partition(12, n)
        full = full_gradient(x, proj, data)
        scale = float(np.linalg.norm(full))
        sgd_mean = np.mean([sgd_estimate(x, i, proj, data, part)
                            for i in range(n)], axis=0)
        worst = max(worst, float(np.linalg.norm(sgd_mean - full)) / scale)
        table = rng.standard_normal((n, 6, 6))
        saga_mean = np.mean([
            saga_estimate_update(x, i, SagaState(table.copy(), table.sum(axis=0)),
                                 proj, data, part)
            for i in range(n)], axis=0)
        worst = max(worst, float(np.linalg.norm(saga_mean - full)) / scale)
        state = init_svrg_state(rng.standard_normal((6, 6)), proj, data,
                                refresh_period=n)
        svrg_mean = np.mean([svrg_estimate(x, i, state, proj, data, part)
                             for i in range(n)], axis=0)
        worst = max(worst, float(np.linalg.norm(svrg_mean - full)) / scale)
    return worst <= 1e-10, f"max_rel={worst:.3e}"


def check_ista_reduction():
    rng = np.random.default_rng(5)
    geom = ParallelGeometry.uniform(8, 13)
    proj = Projector(geom, 8, 8)
    data = proj.forward(rng.random((8, 8))) + 0.05 * rng.standard_normal((8, 13))
    problem = TomoProblem(proj, data, tv=TvProxConfig(alpha=0.3, inner_iterations=5))
    lipschitz = proj.norm_sq(iterations=80, seed=0)
    config = SolverConfig(gamma=1.99 / lipschitz, max_data_passes=30, seed=0)
    a = run(config, problem)
    b = run_ista(config, problem)
    same = np.array_equal(a.image, b.image)
    return same, "bitwise" if same else "mismatch"


def check_metrics():
    rng = np.random.default_rng(6)
    x = rng.random((16, 16))
    y = rng.random((16, 16))
    ok = (abs(relative_error_sq(1.1 * y, y) - 0.01) <= 1e-12
          and psnr(y, y, 1.0) == 300.0
          and abs(psnr(y + 0.1, y, 1.0) - 20.0) <= 1e-9
          and ssim(y, y) == 1.0
          and -1.0 <= ssim(x, y) <= 1.0)
    return ok, "trivial identities"


CHECKS = (
    ("projector-adjoint", check_adjoint),
    ("projector-dense-oracle", check_dense_oracle),
    ("projector-power-method", check_power_method),
    ("staggered-partition", check_partition),
    ("tv-value-loop-oracle", check_tv_value),
    ("tv-prox-dual-oracle", check_tv_prox_oracle),
    ("estimator-unbiasedness", check_estimator_unbiasedness),
    ("skip-loop-ista-reduction", check_ista_reduction),
    ("metric-identities", check_metrics),
)


def run_selfchecks(out=print) -> int:
    """Run every check; returns the number of failures."""
    failures = 0
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"error={exc}"
        if not ok:
            failures += 1
        out(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    out(f"{len(CHECKS) - failures}/{len(CHECKS)} checks passed")
    return failures
