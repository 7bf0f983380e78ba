"""Shared fixtures: small problems for unit tests, the desk-scale benchmark
problem and its high-accuracy reference for the acceptance suite."""

from types import SimpleNamespace

import numpy as np
import pytest

from proxtomo import ParallelGeometry, Projector
from proxtomo.phantoms import FoamSpec, NoiseSpec, foam_phantom, simulate_sinogram
from proxtomo.regularizers import TvProxConfig
from proxtomo.solvers import TomoProblem, run_pdhg_reference

# desk problem: 64x64 foam, 60 uniform angles, 95 bins, 1% gaussian noise,
# alpha picked by a small grid (PSNR peak) so TV visibly denoises
DESK_SIZE = 64
DESK_ANGLES = 60
DESK_BINS = 95
DESK_ALPHA = 3.0
DESK_NOISE = 0.01


@pytest.fixture(scope="session")
def desk():
    geometry = ParallelGeometry.uniform(DESK_ANGLES, DESK_BINS)
    projector = Projector(geometry, DESK_SIZE, DESK_SIZE)
    phantom = foam_phantom(FoamSpec(size=DESK_SIZE, n_bubbles=12,
                                    bubble_radius_range=(0.08, 0.22), seed=7))
    assert phantom.complete
    data = simulate_sinogram(phantom.image, geometry,
                             NoiseSpec(level=DESK_NOISE, seed=11))
    lipschitz = projector.norm_sq(iterations=100, seed=0)
    return SimpleNamespace(geometry=geometry, projector=projector,
                           phantom=phantom.image, data=data,
                           lipschitz=lipschitz, alpha=DESK_ALPHA)


@pytest.fixture(scope="session")
def desk_problem(desk):
    tv = TvProxConfig(alpha=desk.alpha, inner_iterations=10)
    return TomoProblem(desk.projector, desk.data, tv=tv)


@pytest.fixture(scope="session")
def desk_reference(desk_problem):
    """x* from 5e4 diagonally preconditioned primal-dual iterations."""
    return run_pdhg_reference(desk_problem, 50000)


@pytest.fixture(scope="session")
def small_problem():
    """16x16 problem for fast solver tests."""
    geometry = ParallelGeometry.uniform(10, 23)
    projector = Projector(geometry, 16, 16)
    rng = np.random.default_rng(0)
    truth = np.zeros((16, 16))
    truth[4:12, 5:11] = 1.0
    data = projector.forward(truth) + 0.1 * rng.standard_normal((10, 23))
    tv = TvProxConfig(alpha=0.5, inner_iterations=10)
    problem = TomoProblem(projector, data, tv=tv)
    lipschitz = projector.norm_sq(iterations=100, seed=0)
    return SimpleNamespace(projector=projector, data=data, truth=truth,
                           problem=problem, lipschitz=lipschitz)
