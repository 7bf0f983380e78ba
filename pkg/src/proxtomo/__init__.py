"""proxtomo: stochastic proximal-gradient tomography solvers with prox skipping."""

__version__ = "0.1.0"

from .geometry import ParallelGeometry, SubsetPartition, build_staggered_partition
from .projector import (Projector, assemble_dense, back_project,
                        forward_project, operator_norm_sq)
from .regularizers import (DenoiserSpec, TvProxConfig, apply_denoiser,
                           nonneg_prox, skip_sigma, tv_prox, tv_value)
from .solvers import (DivergenceError, RunRecord, SolverConfig, TomoProblem,
                      optimal_p, run, run_fista, run_ista, run_pdhg_reference)

__all__ = [
    "ParallelGeometry",
    "SubsetPartition",
    "build_staggered_partition",
    "Projector",
    "forward_project",
    "back_project",
    "operator_norm_sq",
    "assemble_dense",
    "TvProxConfig",
    "tv_value",
    "tv_prox",
    "nonneg_prox",
    "DenoiserSpec",
    "apply_denoiser",
    "skip_sigma",
    "SolverConfig",
    "TomoProblem",
    "RunRecord",
    "DivergenceError",
    "run",
    "run_ista",
    "run_fista",
    "run_pdhg_reference",
    "optimal_p",
]
