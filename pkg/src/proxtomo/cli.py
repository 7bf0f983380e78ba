"""Command-line interface: phantoms, projection, FBP, references,
reconstructions, and benchmark sweeps.

Exit codes: 0 success, 2 configuration/usage error, 3 solver divergence.
"""

from __future__ import annotations

import argparse
import sys

from . import dataio
from .bench import SWEEP_ALGORITHMS, SweepGrid, run_sweep
from .config import ConfigError, default_config, load_config, schema_help
from .geometry import ParallelGeometry
from .metrics import StoppingRule
from .phantoms import FoamSpec, NoiseSpec, fbp, foam_phantom, shepp_logan, simulate_sinogram
from .projector import Projector
from .regularizers import DenoiserSpec, TvProxConfig
from .selfcheck import run_selfchecks
from .solvers import (DivergenceError, SolverConfig, TomoProblem,
                      default_gamma, fista_gamma, run, run_fista, run_ista,
                      run_pdhg_reference)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


def _add_phantom(sub):
    p = sub.add_parser("phantom", help="generate a ground-truth phantom image")
    p.add_argument("--kind", choices=("foam", "shepp-logan"), default="foam")
    p.add_argument("--size", type=int, default=64, help="image side length in pixels")
    p.add_argument("--seed", type=int, default=0, help="bubble placement seed (foam)")
    p.add_argument("--bubbles", type=int, default=12, help="bubble count target (foam)")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--pgm", help="optional 8-bit preview path")


def _add_project(sub):
    p = sub.add_parser("project", help="simulate a sinogram from a phantom image")
    p.add_argument("--phantom", required=True, help="input image path")
    p.add_argument("--angles", type=int, default=60, help="number of uniform view angles")
    p.add_argument("--bins", type=int, default=95, help="detector bin count")
    p.add_argument("--bin-spacing", type=float, default=1.0)
    p.add_argument("--pixel-size", type=float, default=1.0)
    p.add_argument("--noise-level", type=float, default=0.0,
                   help="gaussian noise std as a fraction of the sinogram maximum")
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output sinogram path")


def _add_fbp(sub):
    p = sub.add_parser("fbp", help="filtered back-projection baseline")
    p.add_argument("--sinogram", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pgm", help="optional 8-bit preview path")


def _add_reference(sub):
    p = sub.add_parser("reference",
                       help="high-accuracy reference solution via preconditioned PDHG")
    p.add_argument("--sinogram", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True, help="TV weight")
    p.add_argument("--iterations", type=int, default=50000)
    p.add_argument("--no-nonneg", action="store_true")
    p.add_argument("--out", required=True)


def _solver_flags(p):
    p.add_argument("--config", help="TOML/JSON config file (flags override it)")
    p.add_argument("--sinogram")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--reference")
    p.add_argument("--ground-truth")
    p.add_argument("--alpha", type=float)
    p.add_argument("--inner-iterations", type=int)
    p.add_argument("--no-nonneg", action="store_true")
    p.add_argument("--regularizer", choices=("tv", "denoiser", "none"))
    p.add_argument("--denoiser",
                   choices=("builtin-gaussian", "builtin-median", "external-command"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--max-passes", type=float)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--time-budget", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--init", choices=("zero", "fbp"))


def _add_reconstruct(sub):
    p = sub.add_parser("reconstruct", help="run one reconstruction",
                       epilog=schema_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--algorithm", choices=("ista", "fista", "proxskip"),
                   default="proxskip",
                   help="ista/fista run the standalone loops; proxskip is the "
                        "generic estimator + skipping loop")
    p.add_argument("--estimator", choices=("full", "sgd", "saga", "svrg", "lsvrg"))
    p.add_argument("--skip-prob", type=float, help="prox application probability p")
    p.add_argument("--n-subsets", type=int)
    _solver_flags(p)
    p.add_argument("--out", required=True, help="reconstructed image path")
    p.add_argument("--record", help="per-pass CSV log path")
    p.add_argument("--pgm", help="optional 8-bit preview path")


def _add_sweep(sub):
    p = sub.add_parser("sweep", help="run a benchmark grid and write summary CSVs",
                       epilog=schema_help(),
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _solver_flags(p)
    p.add_argument("--algorithms", nargs="+", choices=SWEEP_ALGORITHMS)
    p.add_argument("--subset-list", nargs="+", type=int)
    p.add_argument("--prob-list", nargs="+", type=float)
    p.add_argument("--inner-list", nargs="+", type=int)
    p.add_argument("--seed-list", nargs="+", type=int)
    p.add_argument("--jobs", type=int, help="parallel workers (default 1)")
    p.add_argument("--out-dir", required=True)


def _add_validate(sub):
    sub.add_parser("validate", help="run the built-in oracle/property self-checks")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxtomo",
        description="Stochastic proximal-gradient tomography "
                    "reconstruction with prox skipping",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_phantom(sub)
    _add_project(sub)
    _add_fbp(sub)
    _add_reference(sub)
    _add_reconstruct(sub)
    _add_sweep(sub)
    _add_validate(sub)
    return parser


def _cmd_phantom(args) -> int:
    if args.kind == "foam":
        image = foam_phantom(FoamSpec(size=args.size, n_bubbles=args.bubbles,
                                      seed=args.seed)).image
    else:
        image = shepp_logan(args.size)
    dataio.save_image(args.out, image)
    if args.pgm:
        dataio.save_pgm(args.pgm, image)
    return EXIT_OK


def _cmd_project(args) -> int:
    image = dataio.load_image(args.phantom)
    geometry = ParallelGeometry.uniform(args.angles, args.bins,
                                        args.bin_spacing, args.pixel_size)
    noise = NoiseSpec(level=args.noise_level, seed=args.noise_seed) \
        if args.noise_level > 0 else None
    sino = simulate_sinogram(image, geometry, noise)
    dataio.save_sinogram(args.out, sino, geometry)
    return EXIT_OK


def _cmd_fbp(args) -> int:
    sino, geometry = dataio.load_sinogram(args.sinogram)
    image = fbp(sino, geometry, (args.height, args.width))
    dataio.save_image(args.out, image)
    if args.pgm:
        dataio.save_pgm(args.pgm, image)
    return EXIT_OK


def _cmd_reference(args) -> int:
    sino, geometry = dataio.load_sinogram(args.sinogram)
    projector = Projector(geometry, args.width, args.height)
    tv = TvProxConfig(alpha=args.alpha, nonneg=not args.no_nonneg)
    problem = TomoProblem(projector, sino, tv=tv)
    image = run_pdhg_reference(problem, args.iterations)
    dataio.save_image(args.out, image)
    return EXIT_OK


def _merged_config(args) -> dict:
    doc = load_config(args.config) if args.config else default_config()
    flag_map = [
        ("problem", "sinogram", "sinogram"), ("problem", "width", "width"),
        ("problem", "height", "height"), ("problem", "reference", "reference"),
        ("problem", "ground_truth", "ground_truth"), ("problem", "init", "init"),
        ("regularizer", "kind", "regularizer"), ("regularizer", "alpha", "alpha"),
        ("regularizer", "inner_iterations", "inner_iterations"),
        ("regularizer", "denoiser", "denoiser"), ("regularizer", "sigma", "sigma"),
        ("solver", "estimator", "estimator"),
        ("solver", "skip_probability", "skip_prob"),
        ("solver", "n_subsets", "n_subsets"), ("solver", "gamma", "gamma"),
        ("solver", "max_data_passes", "max_passes"),
        ("solver", "tolerance", "tolerance"),
        ("solver", "time_budget", "time_budget"), ("solver", "seed", "seed"),
        ("sweep", "algorithms", "algorithms"), ("sweep", "n_subsets", "subset_list"),
        ("sweep", "probabilities", "prob_list"),
        ("sweep", "inner_iterations", "inner_list"),
        ("sweep", "seeds", "seed_list"), ("sweep", "jobs", "jobs"),
    ]
    for section, key, attr in flag_map:
        value = getattr(args, attr, None)
        if value is not None:
            doc[section][key] = value
    if getattr(args, "no_nonneg", False):
        doc["regularizer"]["nonneg"] = False
    if getattr(args, "inner_iterations", None) is not None:
        doc["sweep"]["inner_iterations"] = [args.inner_iterations]
    return doc


def _load_problem(doc: dict):
    prob = doc["problem"]
    for key in ("sinogram", "width", "height"):
        if prob[key] is None:
            raise ConfigError(f"problem.{key} is required")
    sino, geometry = dataio.load_sinogram(prob["sinogram"])
    projector = Projector(geometry, prob["width"], prob["height"])
    reg = doc["regularizer"]
    tv = denoiser = None
    if reg["kind"] == "tv":
        tv = TvProxConfig(alpha=reg["alpha"],
                          inner_iterations=reg["inner_iterations"],
                          warm_start=reg["warm_start"], nonneg=reg["nonneg"])
    elif reg["kind"] == "denoiser":
        denoiser = DenoiserSpec(kind=reg["denoiser"], sigma=reg["sigma"],
                                command=tuple(reg["command"]))
    elif reg["kind"] != "none":
        raise ConfigError(f"unknown regularizer kind {reg['kind']!r}")
    problem = TomoProblem(projector, sino, tv=tv, denoiser=denoiser)
    reference = (dataio.load_image(prob["reference"])
                 if prob["reference"] else None)
    ground_truth = (dataio.load_image(prob["ground_truth"])
                    if prob["ground_truth"] else None)
    if prob["init"] == "fbp":
        x0 = fbp(sino, geometry, projector.shape)
    elif prob["init"] == "zero":
        x0 = None
    else:
        raise ConfigError(f"unknown init {prob['init']!r}")
    return problem, reference, ground_truth, x0


def _solver_config(doc: dict, problem: TomoProblem, algorithm: str) -> SolverConfig:
    sol = doc["solver"]
    estimator = sol["estimator"] if algorithm == "proxskip" else "full"
    gamma = sol["gamma"]
    if gamma is None:
        lipschitz = problem.projector.norm_sq(iterations=100, seed=0)
        gamma = (fista_gamma(lipschitz) if algorithm == "fista"
                 else default_gamma(estimator, lipschitz))
    return SolverConfig(
        gamma=gamma,
        skip_probability=sol["skip_probability"] if algorithm == "proxskip" else 1.0,
        n_subsets=sol["n_subsets"] if algorithm == "proxskip" else 1,
        estimator=estimator,
        max_data_passes=sol["max_data_passes"],
        tolerance=sol["tolerance"],
        time_budget=sol["time_budget"],
        seed=sol["seed"],
    )


def _cmd_reconstruct(args) -> int:
    doc = _merged_config(args)
    problem, reference, ground_truth, x0 = _load_problem(doc)
    config = _solver_config(doc, problem, args.algorithm)
    runner = {"ista": run_ista, "fista": run_fista, "proxskip": run}[args.algorithm]
    record = runner(config, problem, x0=x0, reference=reference,
                    ground_truth=ground_truth)
    dataio.save_image(args.out, record.image)
    if args.record:
        record.to_csv(args.record)
    if args.pgm:
        dataio.save_pgm(args.pgm, record.image)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    doc = _merged_config(args)
    problem, reference, _, _ = _load_problem(doc)
    if reference is None and doc["solver"]["tolerance"] is not None:
        raise ConfigError("sweep with a tolerance needs problem.reference")
    sweep = doc["sweep"]
    grid = SweepGrid(algorithms=tuple(sweep["algorithms"]),
                     n_subsets=tuple(sweep["n_subsets"]),
                     probabilities=tuple(sweep["probabilities"]),
                     inner_iterations=tuple(sweep["inner_iterations"]),
                     seeds=tuple(sweep["seeds"]))
    stopping = StoppingRule(tolerance=doc["solver"]["tolerance"],
                            max_data_passes=doc["solver"]["max_data_passes"],
                            time_budget=doc["solver"]["time_budget"])
    gamma_override = doc["solver"]["gamma"]
    run_sweep(grid, problem, reference, args.out_dir, stopping,
              jobs=sweep["jobs"], gamma_override=gamma_override)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "phantom": _cmd_phantom,
        "project": _cmd_project,
        "fbp": _cmd_fbp,
        "reference": _cmd_reference,
        "reconstruct": _cmd_reconstruct,
        "sweep": _cmd_sweep,
        "validate": lambda a: (EXIT_OK if run_selfchecks() == 0 else 1),
    }
    try:
        return handlers[args.command](args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
