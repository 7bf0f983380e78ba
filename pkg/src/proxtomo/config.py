"""Run-configuration files (TOML or JSON) with strict schema validation.

A config document has up to four sections: problem, regularizer, solver,
sweep.  Unknown sections or keys are rejected.  Command-line flags override
file values, which override the defaults listed in the schema.
"""

from __future__ import annotations

import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid, unknown, or ill-typed configuration content."""


_BOOL = ("bool", bool)
_INT = ("int", int)
_FLOAT = ("float", (int, float))
_STR = ("str", str)
_STR_LIST = ("list of str", list)
_INT_LIST = ("list of int", list)
_FLOAT_LIST = ("list of float", list)

# section -> key -> (type label, python type(s), default, help)
SCHEMA = {
    "problem": {
        "sinogram": (*_STR, None, "path to the measured sinogram file"),
        "width": (*_INT, None, "reconstruction grid width in pixels"),
        "height": (*_INT, None, "reconstruction grid height in pixels"),
        "reference": (*_STR, None, "path to the reference image for relative error"),
        "ground_truth": (*_STR, None, "path to the ground-truth image for PSNR/SSIM"),
        "init": (*_STR, "zero", "starting iterate: zero or fbp"),
    },
    "regularizer": {
        "kind": (*_STR, "tv", "regulariser: tv, denoiser, or none"),
        "alpha": (*_FLOAT, 1.0, "TV regularisation weight"),
        "inner_iterations": (*_INT, 10, "FGP iterations per TV proximal call"),
        "warm_start": (*_BOOL, True, "carry the TV dual state across proximal calls"),
        "nonneg": (*_BOOL, True, "enforce pixelwise nonnegativity"),
        "denoiser": (*_STR, "builtin-gaussian",
                     "denoiser kind: builtin-gaussian, builtin-median, external-command"),
        "sigma": (*_FLOAT, 0.5, "denoiser strength"),
        "command": (*_STR_LIST, [], "external denoiser command line"),
    },
    "solver": {
        "estimator": (*_STR, "full", "gradient estimator: full, sgd, saga, svrg, lsvrg"),
        "skip_probability": (*_FLOAT, 1.0, "probability of applying the proximal step"),
        "n_subsets": (*_INT, 1, "number of staggered angle subsets"),
        "gamma": (*_FLOAT, None, "step size; defaults to the per-estimator rule"),
        "max_data_passes": (*_FLOAT, 200.0, "data-pass budget"),
        "tolerance": (*_FLOAT, None, "squared relative error tolerance vs the reference"),
        "time_budget": (*_FLOAT, None, "wall-clock budget in seconds for the solver region"),
        "seed": (*_INT, 0, "seed for the subset, skip, and refresh streams"),
    },
    "sweep": {
        "algorithms": (*_STR_LIST, ["ista"],
                       "algorithms to sweep: ista, fista, sgd, saga, svrg, lsvrg"),
        "n_subsets": (*_INT_LIST, [10], "subset counts to sweep"),
        "probabilities": (*_FLOAT_LIST, [1.0], "skip probabilities to sweep"),
        "inner_iterations": (*_INT_LIST, [10], "TV inner iteration counts to sweep"),
        "seeds": (*_INT_LIST, [0], "seeds to sweep"),
        "jobs": (*_INT, 1, "parallel worker processes (1 for timing-grade runs)"),
    },
}


def default_config() -> dict:
    return {section: {key: spec[2] for key, spec in keys.items()}
            for section, keys in SCHEMA.items()}


def _check_types(section: str, key: str, value) -> None:
    label, types = SCHEMA[section][key][0], SCHEMA[section][key][1]
    if value is None:
        return
    if isinstance(value, bool) and types is not bool:
        raise ConfigError(f"{section}.{key} must be {label}, got a bool")
    if not isinstance(value, types):
        raise ConfigError(f"{section}.{key} must be {label}, got {type(value).__name__}")


def validate_config(doc: dict) -> dict:
    """Merge a parsed document over the defaults, rejecting unknown keys."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a table/object")
    merged = default_config()
    for section, content in doc.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(content, dict):
            raise ConfigError(f"config section {section!r} must be a table/object")
        for key, value in content.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            _check_types(section, key, value)
            merged[section][key] = value
    return merged


def load_config(path: str) -> dict:
    """Parse and validate a TOML (default) or JSON config file."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if path.endswith(".json"):
        try:
            doc = json.loads(blob.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    else:
        try:
            doc = tomllib.loads(blob.decode("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    return validate_config(doc)


def schema_help() -> str:
    """One line per config key, used in the CLI help output."""
    lines = ["config file keys (TOML or JSON):"]
    for section, keys in SCHEMA.items():
        for key, (label, _, default, help_text) in keys.items():
            default_text = "required/optional" if default is None else repr(default)
            lines.append(f"  {section}.{key} ({label}, default {default_text}): {help_text}")
    return "\n".join(lines)
