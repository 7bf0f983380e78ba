"""Isotropic total variation (value + proximal via FGP) and denoiser slot.

The TV proximal solves, for a weight ``lam = tau * alpha``,

    argmin_z  1/2 ||z - u||^2 + lam * TV(z)    (optionally + indicator z >= 0)

on the dual with a fixed number of fast-gradient-projection iterations.
The dual step is 1/(8*lam), the classical bound for the 2D forward-difference
operator; nonnegativity is folded into the primal step as a projection.
"""

from __future__ import annotations

import json
import math
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

DENOISER_KINDS = ("builtin-gaussian", "builtin-median", "external-command")

_external_lock = threading.Lock()


class DenoiserError(RuntimeError):
    """External denoiser failed; carries the subprocess diagnostics."""


@dataclass(frozen=True)
class TvProxConfig:
    """TV regularisation weight plus the inner FGP iteration budget."""

    alpha: float
    inner_iterations: int = 10
    warm_start: bool = True
    nonneg: bool = True

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.inner_iterations < 1:
            raise ValueError("inner_iterations must be >= 1")


@dataclass
class TvDualState:
    """FGP dual fields carried across warm-started proximal calls.

    ``weight`` records the scaled TV weight the duals were computed for;
    a call with a different weight (beyond relative 1e-12) restarts from
    zeros.  Momentum is not persisted: each call restarts t at 1.
    """

    p: np.ndarray
    q: np.ndarray
    weight: float


def _forward_diff(img):
    gv = np.zeros_like(img)
    gh = np.zeros_like(img)
    gv[:-1, :] = img[1:, :] - img[:-1, :]
    gh[:, :-1] = img[:, 1:] - img[:, :-1]
    return gv, gh


def _diff_adjoint(gv, gh):
    out = np.zeros_like(gv)
    out[:-1, :] -= gv[:-1, :]
    out[1:, :] += gv[:-1, :]
    out[:, :-1] -= gh[:, :-1]
    out[:, 1:] += gh[:, :-1]
    return out


def tv_value(image) -> float:
    """Isotropic TV with forward differences and replicate boundary."""
    gv, gh = _forward_diff(np.asarray(image, dtype=np.float64))
    return float(np.sqrt(gv * gv + gh * gh).sum())


def nonneg_prox(image) -> np.ndarray:
    """Pointwise projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(image, dtype=np.float64), 0.0)


def tv_prox(image, tau: float, config: TvProxConfig,
            warm: TvDualState | None = None) -> tuple[np.ndarray, TvDualState]:
    """Proximal map of ``tau * alpha * TV`` (plus nonnegativity if configured).

    Runs exactly ``config.inner_iterations`` FGP iterations on the dual,
    starting from ``warm`` when it matches the current weight, and returns
    the primal estimate together with the final dual state.
    """
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    image = np.asarray(image, dtype=np.float64)
    lam = tau * config.alpha
    if (warm is not None and warm.p.shape == image.shape
            and abs(warm.weight - lam) <= 1e-12 * abs(lam)):
        p, q = warm.p.copy(), warm.q.copy()
    else:
        p, q = np.zeros_like(image), np.zeros_like(image)
    r, s = p.copy(), q.copy()
    p_prev, q_prev = p, q
    t = 1.0
    step = 1.0 / (8.0 * lam)
    nonneg = config.nonneg
    for _ in range(config.inner_iterations):
        u = image - lam * _diff_adjoint(r, s)
        if nonneg:
            np.maximum(u, 0.0, out=u)
        gv, gh = _forward_diff(u)
        ph = r + step * gv
        qh = s + step * gh
        # overflow to inf is harmless here: the pair projects to zero,
        # which is the correct vanishing-weight limit
        with np.errstate(over="ignore"):
            scale = np.maximum(1.0, np.sqrt(ph * ph + qh * qh))
        p = ph / scale
        q = qh / scale
        t_next = (1.0 + math.sqrt(1.0 + 4.0 * t * t)) / 2.0
        beta = (t - 1.0) / t_next
        r = p + beta * (p - p_prev)
        s = q + beta * (q - q_prev)
        p_prev, q_prev, t = p, q, t_next
    out = image - lam * _diff_adjoint(p, q)
    if nonneg:
        np.maximum(out, 0.0, out=out)
    return out, TvDualState(p=p, q=q, weight=lam)


@dataclass(frozen=True)
class DenoiserSpec:
    """Plug-and-play denoiser: a builtin filter or an external command.

    External commands receive one JSON line {"width", "height", "sigma"}
    followed by raw little-endian float64 pixels on stdin and must write
    raw little-endian float64 pixels to stdout.
    """

    kind: str
    sigma: float
    command: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in DENOISER_KINDS:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.kind == "external-command" and not self.command:
            raise ValueError("external-command denoiser needs a command")


def apply_denoiser(image, spec: DenoiserSpec) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if spec.kind == "builtin-gaussian":
        return ndimage.gaussian_filter(image, sigma=spec.sigma, mode="nearest")
    if spec.kind == "builtin-median":
        return ndimage.median_filter(image, size=3, mode="nearest")
    return _run_external(image, spec)


def _run_external(image, spec):
    height, width = image.shape
    header = json.dumps(
        {"width": width, "height": height, "sigma": spec.sigma}, sort_keys=True
    )
    payload = header.encode() + b"\n" + image.astype("<f8").tobytes()
    with _external_lock:
        try:
            proc = subprocess.run(list(spec.command), input=payload,
                                  capture_output=True)
        except OSError as exc:
            raise DenoiserError(f"could not launch denoiser {spec.command}: {exc}") from exc
    if proc.returncode != 0:
        raise DenoiserError(
            f"denoiser exited with status {proc.returncode}: "
            f"{proc.stderr.decode(errors='replace').strip()}"
        )
    flat = np.frombuffer(proc.stdout, dtype="<f8")
    if flat.size != image.size:
        raise DenoiserError(
            f"denoiser returned {flat.size} values, expected {image.size}"
        )
    return flat.reshape(image.shape).astype(np.float64)


def skip_sigma(sigma_nonskip: float, p: float) -> float:
    """Denoiser strength for a skipped run: sigma / sqrt(p).

    Keeps the image quality of a prox-skipping run comparable to the
    non-skipped run that uses ``sigma_nonskip``.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must be in (0, 1]")
    if sigma_nonskip <= 0.0:
        raise ValueError("sigma_nonskip must be positive")
    return sigma_nonskip / math.sqrt(p)
