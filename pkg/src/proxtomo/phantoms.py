"""Ground-truth phantoms, sinogram simulation with noise, and an FBP baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ParallelGeometry
from .projector import back_project, forward_project

# modified Shepp-Logan ellipse table: intensity, semi-axes (a, b),
# centre (x0, y0), rotation in degrees
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.605, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


@dataclass(frozen=True)
class FoamSpec:
    """Cylindrical foam: a solid disc with non-overlapping void bubbles.

    Lengths are fractions of the image half-width; bubbles are placed by
    seeded rejection sampling until ``n_bubbles`` fit or the attempt cap
    is hit.
    """

    size: int
    cylinder_radius: float = 0.9
    n_bubbles: int = 30
    bubble_radius_range: tuple[float, float] = (0.04, 0.12)
    min_separation: float = 0.01
    seed: int = 0
    max_attempts: int = 20000

    def __post_init__(self):
        if self.size < 8:
            raise ValueError("size must be >= 8")
        lo, hi = self.bubble_radius_range
        if not 0.0 < lo <= hi:
            raise ValueError("bubble radii must be positive and ordered")
        if not 0.0 < self.cylinder_radius <= 1.0:
            raise ValueError("cylinder_radius must be in (0, 1]")
        if self.n_bubbles < 0 or self.min_separation < 0:
            raise ValueError("n_bubbles and min_separation must be nonnegative")


@dataclass(frozen=True)
class FoamPhantom:
    image: np.ndarray
    bubbles: tuple[tuple[float, float, float], ...]  # (cx, cy, radius)
    complete: bool  # False when the attempt cap truncated the packing


def _unit_coords(size: int):
    c = (np.arange(size) - (size - 1) / 2.0) * (2.0 / size)
    return np.meshgrid(c, c, indexing="ij")  # (y, x) row-major


def foam_phantom(spec: FoamSpec) -> FoamPhantom:
    """Value 1 inside the cylinder, 0 inside bubbles and outside."""
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.bubble_radius_range
    placed: list[tuple[float, float, float]] = []
    attempts = 0
    while len(placed) < spec.n_bubbles and attempts < spec.max_attempts:
        attempts += 1
        radius = float(rng.uniform(lo, hi))
        reach = spec.cylinder_radius - radius
        if reach <= 0.0:
            continue
        cx, cy = rng.uniform(-reach, reach, size=2)
        if math.hypot(cx, cy) + radius > spec.cylinder_radius:
            continue
        if any(math.hypot(cx - ox, cy - oy) < radius + orad + spec.min_separation
               for ox, oy, orad in placed):
            continue
        placed.append((float(cx), float(cy), radius))
    yy, xx = _unit_coords(spec.size)
    image = (xx * xx + yy * yy <= spec.cylinder_radius ** 2).astype(np.float64)
    for cx, cy, radius in placed:
        image[(xx - cx) ** 2 + (yy - cy) ** 2 <= radius * radius] = 0.0
    return FoamPhantom(image=image, bubbles=tuple(placed),
                       complete=len(placed) >= spec.n_bubbles)


def shepp_logan(size: int) -> np.ndarray:
    """Modified Shepp-Logan head phantom on a size x size grid."""
    if size < 16:
        raise ValueError("size must be >= 16")
    yy, xx = _unit_coords(size)
    y = -yy  # image row 0 at the top, phantom y axis pointing up
    image = np.zeros((size, size))
    for value, a, b, x0, y0, phi_deg in SHEPP_LOGAN_ELLIPSES:
        phi = math.radians(phi_deg)
        cos_p, sin_p = math.cos(phi), math.sin(phi)
        xr = (xx - x0) * cos_p + (y - y0) * sin_p
        yr = -(xx - x0) * sin_p + (y - y0) * cos_p
        image[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += value
    return image


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise with std = level * max(clean sinogram)."""

    level: float
    seed: int = 0
    model: str = "gaussian-additive"

    def __post_init__(self):
        if self.model != "gaussian-additive":
            raise ValueError(f"unknown noise model {self.model!r}")
        if self.level < 0.0:
            raise ValueError("level must be nonnegative")


def simulate_sinogram(phantom, geometry: ParallelGeometry,
                      noise: NoiseSpec | None = None) -> np.ndarray:
    """Forward projection of the phantom, optionally corrupted by noise."""
    clean = forward_project(phantom, geometry)
    if noise is None or noise.level == 0.0:
        return clean
    rng = np.random.default_rng(noise.seed)
    std = noise.level * float(clean.max())
    return clean + std * rng.standard_normal(clean.shape)


def fbp(sino, geometry: ParallelGeometry, shape) -> np.ndarray:
    """Ramp-filtered back-projection baseline for uniformly spaced angles.

    Ram-Lak filtering in the detector frequency domain, pi/n_angles angular
    weighting; meant for preview images and solver initialisation only.
    """
    sino = np.asarray(sino, dtype=np.float64)
    angles = np.asarray(geometry.angles)
    if geometry.n_angles > 1:
        gaps = np.diff(angles)
        if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
            raise ValueError("filtered back-projection needs uniformly spaced angles")
    if sino.shape != (geometry.n_angles, geometry.n_bins):
        raise ValueError(
            f"sinogram shape {sino.shape} does not match geometry "
            f"({geometry.n_angles}, {geometry.n_bins})"
        )
    padded = 1 << max(6, (2 * geometry.n_bins - 1).bit_length())
    freqs = np.fft.rfftfreq(padded, d=geometry.bin_spacing)
    filtered = np.fft.irfft(np.fft.rfft(sino, padded, axis=1) * np.abs(freqs),
                            padded, axis=1)[:, : geometry.n_bins]
    scale = (math.pi / geometry.n_angles
             * geometry.bin_spacing / geometry.pixel_size ** 2)
    return back_project(filtered, geometry, shape) * scale
