"""Scan geometry and angle-subset bookkeeping for 2D parallel-beam CT."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ParallelGeometry:
    """Parallel-beam layout: projection angles plus a linear detector centred
    on the rotation axis.

    angles are radians in [0, pi), strictly increasing; bin_spacing and
    pixel_size are in the same length unit.
    """

    angles: tuple[float, ...]
    n_bins: int
    bin_spacing: float = 1.0
    pixel_size: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        if len(self.angles) < 1:
            raise ValueError("geometry needs at least one projection angle")
        if any(b <= a for a, b in zip(self.angles, self.angles[1:])):
            raise ValueError("angles must be strictly increasing")
        if self.angles[0] < 0.0 or self.angles[-1] >= math.pi:
            raise ValueError("angles must lie in [0, pi)")
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if self.bin_spacing <= 0.0 or self.pixel_size <= 0.0:
            raise ValueError("bin_spacing and pixel_size must be positive")

    @property
    def n_angles(self) -> int:
        return len(self.angles)

    @classmethod
    def uniform(cls, n_angles: int, n_bins: int, bin_spacing: float = 1.0,
                pixel_size: float = 1.0) -> "ParallelGeometry":
        """Geometry with n_angles views uniformly covering [0, pi)."""
        if n_angles < 1:
            raise ValueError("n_angles must be >= 1")
        angles = tuple(i * math.pi / n_angles for i in range(n_angles))
        return cls(angles, n_bins, bin_spacing, pixel_size)

    def is_uniform(self, rtol: float = 1e-12) -> bool:
        ref = ParallelGeometry.uniform(self.n_angles, self.n_bins)
        return all(abs(a - b) <= rtol * math.pi for a, b in zip(self.angles, ref.angles))


@dataclass(frozen=True)
class SubsetPartition:
    """Disjoint split of the angle indices into interleaved subsets.

    Subset k holds the indices {k, k+N, k+2N, ...}, so every subset sees
    views spread across the whole angular range.
    """

    n_angles: int
    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = sorted(i for sub in self.subsets for i in sub)
        if seen != list(range(self.n_angles)):
            raise ValueError("subsets must partition range(n_angles)")

    @property
    def n_subsets(self) -> int:
        return len(self.subsets)


def build_staggered_partition(n_angles: int, n_subsets: int) -> SubsetPartition:
    """Build the staggered partition: subset k = {k, k+N, k+2N, ...}."""
    if n_subsets < 1 or n_subsets > n_angles:
        raise ValueError(
            f"n_subsets must be in [1, n_angles], got {n_subsets} for {n_angles} angles"
        )
    subsets = tuple(tuple(range(k, n_angles, n_subsets)) for k in range(n_subsets))
    return SubsetPartition(n_angles, subsets)
