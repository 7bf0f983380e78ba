"""Discrete 2D parallel-beam Radon transform and its exact algebraic adjoint.

Ray-driven discretisation: one ray per detector bin through the bin centre,
sampled with linear interpolation along the image axis most orthogonal to
the ray direction (Joseph-style).  The image grid is centred on the rotation
axis; rays outside the grid contribute zero.

Forward and adjoint share one sparse-matrix representation per
(geometry, grid) pair, so ``<A x, y> == <x, A^T y>`` holds to machine
precision and subset restriction is plain row slicing.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .geometry import ParallelGeometry

DENSE_ENTRY_CAP = 10**7


def _angle_entries(theta, n_bins, width, height, bin_spacing, pixel_size):
    """COO entries (bin index, flat pixel index, weight) for one view."""
    s = (np.arange(n_bins) - (n_bins - 1) / 2.0) * bin_spacing
    cos_t = math.cos(theta)
    sin_t = math.sin(theta)
    h = pixel_size
    if abs(cos_t) >= abs(sin_t):
        # ray advances mostly along image rows: one sample per row,
        # linear interpolation between the two neighbouring columns
        n_steps, n_lanes = height, width
        axis_coord = (np.arange(height) - (height - 1) / 2.0) * h
        cross = (s[:, None] - axis_coord[None, :] * sin_t) / cos_t
        step_len = h / abs(cos_t)
        flat_base = np.arange(height) * width  # row start offsets
        lane_stride = 1
    else:
        n_steps, n_lanes = width, height
        axis_coord = (np.arange(width) - (width - 1) / 2.0) * h
        cross = (s[:, None] - axis_coord[None, :] * cos_t) / sin_t
        step_len = h / abs(sin_t)
        flat_base = np.arange(width)  # column offsets
        lane_stride = width

    pos = cross / h + (n_lanes - 1) / 2.0
    lane0 = np.floor(pos).astype(np.int64)
    frac = pos - lane0
    bins = np.broadcast_to(np.arange(n_bins)[:, None], pos.shape)
    base = np.broadcast_to(flat_base[None, :], pos.shape)

    rows, cols, weights = [], [], []
    for lane, w in ((lane0, (1.0 - frac) * step_len), (lane0 + 1, frac * step_len)):
        keep = (lane >= 0) & (lane < n_lanes) & (w > 0.0)
        rows.append(bins[keep])
        cols.append(base[keep] + lane[keep] * lane_stride)
        weights.append(w[keep])
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(weights)


class _OperatorTables:
    """Cached sparse forward matrix, its transpose, and per-subset slices."""

    def __init__(self, geometry: ParallelGeometry, width: int, height: int):
        rows, cols, weights = [], [], []
        for a, theta in enumerate(geometry.angles):
            r, c, w = _angle_entries(theta, geometry.n_bins, width, height,
                                     geometry.bin_spacing, geometry.pixel_size)
            rows.append(r + a * geometry.n_bins)
            cols.append(c)
            weights.append(w)
        shape = (geometry.n_angles * geometry.n_bins, width * height)
        matrix = sp.coo_matrix(
            (np.concatenate(weights), (np.concatenate(rows), np.concatenate(cols))),
            shape=shape,
        ).tocsr()
        matrix.sort_indices()
        self.n_bins = geometry.n_bins
        self.matrix = matrix
        self.matrix_t = matrix.T.tocsr()
        self._subset_cache: dict[tuple[int, ...], tuple[sp.csr_matrix, sp.csr_matrix]] = {}

    def pair(self, subset):
        """(forward, adjoint) matrices for a subset of angle indices."""
        if subset is None:
            return self.matrix, self.matrix_t
        key = tuple(int(i) for i in subset)
        if key not in self._subset_cache:
            rows = np.concatenate(
                [np.arange(a * self.n_bins, (a + 1) * self.n_bins) for a in key]
            )
            sub = self.matrix[rows]
            self._subset_cache[key] = (sub, sub.T.tocsr())
        return self._subset_cache[key]


@lru_cache(maxsize=8)
def _tables(geometry: ParallelGeometry, width: int, height: int) -> _OperatorTables:
    return _OperatorTables(geometry, width, height)


def _check_subset(subset, n_angles):
    if subset is None:
        return None
    subset = tuple(int(i) for i in subset)
    if any(i < 0 or i >= n_angles for i in subset):
        raise ValueError(f"angle index out of range [0, {n_angles})")
    return subset


def forward_project(image, geometry: ParallelGeometry, subset=None) -> np.ndarray:
    """Project an image to sinogram rows: line integrals along every ray.

    ``subset`` (optional angle-index sequence) restricts the output to those
    angle rows, in the given order.  Output shape is (n_selected, n_bins).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"image must be 2D, got shape {image.shape}")
    subset = _check_subset(subset, geometry.n_angles)
    matrix, _ = _tables(geometry, image.shape[1], image.shape[0]).pair(subset)
    out = matrix @ image.ravel()
    return out.reshape(-1, geometry.n_bins)


def back_project(sino, geometry: ParallelGeometry, shape, subset=None) -> np.ndarray:
    """Exact adjoint of :func:`forward_project` onto a (height, width) grid."""
    sino = np.asarray(sino, dtype=np.float64)
    subset = _check_subset(subset, geometry.n_angles)
    n_rows = geometry.n_angles if subset is None else len(subset)
    if sino.shape != (n_rows, geometry.n_bins):
        raise ValueError(
            f"sinogram shape {sino.shape} does not match ({n_rows}, {geometry.n_bins})"
        )
    height, width = shape
    _, matrix_t = _tables(geometry, width, height).pair(subset)
    return (matrix_t @ sino.ravel()).reshape(height, width)


class Projector:
    """Forward/adjoint pair bound to one geometry and image grid."""

    def __init__(self, geometry: ParallelGeometry, width: int, height: int):
        self.geometry = geometry
        self.width = int(width)
        self.height = int(height)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def forward(self, image, subset=None) -> np.ndarray:
        return forward_project(image, self.geometry, subset)

    def adjoint(self, sino, subset=None) -> np.ndarray:
        return back_project(sino, self.geometry, self.shape, subset)

    def norm_sq(self, iterations: int = 100, seed: int = 0) -> float:
        return operator_norm_sq(self.geometry, self.width, self.height,
                                iterations=iterations, seed=seed)

    def __reduce__(self):
        # cacheable state only; the sparse tables rebuild lazily after unpickling
        return (Projector, (self.geometry, self.width, self.height))


def _rayleigh_power(matrix, matrix_t, v, iterations):
    """Rayleigh-quotient power iteration on A^T A; returns the last estimate."""
    estimate = 0.0
    for _ in range(iterations):
        u = matrix_t @ (matrix @ v)
        estimate = float(v @ u) / float(v @ v)
        norm = math.sqrt(float(u @ u))
        if norm == 0.0:
            return 0.0
        v = u / norm
    return estimate


def operator_norm_sq(geometry: ParallelGeometry, width: int, height: int,
                     iterations: int = 100, seed: int = 0) -> float:
    """Power-method estimate of the squared spectral norm of the projector.

    The Rayleigh-quotient sequence is non-decreasing and lower-bounds the
    true value; the result is deterministic for a given seed.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    tables = _tables(geometry, width, height)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(width * height)
    while not np.any(v):
        v = rng.standard_normal(width * height)
    return _rayleigh_power(tables.matrix, tables.matrix_t, v, iterations)


def assemble_dense(geometry: ParallelGeometry, width: int, height: int,
                   cap: int = DENSE_ENTRY_CAP) -> np.ndarray:
    """Dense system matrix, column j = forward projection of basis image j.

    Desk-scale only; refuses when the entry count would exceed ``cap``.
    """
    n_rows = geometry.n_angles * geometry.n_bins
    n_cols = width * height
    if n_rows * n_cols > cap:
        raise ValueError(
            f"dense matrix would hold {n_rows * n_cols} entries (cap {cap})"
        )
    dense = np.empty((n_rows, n_cols))
    basis = np.zeros((height, width))
    for j in range(n_cols):
        basis.flat[j] = 1.0
        dense[:, j] = forward_project(basis, geometry).ravel()
        basis.flat[j] = 0.0
    return dense
