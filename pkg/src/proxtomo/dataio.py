"""File formats: JSON metadata + raw little-endian float64 payloads, PGM previews.

An image or sinogram on disk is a JSON metadata file that references a
sibling ``<name>.raw`` payload holding the row-major float64 values.
Sinogram metadata embeds the scan geometry (n_angles, angles when
non-uniform, n_bins, bin_spacing, pixel_size).
"""

from __future__ import annotations

import json
import os

import numpy as np

from .geometry import ParallelGeometry


def _write_payload(meta_path: str, values: np.ndarray) -> str:
    raw_name = os.path.basename(meta_path) + ".raw"
    raw_path = os.path.join(os.path.dirname(os.path.abspath(meta_path)), raw_name)
    with open(raw_path, "wb") as handle:
        handle.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return raw_name


def _read_payload(meta_path: str, meta: dict, expected: int) -> np.ndarray:
    raw_path = os.path.join(os.path.dirname(os.path.abspath(meta_path)),
                            meta["payload"])
    with open(raw_path, "rb") as handle:
        blob = handle.read()
    flat = np.frombuffer(blob, dtype="<f8")
    if flat.size != expected:
        raise ValueError(
            f"payload {meta['payload']} holds {flat.size} values, expected {expected}"
        )
    return flat.astype(np.float64)


def _write_meta(path: str, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(meta, handle, sort_keys=True, indent=2)
        handle.write("\n")


def _read_meta(path: str, kind: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            meta = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"malformed metadata in {path}: {exc}") from exc
    if not isinstance(meta, dict) or meta.get("kind") != kind:
        raise ValueError(f"{path} is not a {kind} file")
    return meta


def save_image(path: str, image) -> None:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("image must be 2D")
    meta = {
        "kind": "image",
        "width": image.shape[1],
        "height": image.shape[0],
        "payload": _write_payload(path, image),
    }
    _write_meta(path, meta)


def load_image(path: str) -> np.ndarray:
    meta = _read_meta(path, "image")
    try:
        width, height = int(meta["width"]), int(meta["height"])
    except KeyError as exc:
        raise ValueError(f"image metadata missing key {exc}") from exc
    return _read_payload(path, meta, width * height).reshape(height, width)


def save_sinogram(path: str, values, geometry: ParallelGeometry) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (geometry.n_angles, geometry.n_bins):
        raise ValueError(
            f"sinogram shape {values.shape} does not match geometry "
            f"({geometry.n_angles}, {geometry.n_bins})"
        )
    meta = {
        "kind": "sinogram",
        "n_angles": geometry.n_angles,
        "n_bins": geometry.n_bins,
        "bin_spacing": geometry.bin_spacing,
        "pixel_size": geometry.pixel_size,
        "payload": _write_payload(path, values),
    }
    if not geometry.is_uniform():
        meta["angles"] = list(geometry.angles)
    _write_meta(path, meta)


def load_sinogram(path: str) -> tuple[np.ndarray, ParallelGeometry]:
    meta = _read_meta(path, "sinogram")
    try:
        n_angles = int(meta["n_angles"])
        n_bins = int(meta["n_bins"])
        bin_spacing = float(meta["bin_spacing"])
        pixel_size = float(meta["pixel_size"])
    except KeyError as exc:
        raise ValueError(f"sinogram metadata missing key {exc}") from exc
    if "angles" in meta:
        if len(meta["angles"]) != n_angles:
            raise ValueError("angles list does not match n_angles")
        geometry = ParallelGeometry(tuple(meta["angles"]), n_bins,
                                    bin_spacing, pixel_size)
    else:
        geometry = ParallelGeometry.uniform(n_angles, n_bins,
                                            bin_spacing, pixel_size)
    values = _read_payload(path, meta, n_angles * n_bins)
    return values.reshape(n_angles, n_bins), geometry


def save_pgm(path: str, image) -> None:
    """8-bit binary PGM preview, min-max normalised; constant images map to 0."""
    image = np.asarray(image, dtype=np.float64)
    lo, hi = float(image.min()), float(image.max())
    if hi > lo:
        scaled = np.round((image - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(image)
    data = scaled.astype(np.uint8)
    with open(path, "wb") as handle:
        handle.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode())
        handle.write(data.tobytes())
