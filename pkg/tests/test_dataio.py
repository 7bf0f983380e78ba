import json

import numpy as np
import pytest

from proxtomo import ParallelGeometry
from proxtomo.dataio import (load_image, load_sinogram, save_image, save_pgm,
                             save_sinogram)


def test_image_roundtrip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.standard_normal((7, 11))
    path = tmp_path / "img.img"
    save_image(path.as_posix(), image)
    loaded = load_image(path.as_posix())
    assert loaded.shape == (7, 11)
    assert np.array_equal(loaded, image)


def test_image_save_is_byte_deterministic(tmp_path):
    rng = np.random.default_rng(1)
    image = rng.standard_normal((5, 5))
    a = tmp_path / "a.img"
    b = tmp_path / "b.img"
    save_image(a.as_posix(), image)
    save_image(b.as_posix(), image)
    assert a.read_bytes() == b.read_bytes().replace(b"b.img.raw", b"a.img.raw")
    assert (tmp_path / "a.img.raw").read_bytes() == (tmp_path / "b.img.raw").read_bytes()


def test_sinogram_roundtrip_uniform_geometry_omits_angles(tmp_path):
    geom = ParallelGeometry.uniform(9, 13, bin_spacing=0.5, pixel_size=0.25)
    rng = np.random.default_rng(2)
    sino = rng.standard_normal((9, 13))
    path = tmp_path / "s.sino"
    save_sinogram(path.as_posix(), sino, geom)
    meta = json.loads(path.read_text())
    assert "angles" not in meta
    loaded, loaded_geom = load_sinogram(path.as_posix())
    assert np.array_equal(loaded, sino)
    assert loaded_geom == geom


def test_sinogram_roundtrip_custom_angles(tmp_path):
    geom = ParallelGeometry((0.0, 0.4, 1.1, 2.0), 6, bin_spacing=2.0)
    sino = np.arange(24, dtype=float).reshape(4, 6)
    path = tmp_path / "s.sino"
    save_sinogram(path.as_posix(), sino, geom)
    meta = json.loads(path.read_text())
    assert meta["angles"] == [0.0, 0.4, 1.1, 2.0]
    loaded, loaded_geom = load_sinogram(path.as_posix())
    assert np.array_equal(loaded, sino)
    assert loaded_geom == geom


def test_truncated_payload_reports_length(tmp_path):
    image = np.ones((4, 4))
    path = tmp_path / "img.img"
    save_image(path.as_posix(), image)
    raw = tmp_path / "img.img.raw"
    raw.write_bytes(raw.read_bytes()[:-8])
    with pytest.raises(ValueError, match="15 values, expected 16"):
        load_image(path.as_posix())


def test_malformed_metadata(tmp_path):
    path = tmp_path / "bad.img"
    path.write_text("not json {")
    with pytest.raises(ValueError, match="malformed"):
        load_image(path.as_posix())
    path.write_text(json.dumps({"kind": "sinogram"}))
    with pytest.raises(ValueError, match="not a image"):
        load_image(path.as_posix())
    path.write_text(json.dumps({"kind": "image", "width": 4}))
    with pytest.raises(ValueError, match="missing key"):
        load_image(path.as_posix())


def test_kind_mismatch(tmp_path):
    geom = ParallelGeometry.uniform(3, 5)
    path = tmp_path / "s.sino"
    save_sinogram(path.as_posix(), np.zeros((3, 5)), geom)
    with pytest.raises(ValueError):
        load_image(path.as_posix())


def test_payload_is_little_endian_float64(tmp_path):
    image = np.array([[1.0, -2.5]])
    path = tmp_path / "img.img"
    save_image(path.as_posix(), image)
    blob = (tmp_path / "img.img.raw").read_bytes()
    assert blob == np.array([1.0, -2.5]).astype("<f8").tobytes()


def test_pgm_preview(tmp_path):
    image = np.array([[0.0, 0.5], [1.0, 0.25]])
    path = tmp_path / "img.pgm"
    save_pgm(path.as_posix(), image)
    blob = path.read_bytes()
    assert blob.startswith(b"P5\n2 2\n255\n")
    assert list(blob[-4:]) == [0, 128, 255, 64]


def test_pgm_constant_image_maps_to_zero(tmp_path):
    path = tmp_path / "const.pgm"
    save_pgm(path.as_posix(), np.full((3, 3), 7.7))
    assert path.read_bytes()[-9:] == bytes(9)
