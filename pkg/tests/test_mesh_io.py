import numpy as np
import pytest

from intrinsics4d.render.analytic import empty_field, sphere_field
from intrinsics4d.render.imageio import read_pfm, srgb_encode, write_pfm, write_png
from intrinsics4d.render.mesh import TriangleMesh, marching_cubes, read_obj, write_obj


def test_marching_cubes_sphere_radius():
    mesh = marching_cubes(sphere_field(radius=0.5), 0.0, 64)
    r = np.linalg.norm(mesh.vertices, axis=1)
    cell = 2.0 / 64
    assert len(mesh.vertices) > 1000
    assert np.all(np.abs(r - 0.5) < 2 * cell)


def test_marching_cubes_empty_when_no_sign_change():
    mesh = marching_cubes(empty_field(), 0.0, 16)
    assert len(mesh.vertices) == 0 and len(mesh.faces) == 0


def test_marching_cubes_rejects_low_resolution():
    with pytest.raises(ValueError):
        marching_cubes(sphere_field(), 0.0, 4)


def test_marching_cubes_sphere_topology():
    # watertight sphere: V - E + F = 2
    mesh = marching_cubes(sphere_field(radius=0.5), 0.0, 32)
    assert mesh.euler_characteristic() == 2


def test_marching_cubes_outward_orientation():
    mesh = marching_cubes(sphere_field(radius=0.5), 0.0, 32)
    v = mesh.vertices[mesh.faces]
    signed_volume = np.sum(np.einsum("ij,ij->i", v[:, 0], np.cross(v[:, 1], v[:, 2]))) / 6.0
    assert signed_volume > 0
    assert abs(signed_volume - 4 / 3 * np.pi * 0.5**3) < 0.05


def test_obj_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    mesh = TriangleMesh(
        vertices=rng.normal(size=(5, 3)),
        faces=np.array([[0, 1, 2], [2, 3, 4]]),
        colors=rng.random((5, 3)),
    )
    p = tmp_path / "m.obj"
    write_obj(p, mesh)
    back = read_obj(p)
    assert np.allclose(back.vertices, mesh.vertices, atol=1e-6)
    assert np.array_equal(back.faces, mesh.faces)
    assert np.allclose(back.colors, mesh.colors, atol=1e-5)


def test_pfm_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.random((6, 9, 3)).astype(np.float32).astype(np.float64)
    p = tmp_path / "i.pfm"
    write_pfm(p, img)
    back = read_pfm(p)
    assert back.shape == img.shape
    assert np.allclose(back, img, atol=1e-7)


def test_png_writes_valid_signature(tmp_path):
    img = np.zeros((4, 4, 3))
    img[1, 2] = [1.0, 0.5, 0.2]
    p = tmp_path / "i.png"
    write_png(p, img)
    raw = p.read_bytes()
    assert raw[:8] == b"\x89PNG\r\n\x1a\n"
    assert b"IHDR" in raw and b"IEND" in raw


def test_srgb_transfer_endpoints():
    assert srgb_encode(np.array([0.0]))[0] == 0.0
    assert abs(srgb_encode(np.array([1.0]))[0] - 1.0) < 1e-12
    # linear segment near zero
    assert np.allclose(srgb_encode(np.array([1e-4])), 12.92e-4, atol=1e-9)
