import gzip

import numpy as np
import pytest

from glioscribe.nifti import NiftiError, load_nifti, save_nifti
from glioscribe.volume import (
    DisplacementField,
    LabelVolume,
    Volume,
    grids_match,
    to_canonical,
    voxel_to_world,
    world_to_voxel,
)

from .oracles import read_nifti_reference, write_nifti_reference


def test_zero_volume_loads(tmp_path):
    p = tmp_path / "zeros.nii"
    write_nifti_reference(p, np.zeros((4, 4, 4), np.int16), np.eye(4))
    vol = load_nifti(p, kind="scalar")
    assert vol.dims == (4, 4, 4)
    assert vol.data.size == 64
    assert not vol.data.any()


def test_save_load_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(7)
    data = rng.normal(size=(6, 5, 4)).astype(np.float32)
    affine = np.diag([1.0, 2.0, 0.5, 1.0])
    affine[:3, 3] = (-3.0, 1.5, 2.25)
    p = tmp_path / "rt.nii.gz"
    save_nifti(Volume(data, affine), p)
    back = load_nifti(p, kind="scalar")
    np.testing.assert_array_equal(back.data, data)
    np.testing.assert_allclose(back.affine, affine, atol=1e-6)


def test_label_round_trip_against_reference_writer(tmp_path):
    rng = np.random.default_rng(21)
    data = rng.integers(0, 5, size=(7, 6, 5)).astype(np.uint8)
    affine = np.diag([1.0, 1.0, 2.0, 1.0])
    p = tmp_path / "labels.nii.gz"
    write_nifti_reference(p, data, affine)
    vol = load_nifti(p, kind="labels")
    assert isinstance(vol, LabelVolume)
    np.testing.assert_array_equal(vol.data, data)


def test_save_output_readable_by_reference_reader(tmp_path):
    rng = np.random.default_rng(3)
    data = rng.integers(0, 9, size=(5, 7, 6)).astype(np.int32)
    affine = np.diag([0.5, 0.5, 1.0, 1.0])
    affine[:3, 3] = (1.0, -2.0, 3.0)
    for name in ("out.nii", "out.nii.gz"):
        p = tmp_path / name
        save_nifti(LabelVolume(data, affine), p)
        got, got_aff = read_nifti_reference(p)
        np.testing.assert_array_equal(np.asarray(got), data)
        np.testing.assert_allclose(got_aff, affine, atol=1e-5)


def test_big_endian_file_loads(tmp_path):
    data = np.arange(24, dtype=np.int16).reshape(2, 3, 4)
    p = tmp_path / "be.nii"
    write_nifti_reference(p, data, np.eye(4), big_endian=True)
    vol = load_nifti(p, kind="labels")
    np.testing.assert_array_equal(vol.data, data)


def test_scl_slope_applied(tmp_path):
    data = np.arange(8, dtype=np.int16).reshape(2, 2, 2)
    p = tmp_path / "scaled.nii"
    write_nifti_reference(p, data, np.eye(4), scl=(2.5, 1.0))
    vol = load_nifti(p, kind="scalar")
    np.testing.assert_allclose(vol.data, data * 2.5 + 1.0)


def test_gzip_by_suffix(tmp_path):
    data = np.ones((3, 3, 3), np.uint8)
    pz = tmp_path / "a.nii.gz"
    write_nifti_reference(pz, data, np.eye(4))
    raw = pz.read_bytes()
    assert raw[:2] == b"\x1f\x8b"
    assert gzip.decompress(raw)[:4] == b"\x5c\x01\x00\x00"


def test_vector_field_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    vec = rng.normal(size=(4, 5, 6, 1, 3)).astype(np.float32)
    p = tmp_path / "field.nii.gz"
    write_nifti_reference(p, vec, np.eye(4), vector=True)
    field = load_nifti(p)
    assert isinstance(field, DisplacementField)
    np.testing.assert_array_equal(field.vectors, vec[:, :, :, 0, :])

    p2 = tmp_path / "field2.nii.gz"
    save_nifti(field, p2)
    got, _ = read_nifti_reference(p2)
    np.testing.assert_array_equal(got[:, :, :, 0, :], field.vectors)


def test_non_ras_file_is_reoriented_preserving_world_positions(tmp_path):
    data = np.zeros((6, 5, 4), np.uint8)
    data[1, 2, 3] = 7
    affine = np.eye(4)
    affine[0, 0] = -1.0
    affine[:3, 3] = (5.0, 0.0, 0.0)
    p = tmp_path / "flipped.nii"
    write_nifti_reference(p, data, affine)
    vol = load_nifti(p, kind="labels")
    # canonical axes point along +x,+y,+z
    assert all(vol.affine[i, i] > 0 for i in range(3))
    marker = np.argwhere(vol.data == 7)
    assert len(marker) == 1
    world_orig = voxel_to_world(affine, (1, 2, 3))
    world_new = voxel_to_world(vol.affine, marker[0])
    np.testing.assert_allclose(world_new, world_orig, atol=1e-6)


def test_permuted_axes_reoriented(tmp_path):
    data = np.zeros((4, 5, 6), np.uint8)
    data[1, 2, 3] = 9
    affine = np.zeros((4, 4))
    affine[3, 3] = 1.0
    # voxel i moves along world z, j along x, k along y
    affine[2, 0] = 1.0
    affine[0, 1] = 1.0
    affine[1, 2] = 1.0
    p = tmp_path / "perm.nii"
    write_nifti_reference(p, data, affine)
    vol = load_nifti(p, kind="labels")
    assert vol.dims == (5, 6, 4)
    marker = np.argwhere(vol.data == 9)[0]
    np.testing.assert_allclose(voxel_to_world(vol.affine, marker),
                               voxel_to_world(affine, (1, 2, 3)), atol=1e-6)


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.nii"
    write_nifti_reference(p, np.zeros((2, 2, 2), np.uint8), np.eye(4))
    blob = bytearray(p.read_bytes())
    blob[344:348] = b"ni1\x00"
    p.write_bytes(bytes(blob))
    with pytest.raises(NiftiError, match="magic"):
        load_nifti(p)


def test_truncated_file_rejected(tmp_path):
    p = tmp_path / "short.nii"
    p.write_bytes(b"\x00" * 100)
    with pytest.raises(NiftiError, match="shorter"):
        load_nifti(p)


def test_non_integral_labels_rejected(tmp_path):
    p = tmp_path / "f.nii"
    write_nifti_reference(p, np.full((2, 2, 2), 0.5, np.float32), np.eye(4))
    with pytest.raises(NiftiError, match="non-integral"):
        load_nifti(p, kind="labels")


def test_world_to_voxel_identity_and_scaling():
    np.testing.assert_allclose(world_to_voxel(np.eye(4), (0, 0, 0)),
                               (0, 0, 0), atol=1e-12)
    aff = np.diag([2.0, 2.0, 2.0, 1.0])
    np.testing.assert_allclose(world_to_voxel(aff, (4, 4, 4)), (2, 2, 2),
                               atol=1e-12)


def test_world_voxel_inverse_property():
    rng = np.random.default_rng(5)
    for _ in range(20):
        aff = np.eye(4)
        aff[:3, :3] = np.diag(rng.uniform(0.3, 3.0, 3))
        aff[:3, 3] = rng.normal(scale=10, size=3)
        pts = rng.normal(scale=30, size=(6, 3))
        back = np.array([voxel_to_world(aff, world_to_voxel(aff, p))
                         for p in pts])
        np.testing.assert_allclose(back, pts, atol=1e-6)


def test_singular_affine_rejected():
    aff = np.eye(4)
    aff[0, 0] = 0.0
    with pytest.raises(ValueError):
        LabelVolume(np.zeros((2, 2, 2), np.int32), aff)


def test_grids_match():
    a = Volume(np.zeros((3, 3, 3)), np.eye(4))
    b = Volume(np.ones((3, 3, 3)), np.eye(4))
    assert grids_match(a, b)
    c = Volume(np.zeros((3, 3, 3)), np.diag([2.0, 1.0, 1.0, 1.0]))
    assert not grids_match(a, c)


def test_to_canonical_is_idempotent():
    rng = np.random.default_rng(13)
    vol = LabelVolume(rng.integers(0, 3, (4, 5, 6)).astype(np.int32),
                      np.eye(4))
    once = to_canonical(vol)
    twice = to_canonical(once)
    np.testing.assert_array_equal(once.data, twice.data)
    np.testing.assert_allclose(once.affine, twice.affine)
