import socket

import numpy as np
import pytest

from glioscribe.config import PipelineConfig
from glioscribe.features import assemble_feature_set
from glioscribe.midline import ideal_midline, midline_deviation
from glioscribe.segstats import merge_segmentations, normalize_tumor_labels
from glioscribe.volume import LabelVolume

_LOOPBACK_HOSTS = ("127.0.0.1", "localhost", "::1")


@pytest.fixture(scope="session", autouse=True)
def forbid_external_network():
    """The suite must run air-gapped: refuse sockets to non-loopback hosts.
    Unix domain sockets (string addresses) are local and stay allowed."""
    real_connect = socket.socket.connect

    def guarded_connect(self, address, *args, **kwargs):
        if isinstance(address, tuple) and address[0] not in _LOOPBACK_HOSTS:
            raise RuntimeError(
                f"test suite attempted external network access: {address!r}")
        return real_connect(self, address, *args, **kwargs)

    socket.socket.connect = guarded_connect
    try:
        yield
    finally:
        socket.socket.connect = real_connect


def centered_affine(n, spacing=(1.0, 1.0, 1.0)):
    """Diagonal affine placing voxel (n//2, n//2, n//2) at world (0,0,0)."""
    a = np.diag([spacing[0], spacing[1], spacing[2], 1.0])
    a[:3, 3] = [-spacing[i] * (n // 2) for i in range(3)]
    return a


def make_anatomy(n=64, spacing=(1.0, 1.0, 1.0), extra=None):
    """Block-and-spheres brain stand-in on an n^3 grid.

    Left half white matter, right half white matter, cortex rinds at the
    lateral faces, one spherical lateral ventricle per side. `extra` is a
    list of (value, mask_fn) painted on top.
    """
    aff = centered_affine(n, spacing)
    x, y, z = np.meshgrid(*[np.arange(n)] * 3, indexing="ij")
    c = n // 2
    q = n // 4
    anat = np.zeros((n, n, n), np.int32)
    anat[x < c] = 2
    anat[x >= c] = 41
    anat[x < 4] = 3
    anat[x >= n - 4] = 42
    r2 = (n // 10) ** 2
    anat[(x - (c - q // 2)) ** 2 + (y - c) ** 2 + (z - c) ** 2 < r2] = 4
    anat[(x - (c + q // 2)) ** 2 + (y - c) ** 2 + (z - c) ** 2 < r2] = 43
    if extra:
        for value, fn in extra:
            anat[fn(x, y, z)] = value
    return LabelVolume(anat, aff, scheme=PipelineConfig().anatomy_scheme)


def make_tumor(n=64, spacing=(1.0, 1.0, 1.0), center=None, r_ed=12, r_et=8,
               r_ncr=4, extra_et=()):
    """BraTS-style nested sphere tumor; extra_et adds (center, radius) blobs."""
    aff = centered_affine(n, spacing)
    if center is None:
        center = (n // 2 + n // 5, n // 2, n // 2)
    x, y, z = np.meshgrid(*[np.arange(n)] * 3, indexing="ij")
    tum = np.zeros((n, n, n), np.int16)

    def ball(ctr, r):
        return ((x - ctr[0]) ** 2 + (y - ctr[1]) ** 2
                + (z - ctr[2]) ** 2) < r * r

    if r_ed:
        tum[ball(center, r_ed)] = 2
    if r_et:
        tum[ball(center, r_et)] = 3
    if r_ncr:
        tum[ball(center, r_ncr)] = 1
    for ctr, r in extra_et:
        tum[ball(ctr, r)] = 3
    return normalize_tumor_labels(LabelVolume(tum, aff),
                                  {"NCR": 1, "ED": 2, "ET": 3})


def make_midline(n=64, spacing=(1.0, 1.0, 1.0), bump_mm=0.0,
                 direction="Left", z_band=None, y_margin=8):
    """Parasagittal sheet at the voxel midplane, optionally bowed sideways
    by bump_mm over z_band with the per-slice endpoints left in place."""
    aff = centered_affine(n, spacing)
    c = n // 2
    if z_band is None:
        z_band = (c - 4, c + 4)
    bump_vox = int(round(bump_mm / spacing[0]))
    sign = -1 if direction == "Left" else 1
    mid = np.zeros((n, n, n), np.uint8)
    for zz in range(2, n - 2):
        for yy in range(y_margin, n - y_margin):
            dx = 0
            inside_band = z_band[0] <= zz < z_band[1]
            interior_y = y_margin + 2 <= yy < n - y_margin - 2
            if inside_band and interior_y:
                dx = sign * bump_vox
            mid[c + dx, yy, zz] = 1
    return LabelVolume(mid, aff)


def make_case(n=64, spacing=(1.0, 1.0, 1.0), bump_mm=6.0, direction="Left",
              tumor_kwargs=None, cfg=None):
    """Anatomy + tumor + midline merged, with ideal line and deviation."""
    anatomy = make_anatomy(n, spacing)
    tumor = make_tumor(n, spacing, **(tumor_kwargs or {}))
    mid = make_midline(n, spacing, bump_mm=bump_mm, direction=direction)
    merged = merge_segmentations(anatomy, tumor, mid)
    ideal = ideal_midline(mid)
    result = midline_deviation(mid, ideal)
    return merged, ideal, result


def make_feature_set(subject_id="case-01", cfg=None, **case_kwargs):
    cfg = cfg or PipelineConfig(atlas_reference_ml=1.0)
    merged, ideal, result = make_case(**case_kwargs)
    return assemble_feature_set(subject_id, merged, ideal=ideal,
                                midline_result=result, cfg=cfg)


@pytest.fixture(scope="session")
def warmed_kernels():
    """Touch every kernel once so timed tests never pay compile cost."""
    from glioscribe import kernels
    m = np.zeros((4, 4, 4), bool)
    m[1:3, 1:3, 1:3] = True
    for conn in (6, 18, 26):
        kernels.label_components(m, connectivity=conn)
    kernels.edt(m, (1.0, 1.0, 1.0))
    kernels.nn_gather(m.astype(np.int32), np.zeros((2, 3)))
    return kernels.active_backend()
