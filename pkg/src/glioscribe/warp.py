"""Label warping through a dense displacement field.

Each target voxel v samples the source labels at world(v) + field(v) with
nearest-neighbor interpolation; samples landing outside the source grid
become background. Output labels are therefore always a subset of the
input labels plus 0.
"""

import numpy as np

from . import kernels
from .volume import (DisplacementField, GridMismatchError, LabelVolume,
                     voxel_to_world, world_to_voxel)


def apply_displacement_field(labels: LabelVolume, field: DisplacementField,
                             target=None, backend=None) -> LabelVolume:
    """Resample `labels` (atlas grid) onto the field's grid.

    Parameters
    ----------
    labels : LabelVolume on the source (atlas) grid
    field : DisplacementField on the target (subject) grid, vectors in mm
    target : optional grid spec (any object with dims/affine); must equal
        the field grid when given
    backend : kernel backend override, see glioscribe.kernels

    Returns
    -------
    LabelVolume on the target grid carrying the source scheme.
    """
    if target is not None:
        if tuple(target.dims) != tuple(field.dims) or \
                not np.allclose(target.affine, field.affine, atol=1e-3):
            raise GridMismatchError("target grid does not match the field grid")
    nx, ny, nz = field.dims
    src = np.ascontiguousarray(labels.data.astype(np.int32))
    out = np.empty((nx, ny, nz), np.int32)
    # slab the z axis to bound transient memory on full-size grids
    slab = max(1, (1 << 21) // max(1, nx * ny))
    for z0 in range(0, nz, slab):
        z1 = min(nz, z0 + slab)
        ii, jj, kk = np.meshgrid(np.arange(nx), np.arange(ny),
                                 np.arange(z0, z1), indexing="ij")
        idx = np.stack([ii, jj, kk], axis=-1).reshape(-1, 3).astype(np.float64)
        world = voxel_to_world(field.affine, idx)
        world += field.vectors[:, :, z0:z1, :].reshape(-1, 3)
        coords = world_to_voxel(labels.affine, world)
        sampled = kernels.nn_gather(src, coords, backend=backend)
        out[:, :, z0:z1] = sampled.reshape(nx, ny, z1 - z0)
    return LabelVolume(out, field.affine.copy(), scheme=dict(labels.scheme))
