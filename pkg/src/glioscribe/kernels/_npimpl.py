"""Vectorized numpy/scipy fallback implementations of the voxel kernels.

These mirror the numba kernels in `_jitimpl` exactly (same conventions,
same outputs); equivalence is asserted in the test suite.
"""

import numpy as np
from scipy import ndimage

_STRUCT_RANK = {6: 1, 18: 2, 26: 3}


def label_components(mask, connectivity):
    """Raw component labeling (arbitrary label order, canonicalized by caller)."""
    structure = ndimage.generate_binary_structure(3, _STRUCT_RANK[connectivity])
    labels, _ = ndimage.label(mask, structure=structure)
    return labels.astype(np.int32)


def edt(mask, spacing):
    """Euclidean distance (mm) from each nonzero voxel to the nearest zero voxel.

    Zero voxels map to 0. A mask with no zero voxels anywhere yields +inf.
    """
    if not mask.any():
        return np.zeros(mask.shape, np.float64)
    if mask.all():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(mask, sampling=spacing).astype(np.float64)


def nn_gather(labels, coords):
    """Nearest-neighbor sampling of `labels` at continuous voxel coords (N,3).

    Out-of-bounds samples return 0.
    """
    idx = np.rint(coords).astype(np.int64)
    nx, ny, nz = labels.shape
    valid = (
        (idx[:, 0] >= 0) & (idx[:, 0] < nx)
        & (idx[:, 1] >= 0) & (idx[:, 1] < ny)
        & (idx[:, 2] >= 0) & (idx[:, 2] < nz)
    )
    out = np.zeros(coords.shape[0], labels.dtype)
    iv = idx[valid]
    out[valid] = labels[iv[:, 0], iv[:, 1], iv[:, 2]]
    return out
