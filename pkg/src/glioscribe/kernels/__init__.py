"""Hot voxel kernels: connected components, distance transform, NN gather.

Two interchangeable backends:

* ``numba``: handwritten loops compiled with ``@njit(cache=True)`` (default
  when numba imports cleanly)
* ``numpy``: vectorized numpy/scipy.ndimage fallback

Set ``GLIOSCRIBE_NO_NUMBA=1`` before import to force the fallback. Every
public function also takes an explicit ``backend=`` override, used by the
equivalence tests and by ``benchmarks/bench_kernels.py``.
"""

import os

import numpy as np

from . import _npimpl

if os.environ.get("GLIOSCRIBE_NO_NUMBA", "0") == "1":
    _jitimpl = None
else:
    try:
        from . import _jitimpl
    except ImportError:
        _jitimpl = None

_DEFAULT_BACKEND = "numba" if _jitimpl is not None else "numpy"


def active_backend():
    """Name of the backend used when no explicit override is given."""
    return _DEFAULT_BACKEND


def _impl(backend):
    name = backend or _DEFAULT_BACKEND
    if name == "numba":
        if _jitimpl is None:
            raise RuntimeError("numba backend requested but unavailable")
        return _jitimpl
    if name == "numpy":
        return _npimpl
    raise ValueError(f"unknown kernel backend {name!r}")


def neighbor_offsets(connectivity):
    """Integer neighbor offsets for 6/18/26 connectivity, shape (m, 3)."""
    if connectivity not in (6, 18, 26):
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    offs = []
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                order = abs(di) + abs(dj) + abs(dk)
                if order == 0:
                    continue
                if connectivity == 6 and order > 1:
                    continue
                if connectivity == 18 and order > 2:
                    continue
                offs.append((di, dj, dk))
    return np.array(offs, np.int64)


def _canonical_relabel(raw):
    # Components renumbered 1..K by descending size, ties by first voxel in
    # C scan order, so both backends produce identical labelings.
    flat = raw.ravel()
    uniq, first = np.unique(flat, return_index=True)
    keep = uniq > 0
    uniq = uniq[keep]
    first = first[keep]
    if uniq.size == 0:
        return np.zeros(raw.shape, np.int32), np.zeros(0, np.int64)
    counts = np.bincount(flat, minlength=int(uniq.max()) + 1)[uniq]
    order = np.lexsort((first, -counts))
    mapping = np.zeros(int(uniq.max()) + 1, np.int32)
    mapping[uniq[order]] = np.arange(1, uniq.size + 1, dtype=np.int32)
    return mapping[raw], counts[order].astype(np.int64)


def label_components(mask, connectivity=26, backend=None):
    """3D connected components of a binary mask.

    Parameters
    ----------
    mask : (nx, ny, nz) array, nonzero = foreground
    connectivity : 6, 18 or 26

    Returns
    -------
    labels : int32 array, 0 background, components numbered 1..K by
        descending voxel count (ties broken by first voxel in scan order)
    sizes : int64 array of length K, sizes[k-1] = voxel count of label k
    """
    mask = np.ascontiguousarray(np.asarray(mask) != 0).astype(np.uint8)
    if mask.ndim != 3:
        raise ValueError("mask must be 3D")
    impl = _impl(backend)
    if impl is _jitimpl:
        raw = impl.label_components(mask, connectivity, neighbor_offsets(connectivity))
    else:
        raw = impl.label_components(mask, connectivity)
    return _canonical_relabel(raw)


def edt(mask, spacing=(1.0, 1.0, 1.0), backend=None):
    """Exact Euclidean distance (mm) from each foreground voxel to the
    nearest background voxel center, honoring anisotropic spacing.

    Background voxels map to 0. An all-foreground mask yields +inf.
    """
    mask = np.ascontiguousarray(np.asarray(mask) != 0).astype(np.uint8)
    if mask.ndim != 3:
        raise ValueError("mask must be 3D")
    return _impl(backend).edt(mask, tuple(float(s) for s in spacing))


def nn_gather(labels, coords, backend=None):
    """Sample integer labels at continuous voxel coordinates (N, 3) with
    nearest-neighbor rounding (np.rint convention); out of bounds -> 0."""
    labels = np.ascontiguousarray(labels)
    coords = np.ascontiguousarray(np.asarray(coords, np.float64))
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError("coords must have shape (N, 3)")
    return _impl(backend).nn_gather(labels, coords)
