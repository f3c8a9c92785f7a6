"""Core volume types and voxel/world geometry.

Everything downstream assumes canonical RAS orientation: +x Right,
+y Anterior, +z Superior. Volumes loaded from disk are reoriented on load;
`to_canonical` is idempotent. Laterality convention: negative x = Left.

Volumes are immutable after construction and safe to share across threads.
"""

from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Raised when two volumes that must share a grid do not."""


def spacing_from_affine(affine):
    """Voxel spacing in mm as the column norms of the 3x3 block."""
    return np.linalg.norm(np.asarray(affine)[:3, :3], axis=0)


def voxel_to_world(affine, idx):
    """Map voxel indices to world RAS mm. Accepts shape (3,) or (N, 3)."""
    idx = np.asarray(idx, np.float64)
    single = idx.ndim == 1
    pts = np.atleast_2d(idx)
    out = pts @ np.asarray(affine)[:3, :3].T + np.asarray(affine)[:3, 3]
    return out[0] if single else out


def world_to_voxel(affine, pts):
    """Map world RAS mm points to continuous voxel indices (inverse affine)."""
    affine = np.asarray(affine, np.float64)
    try:
        inv = np.linalg.inv(affine)
    except np.linalg.LinAlgError as e:
        raise ValueError("singular affine") from e
    pts = np.asarray(pts, np.float64)
    single = pts.ndim == 1
    p = np.atleast_2d(pts)
    out = p @ inv[:3, :3].T + inv[:3, 3]
    return out[0] if single else out


def _validate_affine(affine):
    affine = np.asarray(affine, np.float64)
    if affine.shape != (4, 4):
        raise ValueError(f"affine must be 4x4, got {affine.shape}")
    if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
        raise ValueError("singular affine")
    if np.any(spacing_from_affine(affine) <= 0):
        raise ValueError("non-positive voxel spacing")
    return affine


@dataclass(frozen=True, eq=False)
class Volume:
    """A 3D scalar volume with a voxel-to-world RAS affine."""

    data: np.ndarray
    affine: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ValueError(f"volume data must be 3D, got shape {data.shape}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "affine", _validate_affine(self.affine))

    @property
    def dims(self):
        return self.data.shape

    @property
    def spacing(self):
        return spacing_from_affine(self.affine)

    @property
    def voxel_ml(self):
        """Volume of one voxel in milliliters."""
        return float(np.prod(self.spacing)) / 1000.0


@dataclass(frozen=True, eq=False)
class LabelVolume(Volume):
    """Integer label volume. 0 is background; every other value present in
    the data must have a name in `scheme`."""

    scheme: dict = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.dtype == bool:
            data = data.astype(np.uint8)
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"label data must be integer, got {data.dtype}")
        if data.size and data.min() < 0:
            raise ValueError("label data must be non-negative")
        object.__setattr__(self, "data", data)
        super().__post_init__()
        scheme = self.scheme
        if scheme is None:
            scheme = {int(v): f"label-{int(v)}" for v in np.unique(data) if v != 0}
        else:
            scheme = {int(k): str(v) for k, v in scheme.items()}
            present = set(int(v) for v in np.unique(data) if v != 0)
            missing = present - set(scheme)
            if missing:
                raise ValueError(f"labels {sorted(missing)} missing from scheme")
        object.__setattr__(self, "scheme", scheme)

    def label_for(self, name):
        """Integer label carrying `name`, or None."""
        for k, v in self.scheme.items():
            if v == name:
                return k
        return None

    def mask_for(self, names):
        """Boolean mask of voxels whose label name is in `names`."""
        if isinstance(names, str):
            names = [names]
        wanted = [k for k, v in self.scheme.items() if v in set(names)]
        if not wanted:
            return np.zeros(self.dims, bool)
        return np.isin(self.data, wanted)


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Per-voxel displacement vectors in world mm, atlas-to-subject, defined
    on the subject/target grid. Vectors live in world coordinates, so grid
    reorientation permutes voxels but never the vector components."""

    vectors: np.ndarray  # (nx, ny, nz, 3)
    affine: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vectors, np.float64)
        if vec.ndim != 4 or vec.shape[3] != 3:
            raise ValueError(f"vectors must have shape (nx,ny,nz,3), got {vec.shape}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("displacement vectors must be finite")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "affine", _validate_affine(self.affine))

    @property
    def dims(self):
        return self.vectors.shape[:3]

    @property
    def spacing(self):
        return spacing_from_affine(self.affine)


def grids_match(a, b, atol=1e-3):
    """True when two volumes/fields share dims and affine within `atol` mm."""
    return a.dims == b.dims and np.allclose(a.affine, b.affine, atol=atol)


def require_same_grid(a, b, what="volumes"):
    if not grids_match(a, b):
        raise GridMismatchError(f"{what} are not on the same grid: "
                                f"{a.dims} vs {b.dims}")


# ---------------------------------------------------------------------------
# canonical (RAS) reorientation

def _axis_assignment(affine):
    # For each voxel axis, the dominant world axis and its sign, assigned
    # greedily by magnitude so degenerate near-45-degree affines still get
    # a bijective assignment.
    Q = np.asarray(affine, np.float64)[:3, :3].copy()
    Q /= np.linalg.norm(Q, axis=0, keepdims=True)
    A = np.abs(Q)
    assign = [-1, -1, -1]
    signs = [1, 1, 1]
    for _ in range(3):
        w, v = np.unravel_index(np.argmax(A), A.shape)
        assign[v] = int(w)
        signs[v] = 1 if Q[w, v] >= 0 else -1
        A[w, :] = -1.0
        A[:, v] = -1.0
    return assign, signs


def is_canonical(affine):
    assign, signs = _axis_assignment(affine)
    return assign == [0, 1, 2] and signs == [1, 1, 1]


def _canonical_transform(affine, dims):
    assign, signs = _axis_assignment(affine)
    perm = [assign.index(a) for a in range(3)]
    flips = [signs[perm[a]] < 0 for a in range(3)]
    T = np.eye(4)
    T[:3, :3] = 0.0
    for a in range(3):
        j = perm[a]
        T[j, a] = -1.0 if flips[a] else 1.0
        if flips[a]:
            T[j, 3] = dims[j] - 1
    return perm, flips, np.asarray(affine) @ T


def to_canonical(vol):
    """Reorient a Volume / LabelVolume / DisplacementField to RAS.

    Voxel data is permuted and flipped; world positions of every voxel are
    preserved exactly. Returns the input object unchanged when already RAS.
    """
    if is_canonical(vol.affine):
        return vol
    if isinstance(vol, DisplacementField):
        perm, flips, new_affine = _canonical_transform(vol.affine, vol.dims)
        vec = np.transpose(vol.vectors, perm + [3])
        for a in range(3):
            if flips[a]:
                vec = np.flip(vec, axis=a)
        return DisplacementField(np.ascontiguousarray(vec), new_affine)
    perm, flips, new_affine = _canonical_transform(vol.affine, vol.dims)
    data = np.transpose(vol.data, perm)
    for a in range(3):
        if flips[a]:
            data = np.flip(data, axis=a)
    data = np.ascontiguousarray(data)
    if isinstance(vol, LabelVolume):
        return LabelVolume(data, new_affine, scheme=vol.scheme)
    return Volume(data, new_affine)
