"""Ideal midline construction and 3D midline shift measurement.

Per axial slice, the ideal midline is the segment joining the most anterior
and most posterior midline voxels (falx attachment proxies). Deviation of a
midline voxel is its signed perpendicular in-plane distance to that segment;
the sign follows the x component of the offset, so negative = Left in RAS.
"""

from dataclasses import dataclass, field

import numpy as np

from .volume import LabelVolume, voxel_to_world


@dataclass(frozen=True)
class IdealMidline:
    """Per-slice anterior/posterior endpoints in world RAS mm.

    Slices where the midline mask holds fewer than two voxels, or where the
    two extremal points coincide, are absent.
    """

    segments: dict  # z -> (A_xyz, P_xyz), both np.ndarray (3,)

    def __contains__(self, z):
        return z in self.segments

    @property
    def slices(self):
        return sorted(self.segments)


@dataclass(frozen=True)
class MidlineResult:
    max_mls_mm: float
    direction: str            # "Left" | "Right" | None when max is 0
    slice_of_max: int         # z index, or None
    per_slice_max_mm: dict    # z -> max |deviation| on that slice
    skipped_slices: int       # mask slices with no ideal segment
    deviations: dict = field(repr=False, default_factory=dict)
    # z -> (N,) signed deviations for the midline voxels of that slice


def _slice_endpoints(xs, ys):
    y_max = ys.max()
    y_min = ys.min()
    ax = float(np.median(xs[ys == y_max]))
    px = float(np.median(xs[ys == y_min]))
    return (ax, float(y_max)), (px, float(y_min))


def ideal_midline(subject_midline: LabelVolume) -> IdealMidline:
    """Extremal-endpoint segments of the midline mask, one per axial slice."""
    mask = subject_midline.data != 0
    if not mask.any():
        raise ValueError("midline mask is entirely empty")
    segments = {}
    nz = mask.shape[2]
    for z in range(nz):
        xs, ys = np.nonzero(mask[:, :, z])
        if xs.size < 2:
            continue
        (ax, ay), (px, py) = _slice_endpoints(xs, ys)
        if ay == py and ax == px:
            continue
        A = voxel_to_world(subject_midline.affine, np.array([ax, ay, float(z)]))
        P = voxel_to_world(subject_midline.affine, np.array([px, py, float(z)]))
        segments[z] = (A, P)
    return IdealMidline(segments)


def _signed_offsets(points_xy, A, P):
    # perpendicular in-plane offset of each point from line(A, P); returns
    # (signed distances, x components of the offsets)
    d = P[:2] - A[:2]
    norm = np.linalg.norm(d)
    if norm == 0.0:
        rel = points_xy - A[:2]
        dist = np.linalg.norm(rel, axis=1)
        return np.where(rel[:, 0] < 0, -dist, dist), rel[:, 0]
    u = d / norm
    rel = points_xy - A[:2]
    proj = rel @ u
    off = rel - proj[:, None] * u
    dist = np.linalg.norm(off, axis=1)
    return np.where(off[:, 0] < 0, -dist, dist), off[:, 0]


def midline_deviation(subject_midline: LabelVolume, ideal: IdealMidline) -> MidlineResult:
    """Max 3D midline shift over all midline voxels, with direction and level."""
    mask = subject_midline.data != 0
    affine = subject_midline.affine
    per_slice = {}
    deviations = {}
    skipped = 0
    best = 0.0
    best_signed = 0.0
    best_z = None
    for z in range(mask.shape[2]):
        xs, ys = np.nonzero(mask[:, :, z])
        if xs.size == 0:
            continue
        if z not in ideal.segments:
            skipped += 1
            continue
        A, P = ideal.segments[z]
        vox = np.column_stack([xs, ys, np.full(xs.size, z)]).astype(np.float64)
        world = voxel_to_world(affine, vox)
        signed, _ = _signed_offsets(world[:, :2], A, P)
        deviations[z] = signed
        i = int(np.argmax(np.abs(signed)))
        per_slice[z] = float(abs(signed[i]))
        if per_slice[z] > best:
            best = per_slice[z]
            best_signed = float(signed[i])
            best_z = z
    direction = None
    if best > 0.0:
        direction = "Left" if best_signed < 0 else "Right"
    return MidlineResult(best, direction, best_z, per_slice, skipped, deviations)


def crosses_midline(region, ideal: IdealMidline, min_ml=1.0) -> bool:
    """True when the region puts more than `min_ml` strictly on each side of
    the per-slice ideal line. Voxels exactly on the line count for neither
    side; slices with no ideal segment are ignored."""
    if isinstance(region, LabelVolume):
        mask = region.data != 0
        affine = region.affine
        vml = region.voxel_ml
    else:
        raise TypeError("region must be a LabelVolume")
    left = 0
    right = 0
    for z in range(mask.shape[2]):
        if z not in ideal.segments:
            continue
        xs, ys = np.nonzero(mask[:, :, z])
        if xs.size == 0:
            continue
        A, P = ideal.segments[z]
        vox = np.column_stack([xs, ys, np.full(xs.size, z)]).astype(np.float64)
        world = voxel_to_world(affine, vox)
        _, offx = _signed_offsets(world[:, :2], A, P)
        left += int((offx < 0).sum())
        right += int((offx > 0).sum())
    return left * vml > min_ml and right * vml > min_ml


def mls_level_label(merged, slice_of_max,
                    lateral_names=("lateral-ventricle-left",
                                   "lateral-ventricle-right"),
                    third_name="third-ventricle") -> str:
    """Anatomical wording for the slice of maximum shift, by ventricle lookup."""
    if slice_of_max is None:
        return "no measurable shift"
    z = int(slice_of_max)
    anat = merged.anatomy
    lateral = anat.mask_for(list(lateral_names))[:, :, z].any()
    if lateral:
        return "level of the lateral ventricles"
    third = anat.mask_for(third_name)[:, :, z].any()
    if third:
        return "level of the third ventricle"
    return f"level of slice {z}"
