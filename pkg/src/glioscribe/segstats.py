"""Merging of anatomy/tumor/midline label maps and volumetric statistics.

Merge priority at colliding voxels: midline > tumor > anatomy > background.
The merged map uses disjoint integer namespaces (anatomy keeps its own ints,
tumor moves to 10001..10003, midline to 20000) so the provenance of every
output label stays recoverable from the scheme; the pre-merge inputs are
retained because overlap statistics must be computed against the original
anatomy labeling, not the tumor-masked one.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .volume import LabelVolume, require_same_grid, voxel_to_world

TUMOR_BASE = 10000
MIDLINE_LABEL = 20000

_CANONICAL_TUMOR = ("NCR", "ED", "ET")


@dataclass(frozen=True)
class MergedSegmentation:
    labels: LabelVolume    # merged, namespaced
    anatomy: LabelVolume   # pre-merge inputs
    tumor: LabelVolume     # canonical labels: 1=NCR, 2=ED, 3=ET
    midline: LabelVolume

    @property
    def spacing(self):
        return self.labels.spacing

    @property
    def voxel_ml(self):
        return self.labels.voxel_ml

    def tumor_mask(self, names=_CANONICAL_TUMOR):
        return self.tumor.mask_for(list(names))

    def anatomy_mask(self, names):
        return self.anatomy.mask_for(names)


@dataclass(frozen=True)
class Lesion:
    volume_ml: float                 # tumor-core volume of this lesion
    extents_cm: tuple                # (AP, TV, CC) over core + contiguous ED
    centroid_mm: tuple               # RAS mm centroid of the core voxels


@dataclass(frozen=True)
class LesionStats:
    lesions: list
    dominant_index: int              # index of the largest core volume, -1 if none

    @property
    def num_lesions(self):
        return len(self.lesions)

    @property
    def total_core_ml(self):
        return float(sum(l.volume_ml for l in self.lesions))


@dataclass(frozen=True)
class RegionProportions:
    prop_necrosis: float
    prop_enhancing: float
    prop_edema: float

    def as_tuple(self):
        return (self.prop_necrosis, self.prop_enhancing, self.prop_edema)


def normalize_tumor_labels(tumor: LabelVolume, tumor_labels: dict) -> LabelVolume:
    """Remap a BraTS-style tumor volume to canonical ints 1=NCR, 2=ED, 3=ET.

    `tumor_labels` maps name -> integer as stored on disk (configurable for
    the legacy 4=ET convention). Unknown nonzero values raise.
    """
    out = np.zeros(tumor.dims, np.int32)
    known = set()
    for canon, name in enumerate(_CANONICAL_TUMOR, start=1):
        src = tumor_labels[name]
        known.add(int(src))
        out[tumor.data == src] = canon
    stray = set(int(v) for v in np.unique(tumor.data) if v != 0) - known
    if stray:
        raise ValueError(f"tumor volume carries labels {sorted(stray)} not in "
                         f"the configured scheme {tumor_labels}")
    scheme = {i + 1: n for i, n in enumerate(_CANONICAL_TUMOR)}
    return LabelVolume(out, tumor.affine.copy(), scheme=scheme)


def merge_segmentations(anatomy: LabelVolume, tumor: LabelVolume,
                        midline: LabelVolume) -> MergedSegmentation:
    """Merge the three label maps under priority midline > tumor > anatomy.

    `tumor` must already be in canonical 1/2/3 form (normalize_tumor_labels).
    """
    require_same_grid(anatomy, tumor, "anatomy and tumor")
    require_same_grid(anatomy, midline, "anatomy and midline")
    if any(v >= TUMOR_BASE for v in anatomy.scheme):
        raise ValueError("anatomy labels collide with the tumor namespace")

    merged = anatomy.data.astype(np.int32).copy()
    t = tumor.data
    tm = t != 0
    merged[tm] = t[tm].astype(np.int32) + TUMOR_BASE
    merged[midline.data != 0] = MIDLINE_LABEL

    scheme = {int(k): f"anatomy:{v}" for k, v in anatomy.scheme.items()}
    for canon, name in enumerate(_CANONICAL_TUMOR, start=1):
        scheme[TUMOR_BASE + canon] = f"tumor:{name}"
    scheme[MIDLINE_LABEL] = "midline"
    out = LabelVolume(merged, anatomy.affine.copy(), scheme=scheme)
    return MergedSegmentation(out, anatomy, tumor, midline)


def connected_components_3d(mask, connectivity=26, backend=None):
    """Connected components of a binary mask; see kernels.label_components."""
    arr = mask.data if isinstance(mask, LabelVolume) else mask
    return kernels.label_components(arr, connectivity=connectivity, backend=backend)


def tumor_statistics(merged: MergedSegmentation, min_lesion_ml=0.05, backend=None):
    """Lesion stats, sub-region proportions, and total tumor volume.

    Lesions are 26-connected components of the tumor core (NCR union ET) of
    at least `min_lesion_ml`; sub-threshold speckle components are excluded
    from the lesion list and from the core-volume accounting. Extents are
    the axis-aligned bounding box of each lesion's core plus its contiguous
    edema envelope, reported (AP, TV, CC) = (y, x, z) spans in cm.
    """
    vml = merged.voxel_ml
    sx, sy, sz = merged.spacing
    ncr = merged.tumor.data == 1
    ed = merged.tumor.data == 2
    et = merged.tumor.data == 3
    n_ncr, n_ed, n_et = int(ncr.sum()), int(ed.sum()), int(et.sum())
    n_all = n_ncr + n_ed + n_et
    total_volume_ml = n_all * vml

    if n_all:
        props = RegionProportions(n_ncr / n_all, n_et / n_all, n_ed / n_all)
    else:
        props = RegionProportions(0.0, 0.0, 0.0)

    core = ncr | et
    core_labels, core_sizes = kernels.label_components(core, 26, backend=backend)
    envelope = core | ed
    env_labels, _ = kernels.label_components(envelope, 26, backend=backend)

    lesions = []
    for k in range(1, len(core_sizes) + 1):
        vol_ml = float(core_sizes[k - 1]) * vml
        if vol_ml < min_lesion_ml:
            continue
        where = core_labels == k
        idx = np.argwhere(where)
        env_id = env_labels[idx[0, 0], idx[0, 1], idx[0, 2]]
        env_idx = np.argwhere(env_labels == env_id)
        lo = env_idx.min(axis=0)
        hi = env_idx.max(axis=0)
        span_mm = (hi - lo + 1) * np.array([sx, sy, sz])
        extents_cm = (round(span_mm[1] / 10.0, 6), round(span_mm[0] / 10.0, 6),
                      round(span_mm[2] / 10.0, 6))
        centroid = voxel_to_world(merged.labels.affine, idx.mean(axis=0))
        lesions.append(Lesion(vol_ml, extents_cm, tuple(float(c) for c in centroid)))

    # core components come back ordered by descending size, so index 0 is
    # dominant whenever any lesion survived the floor
    stats = LesionStats(lesions, 0 if lesions else -1)
    return stats, props, total_volume_ml


def tumor_roi_overlap(merged: MergedSegmentation, which="whole"):
    """Fraction of the tumor inside each anatomy region.

    `which` selects the tumor mask: "whole" (NCR+ED+ET) or "core" (NCR+ET).
    Fractions are measured against the pre-merge anatomy labeling and sum to
    at most 1 (tumor outside any named region accounts for the remainder).
    Empty tumor -> empty map.
    """
    if which == "whole":
        tm = merged.tumor.data != 0
    elif which == "core":
        tm = (merged.tumor.data == 1) | (merged.tumor.data == 3)
    else:
        raise ValueError(f"which must be 'whole' or 'core', got {which!r}")
    n_tumor = int(tm.sum())
    if n_tumor == 0:
        return {}
    anat = merged.anatomy.data
    out = {}
    for value, name in merged.anatomy.scheme.items():
        n = int(((anat == value) & tm).sum())
        if n:
            out[name] = n / n_tumor
    return out


@dataclass(frozen=True)
class VentricleFlag:
    flag: bool
    ratio: float


def ventricle_metrics(merged: MergedSegmentation, atlas_reference_ml=None,
                      r_asym=1.5, r_enl=1.3,
                      left_name="lateral-ventricle-left",
                      right_name="lateral-ventricle-right"):
    """Ventricular asymmetry and enlargement flags.

    Asymmetry ratio is max/min of the lateral ventricle volumes (inf when one
    side is empty). Enlargement compares total lateral ventricular volume to
    the warped-atlas reference; when no reference is given the enlargement
    flag is returned as None.
    """
    vml = merged.voxel_ml
    vl = float(merged.anatomy.mask_for(left_name).sum()) * vml
    vr = float(merged.anatomy.mask_for(right_name).sum()) * vml
    if vl == 0.0 and vr == 0.0:
        raise ValueError("ventricles missing from anatomy")
    ratio = float("inf") if min(vl, vr) == 0.0 else max(vl, vr) / min(vl, vr)
    asym = VentricleFlag(ratio > r_asym, ratio)
    if atlas_reference_ml is None:
        return asym, None
    enl_ratio = (vl + vr) / float(atlas_reference_ml)
    return asym, VentricleFlag(enl_ratio > r_enl, enl_ratio)
