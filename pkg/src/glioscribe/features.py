"""Categorical imaging descriptors derived from the merged segmentation.

Maps the volumetric statistics onto a fixed descriptor vocabulary (location,
laterality, enhancement, focality, invasion, midline shift, ventricles).
Every decision threshold comes from config and is recorded in provenance.
The serialized JSON document is the exact metadata block inserted into
generation prompts, so serialization is deterministic: fixed key order,
fixed rounding, no timestamps.
"""

import json
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import ndimage

from . import kernels
from .config import PipelineConfig
from .midline import crosses_midline, mls_level_label
from .segstats import (LesionStats, MergedSegmentation, tumor_roi_overlap,
                       tumor_statistics, ventricle_metrics)
from .volume import LabelVolume
from . import __version__

QUALITY_NONE = "None"
QUALITY_MILD = "Mild"
QUALITY_MARKED = "Marked"
THICK = "Thick(>3mm)"
THIN = "Thin"
NOT_APPLICABLE = "NotApplicable"


@dataclass
class FeatureSet:
    """The per-subject descriptor document.

    Fields that cannot be computed from the available inputs are explicit
    nulls in the JSON, never silently absent.
    """

    subject_id: str
    age: float = None
    sex: str = None
    total_tumor_volume_ml: float = 0.0
    ed_volume_ml: float = 0.0
    num_lesions: int = 0
    lesion_sizes_cm: list = field(default_factory=list)
    prop_necrosis: float = 0.0
    prop_enhancing: float = 0.0
    prop_edema: float = 0.0
    tumor_location: list = field(default_factory=list)
    side_of_epicenter: str = None
    cortical_involvement: bool = None
    ventricular_invasion: bool = None
    deep_wm_invasion: bool = None
    eloquent_brain: bool = None
    eloquent_region: str = None
    enhancement_quality: str = QUALITY_NONE
    enhancement_thickness: str = NOT_APPLICABLE
    multifocal_or_multicentric: str = None
    multiple_satellites: bool = None
    max_mls_mm: float = None
    mls_direction: str = None
    level_of_max_mls: str = None
    edema_crosses_midline: bool = None
    et_crosses_midline: bool = None
    asymmetrical_ventricles: bool = None
    enlarged_ventricles: bool = None
    provenance: dict = field(default_factory=dict)

    def to_json(self) -> str:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown feature fields {sorted(unknown)}")
        return cls(**doc)


def _overlap_ml(mask_a, mask_b, voxel_ml):
    return float((mask_a & mask_b).sum()) * voxel_ml


def side_of_epicenter(merged: MergedSegmentation, ideal, frac=0.6):
    """Left/Right when that side holds more than `frac` of the tumor core,
    else Bilateral. Sides are taken against the per-slice ideal line; core
    voxels exactly on the line, or on slices without a segment, count for
    neither side."""
    core = (merged.tumor.data == 1) | (merged.tumor.data == 3)
    if not core.any():
        raise ValueError("empty tumor core")
    from .midline import _signed_offsets
    from .volume import voxel_to_world
    left = 0
    right = 0
    for z in range(core.shape[2]):
        if z not in ideal.segments:
            continue
        xs, ys = np.nonzero(core[:, :, z])
        if xs.size == 0:
            continue
        A, P = ideal.segments[z]
        vox = np.column_stack([xs, ys, np.full(xs.size, z)]).astype(np.float64)
        world = voxel_to_world(merged.labels.affine, vox)
        _, offx = _signed_offsets(world[:, :2], A, P)
        left += int((offx < 0).sum())
        right += int((offx > 0).sum())
    total = left + right
    if total == 0:
        return "Bilateral"
    if left / total > frac:
        return "Left"
    if right / total > frac:
        return "Right"
    return "Bilateral"


def _rim_thickness_mm(component_mask, spacing, backend=None):
    # Median full thickness over the distance-transform ridge (approximate
    # medial surface). The plain median over all rim voxels would read about
    # half the true wall width, so the ridge restriction is load-bearing.
    d = kernels.edt(component_mask, spacing, backend=backend)
    local_max = ndimage.maximum_filter(d, size=3, mode="constant", cval=0.0)
    ridge = component_mask & (d + 1e-9 >= local_max)
    if not ridge.any():
        return 0.0
    return float(np.median(2.0 * d[ridge]))


def enhancement_features(merged: MergedSegmentation, q_mild=0.05,
                         thick_rim_mm=3.0, backend=None):
    """(quality, thickness) of the enhancing component.

    Quality: None when no ET voxels exist, Mild below `q_mild` of the whole
    tumor, Marked otherwise. Thickness: median ridge thickness of the
    dominant ET component against `thick_rim_mm`; NotApplicable without ET.
    """
    et = merged.tumor.data == 3
    whole = merged.tumor.data != 0
    n_et = int(et.sum())
    n_all = int(whole.sum())
    if n_et == 0:
        return QUALITY_NONE, NOT_APPLICABLE
    prop = n_et / n_all
    quality = QUALITY_MILD if prop < q_mild else QUALITY_MARKED
    labels, sizes = kernels.label_components(et, 26, backend=backend)
    dominant = labels == 1
    thickness_mm = _rim_thickness_mm(dominant, merged.spacing, backend=backend)
    thickness = THICK if thickness_mm > thick_rim_mm else THIN
    return quality, thickness


def focality_and_satellites(lesions: LesionStats, merged: MergedSegmentation,
                            sat_max_ml=1.0, backend=None):
    """(focality, satellites_flag).

    Solitary for one lesion. With several, any two core components sharing a
    connected edema envelope make the case Multifocal; fully disjoint
    envelopes make it Multicentric. Satellites: any non-dominant enhancing
    component smaller than `sat_max_ml`.
    """
    if lesions.num_lesions == 0:
        raise ValueError("empty tumor core")
    vml = merged.voxel_ml
    et = merged.tumor.data == 3
    sat = False
    if et.any():
        _, et_sizes = kernels.label_components(et, 26, backend=backend)
        for size in et_sizes[1:]:
            if float(size) * vml < sat_max_ml:
                sat = True
                break
    if lesions.num_lesions == 1:
        return "Solitary", sat
    core = (merged.tumor.data == 1) | (merged.tumor.data == 3)
    env = core | (merged.tumor.data == 2)
    core_labels, _ = kernels.label_components(core, 26, backend=backend)
    env_labels, _ = kernels.label_components(env, 26, backend=backend)
    # components are size-ordered and the lesion filter is a pure size
    # threshold, so the retained lesions are exactly components 1..K
    envelopes = set()
    for k in range(1, lesions.num_lesions + 1):
        idx = np.argwhere(core_labels == k)[0]
        envelopes.add(int(env_labels[idx[0], idx[1], idx[2]]))
    focality = "Multifocal" if len(envelopes) < lesions.num_lesions else "Multicentric"
    return focality, sat


@dataclass(frozen=True)
class InvolvementFlags:
    cortical: bool
    deep_wm: bool
    ventricular: bool
    eloquent: bool
    eloquent_region: str


def involvement_flags(merged: MergedSegmentation, cfg: PipelineConfig,
                      backend=None) -> InvolvementFlags:
    """Structure involvement per the configured name lists.

    Cortical / deep-WM / eloquent compare the whole tumor (including edema)
    against a volume floor; ventricular invasion asks whether any tumor-core
    voxel touches a ventricle voxel under 26-adjacency.
    """
    t = cfg.thresholds
    vml = merged.voxel_ml
    whole = merged.tumor.data != 0
    core = (merged.tumor.data == 1) | (merged.tumor.data == 3)

    cortical = _overlap_ml(whole, merged.anatomy_mask(cfg.cortical_gm_names),
                           vml) >= t.v_min_ml

    vent = merged.anatomy_mask(cfg.ventricle_names)
    if vent.any():
        dist = kernels.edt(~vent, merged.spacing, backend=backend)
        deep = merged.anatomy_mask(cfg.cerebral_wm_names) & (dist <= t.deep_wm_mm)
        deep_wm = _overlap_ml(whole, deep, vml) >= t.v_min_ml
        grown = ndimage.binary_dilation(
            core, structure=ndimage.generate_binary_structure(3, 3))
        ventricular = bool((grown & vent).any())
    else:
        deep_wm = False
        ventricular = False

    eloquent_region = None
    best_ml = 0.0
    for region, names in sorted(cfg.eloquent_regions.items()):
        ml = _overlap_ml(whole, merged.anatomy_mask(names), vml)
        if ml >= t.v_min_ml and ml > best_ml:
            best_ml = ml
            eloquent_region = region
    return InvolvementFlags(cortical, deep_wm, ventricular,
                            eloquent_region is not None, eloquent_region)


def tumor_location(merged: MergedSegmentation, min_frac=0.15, max_regions=3):
    """Up to `max_regions` anatomy regions by core overlap; the best region
    is always reported, extras only when above `min_frac`."""
    overlap = tumor_roi_overlap(merged, which="core")
    if not overlap:
        return []
    ranked = sorted(overlap.items(), key=lambda kv: (-kv[1], kv[0]))
    out = [ranked[0][0]]
    for name, frac in ranked[1:max_regions]:
        if frac > min_frac:
            out.append(name)
    return out


def assemble_feature_set(subject_id, merged: MergedSegmentation, ideal=None,
                         midline_result=None, cfg: PipelineConfig = None,
                         age=None, sex=None, backend=None) -> FeatureSet:
    """Populate the full FeatureSet for one subject.

    `ideal`/`midline_result` may be None when no midline input exists; the
    dependent fields then serialize as nulls. Identical inputs and identical
    config produce a byte-identical document.
    """
    cfg = cfg or PipelineConfig()
    t = cfg.thresholds
    lesions, props, total_ml = tumor_statistics(
        merged, min_lesion_ml=t.min_lesion_ml, backend=backend)
    vml = merged.voxel_ml
    ed_ml = float((merged.tumor.data == 2).sum()) * vml
    core_nonempty = bool(((merged.tumor.data == 1) | (merged.tumor.data == 3)).any())

    fs = FeatureSet(subject_id=str(subject_id), age=age, sex=sex)
    fs.total_tumor_volume_ml = round(total_ml, 2)
    fs.ed_volume_ml = round(ed_ml, 2)
    fs.num_lesions = lesions.num_lesions
    fs.lesion_sizes_cm = [[round(v, 1) for v in l.extents_cm] for l in lesions.lesions]
    fs.prop_necrosis = round(props.prop_necrosis, 4)
    fs.prop_enhancing = round(props.prop_enhancing, 4)
    fs.prop_edema = round(props.prop_edema, 4)
    fs.tumor_location = tumor_location(merged, t.location_min_frac,
                                       t.location_max_regions)

    quality, thickness = enhancement_features(
        merged, q_mild=t.q_mild, thick_rim_mm=t.thick_rim_mm, backend=backend)
    fs.enhancement_quality = quality
    fs.enhancement_thickness = thickness

    if lesions.num_lesions > 0:
        focality, sat = focality_and_satellites(lesions, merged,
                                                sat_max_ml=t.sat_max_ml,
                                                backend=backend)
        fs.multifocal_or_multicentric = focality
        fs.multiple_satellites = sat

    inv = involvement_flags(merged, cfg, backend=backend)
    fs.cortical_involvement = inv.cortical
    fs.deep_wm_invasion = inv.deep_wm
    fs.ventricular_invasion = inv.ventricular
    fs.eloquent_brain = inv.eloquent
    fs.eloquent_region = inv.eloquent_region

    if ideal is not None and core_nonempty:
        fs.side_of_epicenter = side_of_epicenter(merged, ideal,
                                                 frac=t.epicenter_frac)
    if ideal is not None:
        ed_vol = LabelVolume((merged.tumor.data == 2).astype(np.uint8),
                             merged.labels.affine, scheme={1: "ED"})
        et_vol = LabelVolume((merged.tumor.data == 3).astype(np.uint8),
                             merged.labels.affine, scheme={1: "ET"})
        fs.edema_crosses_midline = crosses_midline(ed_vol, ideal,
                                                   min_ml=t.crossing_min_ml)
        fs.et_crosses_midline = crosses_midline(et_vol, ideal,
                                                min_ml=t.crossing_min_ml)
    if midline_result is not None:
        fs.max_mls_mm = round(midline_result.max_mls_mm, 1)
        fs.mls_direction = midline_result.direction
        fs.level_of_max_mls = mls_level_label(merged, midline_result.slice_of_max)

    try:
        asym, enl = ventricle_metrics(
            merged, atlas_reference_ml=cfg.atlas_reference_ml,
            r_asym=t.r_asym, r_enl=t.r_enl)
        fs.asymmetrical_ventricles = asym.flag
        fs.enlarged_ventricles = None if enl is None else enl.flag
    except ValueError:
        pass  # ventricles absent from this anatomy; fields stay null

    fs.provenance = {
        "generator": "glioscribe",
        "version": __version__,
        "thresholds": t.as_dict(),
        "tumor_labels": dict(sorted(cfg.tumor_labels.items())),
    }
    return fs
