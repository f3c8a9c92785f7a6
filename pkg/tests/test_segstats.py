import numpy as np
import pytest

from glioscribe.config import PipelineConfig
from glioscribe.segstats import (
    MIDLINE_LABEL,
    TUMOR_BASE,
    connected_components_3d,
    merge_segmentations,
    normalize_tumor_labels,
    tumor_roi_overlap,
    tumor_statistics,
    ventricle_metrics,
)
from glioscribe.volume import LabelVolume

from .conftest import centered_affine, make_anatomy, make_midline, make_tumor
from .oracles import flood_fill_components


def _merged(n=32, anatomy=None, tumor_data=None, midline=None,
            spacing=(1.0, 1.0, 1.0)):
    aff = centered_affine(n, spacing)
    anatomy = anatomy or make_anatomy(n, spacing)
    if tumor_data is None:
        tumor_data = np.zeros((n, n, n), np.int16)
    tumor = LabelVolume(tumor_data.astype(np.int32), aff,
                        scheme={0: "background", 1: "NCR", 2: "ED", 3: "ET"})
    midline = midline or LabelVolume(np.zeros((n, n, n), np.uint8), aff)
    return merge_segmentations(anatomy, tumor, midline)


def test_empty_tumor_and_midline_leaves_anatomy():
    anatomy = make_anatomy(32)
    m = _merged(32, anatomy=anatomy)
    np.testing.assert_array_equal(m.labels.data, anatomy.data)


def test_tumor_takes_priority_over_anatomy():
    n = 32
    tum = np.zeros((n, n, n), np.int16)
    tum[2, 16, 16] = 3    # on the cortex rind
    m = _merged(n, tumor_data=tum)
    assert m.labels.data[2, 16, 16] == TUMOR_BASE + 3
    # pre-merge anatomy retained
    assert m.anatomy.data[2, 16, 16] == 3


def test_midline_takes_priority_over_tumor():
    n = 32
    tum = np.zeros((n, n, n), np.int16)
    tum[16, 16, 16] = 2
    mid = np.zeros((n, n, n), np.uint8)
    mid[16, 16, 16] = 1
    m = _merged(n, tumor_data=tum,
                midline=LabelVolume(mid, centered_affine(n)))
    assert m.labels.data[16, 16, 16] == MIDLINE_LABEL


def test_merge_conserves_counts_for_disjoint_masks():
    rng = np.random.default_rng(2)
    n = 24
    aff = centered_affine(n)
    anat = np.zeros((n, n, n), np.int32)
    anat[:8] = 2
    tum = np.zeros((n, n, n), np.int16)
    tum[10:14, :, :] = rng.integers(1, 4, (4, n, n))
    mid = np.zeros((n, n, n), np.uint8)
    mid[20, :, :] = 1
    anatomy = LabelVolume(anat, aff, scheme=PipelineConfig().anatomy_scheme)
    m = _merged(n, anatomy=anatomy, tumor_data=tum,
                midline=LabelVolume(mid, aff))
    data = m.labels.data
    assert (data == 2).sum() == (anat == 2).sum()
    for v in (1, 2, 3):
        assert (data == TUMOR_BASE + v).sum() == (tum == v).sum()
    assert (data == MIDLINE_LABEL).sum() == n * n


def test_normalize_tumor_labels_remaps():
    aff = np.eye(4)
    raw = np.zeros((4, 4, 4), np.int32)
    raw[0, 0, 0] = 10   # edema in a foreign scheme
    raw[1, 0, 0] = 20   # enhancing
    raw[2, 0, 0] = 5    # necrosis
    vol = LabelVolume(raw, aff)
    out = normalize_tumor_labels(vol, {"NCR": 5, "ED": 10, "ET": 20})
    assert out.data[2, 0, 0] == 1
    assert out.data[0, 0, 0] == 2
    assert out.data[1, 0, 0] == 3
    assert out.scheme[1] == "NCR"


def test_components_convenience_empty_and_corners():
    labels, sizes = connected_components_3d(np.zeros((4, 4, 4), bool))
    assert sizes.size == 0 and not labels.any()
    mask = np.zeros((6, 6, 6), bool)
    mask[0, 0, 0] = mask[5, 5, 5] = True
    _, sizes = connected_components_3d(mask, connectivity=26)
    assert len(sizes) == 2


def test_components_match_oracle_on_random_masks():
    rng = np.random.default_rng(31)
    for _ in range(10):
        mask = rng.random((16, 16, 16)) < 0.3
        labels, sizes = connected_components_3d(mask, connectivity=26)
        want_labels, want_sizes = flood_fill_components(mask, 26)
        np.testing.assert_array_equal(labels, want_labels)
        np.testing.assert_array_equal(sizes, want_sizes)


def test_one_cubic_cm_of_enhancing_tumor():
    n = 32
    tum = np.zeros((n, n, n), np.int16)
    tum[4:14, 6:16, 8:18] = 3   # 10x10x10 @1mm = 1 mL
    m = _merged(n, tumor_data=tum)
    stats, props, total = tumor_statistics(m)
    assert total == pytest.approx(1.0)
    assert props.prop_enhancing == pytest.approx(1.0)
    assert stats.num_lesions == 1
    assert stats.lesions[0].extents_cm == (1.0, 1.0, 1.0)
    assert stats.lesions[0].volume_ml == pytest.approx(1.0)


def test_extents_axis_order_is_ap_tv_cc():
    n = 40
    tum = np.zeros((n, n, n), np.int16)
    tum[5:15, 5:25, 5:35] = 3   # x 10, y 20, z 30 voxels
    m = _merged(n, tumor_data=tum)
    stats, _, _ = tumor_statistics(m)
    assert stats.lesions[0].extents_cm == (2.0, 1.0, 3.0)


def test_sphere_volume_close_to_analytic():
    n = 32
    aff = centered_affine(n)
    x, y, z = np.meshgrid(*[np.arange(n)] * 3, indexing="ij")
    c = n // 2
    tum = np.zeros((n, n, n), np.int16)
    tum[(x - c) ** 2 + (y - c) ** 2 + (z - c) ** 2 < 100] = 3
    m = _merged(n, tumor_data=tum)
    _, _, total = tumor_statistics(m)
    analytic = 4.0 / 3.0 * np.pi * 10.0 ** 3 / 1000.0
    assert abs(total - analytic) / analytic < 0.05


def test_proportions_reproduce_constructed_mix():
    # 28% enhancing, 22% necrotic, 50% edema by voxel construction
    n = 24
    tum = np.zeros((n, n, n), np.int16)
    flat = tum.reshape(-1)
    flat[:280] = 3
    flat[280:500] = 1
    flat[500:1000] = 2
    m = _merged(n, tumor_data=flat.reshape(n, n, n))
    _, props, _ = tumor_statistics(m)
    assert props.prop_enhancing == pytest.approx(0.28)
    assert props.prop_necrosis == pytest.approx(0.22)
    assert props.prop_edema == pytest.approx(0.50)


def test_proportions_sum_to_one():
    rng = np.random.default_rng(8)
    for _ in range(5):
        n = 20
        tum = (rng.random((n, n, n)) < 0.2) * rng.integers(1, 4, (n, n, n))
        if not tum.any():
            continue
        _, props, _ = tumor_statistics(_merged(n, tumor_data=tum.astype(np.int16)))
        s = props.prop_necrosis + props.prop_enhancing + props.prop_edema
        assert abs(s - 1.0) <= 1e-9


def test_min_lesion_floor_drops_speckle():
    n = 32
    tum = np.zeros((n, n, n), np.int16)
    tum[4:10, 4:10, 4:10] = 3          # 216 voxels = 0.216 mL
    tum[20, 20, 20] = 1                # single voxel = 0.001 mL
    m = _merged(n, tumor_data=tum)
    stats, _, _ = tumor_statistics(m, min_lesion_ml=0.05)
    assert stats.num_lesions == 1
    stats_all, _, _ = tumor_statistics(m, min_lesion_ml=0.0)
    assert stats_all.num_lesions == 2


def test_dominant_lesion_is_largest():
    n = 40
    tum = np.zeros((n, n, n), np.int16)
    tum[2:6, 2:6, 2:6] = 3       # 64 voxels
    tum[20:30, 20:30, 20:30] = 3  # 1000 voxels
    m = _merged(n, tumor_data=tum)
    stats, _, _ = tumor_statistics(m)
    assert stats.num_lesions == 2
    assert stats.dominant_index == 0
    assert stats.lesions[0].volume_ml > stats.lesions[1].volume_ml


def test_volumes_scale_with_spacing_cubed():
    n = 24
    tum = np.zeros((n, n, n), np.int16)
    tum[4:10, 4:10, 4:10] = 3
    m1 = _merged(n, tumor_data=tum)
    m2 = _merged(n, tumor_data=tum, spacing=(2.0, 2.0, 2.0),
                 anatomy=make_anatomy(n, (2.0, 2.0, 2.0)))
    _, _, t1 = tumor_statistics(m1)
    _, _, t2 = tumor_statistics(m2)
    assert t2 == pytest.approx(8.0 * t1)


def test_roi_overlap_entirely_inside_one_region():
    n = 32
    tum = np.zeros((n, n, n), np.int16)
    tum[22:26, 6:10, 6:10] = 3   # inside right white matter
    m = _merged(n, tumor_data=tum)
    frac = tumor_roi_overlap(m)
    assert frac["cerebral-white-matter-right"] == pytest.approx(1.0)
    assert "cerebral-white-matter-left" not in frac or \
        frac["cerebral-white-matter-left"] == 0.0


def test_roi_overlap_even_split():
    n = 32
    c = n // 2
    tum = np.zeros((n, n, n), np.int16)
    tum[c - 4:c + 4, 6:10, 6:10] = 3   # symmetric around the midplane
    m = _merged(n, tumor_data=tum)
    frac = tumor_roi_overlap(m)
    assert frac["cerebral-white-matter-left"] == pytest.approx(0.5)
    assert frac["cerebral-white-matter-right"] == pytest.approx(0.5)


def test_roi_overlap_empty_tumor():
    assert tumor_roi_overlap(_merged(24)) == {}


def test_roi_overlap_survives_merge_masking():
    # overlap is measured against pre-merge anatomy even though the merged
    # map re-labels tumor voxels
    n = 32
    tum = np.zeros((n, n, n), np.int16)
    tum[22:26, 6:10, 6:10] = 1
    m = _merged(n, tumor_data=tum)
    assert (m.labels.data == TUMOR_BASE + 1).sum() == 64
    assert tumor_roi_overlap(m)["cerebral-white-matter-right"] == 1.0


def _ventricle_phantom(vl_voxels, vr_voxels):
    n = 32
    aff = centered_affine(n)
    anat = np.full((n, n, n), 2, np.int32)
    flat = anat.reshape(-1)
    if vl_voxels:
        flat[:vl_voxels] = 4
    if vr_voxels:
        flat[vl_voxels:vl_voxels + vr_voxels] = 43
    anatomy = LabelVolume(anat, aff, scheme=PipelineConfig().anatomy_scheme)
    return _merged(n, anatomy=anatomy)


def test_ventricles_symmetric_not_flagged():
    m = _ventricle_phantom(100, 100)
    asym, enl = ventricle_metrics(m)
    assert asym.ratio == pytest.approx(1.0)
    assert not asym.flag
    assert enl is None   # no atlas reference volume given


def test_ventricles_two_to_one_flagged():
    m = _ventricle_phantom(200, 100)
    asym, _ = ventricle_metrics(m, r_asym=1.5)
    assert asym.ratio == pytest.approx(2.0)
    assert asym.flag


def test_ventricles_enlarged_against_reference():
    m = _ventricle_phantom(150, 150)   # total 0.3 mL at 1mm voxels
    _, enl = ventricle_metrics(m, atlas_reference_ml=0.2, r_enl=1.3)
    assert enl.ratio == pytest.approx(1.5)
    assert enl.flag
    _, enl2 = ventricle_metrics(m, atlas_reference_ml=0.25, r_enl=1.3)
    assert not enl2.flag


def test_ventricles_one_side_empty_infinite_ratio():
    m = _ventricle_phantom(100, 0)
    asym, _ = ventricle_metrics(m)
    assert np.isinf(asym.ratio)
    assert asym.flag


def test_ventricles_missing_is_an_error():
    m = _ventricle_phantom(0, 0)
    with pytest.raises(ValueError, match="ventricles missing"):
        ventricle_metrics(m)
