import io
import itertools
import json
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image
from pydantic import ValidationError

from glioscribe.nifti import save_nifti
from glioscribe.review.blinding import (
    _lehmer_decode,
    blinding_permutation,
    slot_names,
)
from glioscribe.review.schema import (
    Assessment,
    Measurement,
    ReportAssessment,
    schema_document,
)
from glioscribe.review.service import create_app
from glioscribe.review.storage import AssessmentStore
from glioscribe.volume import LabelVolume, Volume

from .conftest import centered_affine, make_midline, make_tumor


# blinding ------------------------------------------------------------------

def test_lehmer_decode_identity_and_reversal():
    assert _lehmer_decode(0, 4) == [0, 1, 2, 3]
    assert _lehmer_decode(math.factorial(4) - 1, 4) == [3, 2, 1, 0]


def test_lehmer_decode_enumerates_all_permutations():
    perms = {tuple(_lehmer_decode(k, 3)) for k in range(6)}
    assert perms == set(itertools.permutations(range(3)))


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_blinding_is_a_permutation(n):
    perm = blinding_permutation("case-01", "alice", 99, n)
    assert sorted(perm) == list(range(n))


def test_blinding_deterministic_per_triple():
    a = blinding_permutation("case-01", "alice", 7, 4)
    b = blinding_permutation("case-01", "alice", 7, 4)
    assert a == b
    assert blinding_permutation("case-02", "alice", 7, 4) != a or \
        blinding_permutation("case-01", "bob", 7, 4) != a


def test_blinding_varies_with_each_key_part():
    base = blinding_permutation("case-01", "alice", 7, 4)
    assert any(blinding_permutation("case-01", f"rev{i}", 7, 4) != base
               for i in range(8))
    assert any(blinding_permutation(f"case-{i}", "alice", 7, 4) != base
               for i in range(8))
    assert any(blinding_permutation("case-01", "alice", i, 4) != base
               for i in range(8))


def test_blinding_covers_every_ordering():
    seen = {tuple(blinding_permutation(f"case-{i}", "alice", 5, 4))
            for i in range(600)}
    assert seen == set(itertools.permutations(range(4)))


def test_blinding_rejects_single_framework():
    with pytest.raises(ValueError, match="at least 2"):
        blinding_permutation("case-01", "alice", 7, 1)


def test_slot_names():
    assert slot_names(3) == ["A", "B", "C"]
    assert slot_names(26)[-1] == "Z"
    with pytest.raises(ValueError, match="letters"):
        slot_names(27)


# assessment schema ---------------------------------------------------------

def _report(**overrides):
    body = {
        "hallucinations": "None",
        "missing_features": "No",
        "intended_use": "As a first draft",
        "decision_support": 3,
        "clinical_accuracy": 4,
        "clinical_omission": 2,
        "clinical_structure": 3,
    }
    body.update(overrides)
    return body


def _assessment(slots=("A", "B"), **overrides):
    doc = {
        "case_id": "case-01",
        "reviewer_id": "alice",
        "reports": {s: _report() for s in slots},
        "ranking": list(slots),
    }
    doc.update(overrides)
    return doc


def test_schema_accepts_minimal_assessment():
    doc = Assessment.model_validate(_assessment())
    assert doc.schema_version == 1
    assert set(doc.reports) == {"A", "B"}
    assert doc.measurements == []


def test_schema_minor_hallucination_requires_types():
    with pytest.raises(ValidationError, match="required"):
        ReportAssessment.model_validate(_report(hallucinations="Minor"))
    ok = ReportAssessment.model_validate(_report(
        hallucinations="Minor", hallucination_types=["Fabricated finding"]))
    assert ok.hallucination_types == ["Fabricated finding"]


def test_schema_clean_report_rejects_stray_types():
    with pytest.raises(ValidationError, match="omitted"):
        ReportAssessment.model_validate(_report(
            hallucination_types=["Fabricated finding"]))


def test_schema_rejects_unknown_and_duplicate_options():
    with pytest.raises(ValidationError, match="unknown options"):
        ReportAssessment.model_validate(_report(
            hallucinations="Major", hallucination_types=["Wrong contrast"]))
    with pytest.raises(ValidationError, match="duplicate"):
        ReportAssessment.model_validate(_report(
            hallucinations="Major",
            hallucination_types=["Fabricated finding", "Fabricated finding"]))


def test_schema_missing_features_conditionals():
    with pytest.raises(ValidationError, match="required"):
        ReportAssessment.model_validate(_report(missing_features="Some"))
    with pytest.raises(ValidationError, match="omitted"):
        ReportAssessment.model_validate(_report(
            missing_elements=["Midline shift"]))
    ok = ReportAssessment.model_validate(_report(
        missing_features="Many",
        missing_elements=["Midline shift", "Tumor size/extent"]))
    assert len(ok.missing_elements) == 2


def test_schema_other_requires_free_text_both_directions():
    with pytest.raises(ValidationError, match="hallucination_other"):
        ReportAssessment.model_validate(_report(
            hallucinations="Minor", hallucination_types=["Other"]))
    with pytest.raises(ValidationError, match="hallucination_other"):
        ReportAssessment.model_validate(_report(
            hallucination_other="left over text"))
    with pytest.raises(ValidationError, match="missing_other"):
        ReportAssessment.model_validate(_report(
            missing_features="Some", missing_elements=["Other"]))
    ok = ReportAssessment.model_validate(_report(
        hallucinations="Minor", hallucination_types=["Other"],
        hallucination_other="invented a cyst",
        missing_features="Some", missing_elements=["Other"],
        missing_other="no comment on edema"))
    assert ok.hallucination_other == "invented a cyst"


def test_schema_likert_bounds():
    for value in (0, 5):
        with pytest.raises(ValidationError):
            ReportAssessment.model_validate(_report(decision_support=value))
    for value in (1, 4):
        ReportAssessment.model_validate(_report(clinical_structure=value))


def test_schema_level_and_use_vocabulary():
    with pytest.raises(ValidationError, match="one of"):
        ReportAssessment.model_validate(_report(hallucinations="Severe"))
    with pytest.raises(ValidationError, match="one of"):
        ReportAssessment.model_validate(_report(intended_use="Daily driver"))


def test_schema_ranking_must_be_permutation():
    for ranking in (["A"], ["A", "B", "C"], ["A", "A"], ["B", "C"]):
        with pytest.raises(ValidationError, match="permutation"):
            Assessment.model_validate(_assessment(ranking=ranking))
    Assessment.model_validate(_assessment(ranking=["B", "A"]))


def test_schema_slot_keys_are_single_capitals():
    doc = _assessment()
    doc["reports"] = {"a": _report(), "B": _report()}
    with pytest.raises(ValidationError, match="capital"):
        Assessment.model_validate(doc)
    doc["reports"] = {"AB": _report()}
    with pytest.raises(ValidationError, match="capital"):
        Assessment.model_validate(doc)


def test_schema_requires_some_report():
    doc = _assessment()
    doc["reports"] = {}
    doc["ranking"] = []
    with pytest.raises(ValidationError, match="at least one"):
        Assessment.model_validate(doc)


def test_schema_measurement_distance_non_negative():
    Measurement.model_validate(
        {"p1": [0, 0], "p2": [3, 4], "distance_mm": 2.5})
    with pytest.raises(ValidationError):
        Measurement.model_validate(
            {"p1": [0, 0], "p2": [3, 4], "distance_mm": -2.5})


def test_schema_document_contract():
    doc = schema_document()
    assert doc["schema_version"] == 1
    assert doc["hallucination_trigger_levels"] == ["Minor", "Major"]
    assert doc["missing_trigger_levels"] == ["Some", "Many"]
    assert doc["likert_range"] == [1, 4]
    assert "Other" in doc["hallucination_types"]
    assert "Other" in doc["missing_elements"]
    assert set(doc["likert_items"]) == {
        "decision_support", "clinical_accuracy",
        "clinical_omission", "clinical_structure"}


# storage -------------------------------------------------------------------

def _doc(reviewer="alice", case="case-01", note="v1"):
    return {"reviewer_id": reviewer, "case_id": case, "comments": note}


def test_store_save_load_round_trip(tmp_path):
    store = AssessmentStore(tmp_path)
    path = store.save(_doc())
    assert path.exists()
    assert store.load("alice", "case-01") == _doc()
    assert store.load("alice", "case-99") is None
    assert store.list_saved() == [["alice", "case-01"]]


def test_store_resubmission_keeps_history(tmp_path):
    store = AssessmentStore(tmp_path)
    store.save(_doc(note="v1"))
    store.save(_doc(note="v2"))
    store.save(_doc(note="v3"))
    assert store.load("alice", "case-01")["comments"] == "v3"
    history = store.history("alice", "case-01")
    assert len(history) == 2
    assert [json.loads(p.read_text())["comments"] for p in history] == \
        ["v1", "v2"]


def test_store_leaves_no_partial_files(tmp_path):
    store = AssessmentStore(tmp_path)
    store.save(_doc())
    store.save(_doc(note="v2"))
    assert list(tmp_path.glob("*.tmp")) == []


def test_store_isolated_per_reviewer_and_case(tmp_path):
    store = AssessmentStore(tmp_path)
    store.save(_doc("alice", "case-01", "a1"))
    store.save(_doc("bob", "case-01", "b1"))
    store.save(_doc("alice", "case-02", "a2"))
    assert store.load("alice", "case-01")["comments"] == "a1"
    assert store.load("bob", "case-01")["comments"] == "b1"
    assert store.history("alice", "case-01") == []
    assert store.list_saved() == [
        ["alice", "case-01"], ["alice", "case-02"], ["bob", "case-01"]]


@pytest.mark.parametrize("bad", ["../alice", "a/b", "", ".hidden", "x y"])
def test_store_rejects_unsafe_identifiers(tmp_path, bad):
    store = AssessmentStore(tmp_path)
    with pytest.raises(ValueError, match="identifier"):
        store.save(_doc(reviewer=bad))
    with pytest.raises(ValueError, match="identifier"):
        store.load("alice", bad)


# HTTP service --------------------------------------------------------------

FRAMEWORKS = ("redwood", "basalt", "cobalt")
N = 24


def _case_grid(case_dir):
    """One small case: a T1 scalar, tumor and midline masks, 3 reports."""
    spacing = (2.0, 2.0, 2.0)
    affine = centered_affine(N, spacing)
    rng = np.random.default_rng(5)
    t1 = rng.normal(100.0, 20.0, (N, N, N)).astype(np.float32)
    save_nifti(Volume(t1, affine), case_dir / "t1n.nii.gz")
    tumor = make_tumor(n=N, spacing=spacing, r_ed=6, r_et=4, r_ncr=2)
    save_nifti(tumor, case_dir / "tumor.nii.gz")
    midline = make_midline(n=N, spacing=spacing, bump_mm=4.0,
                           direction="Left", y_margin=4)
    save_nifti(midline, case_dir / "midline.nii.gz")
    reports = case_dir / "reports"
    reports.mkdir()
    for i, name in enumerate(FRAMEWORKS):
        (reports / f"{name}.txt").write_text(
            f"Report body number {i}.\nNo midline shift is seen.\n")
    return tumor


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    data_dir = tmp_path_factory.mktemp("review-data")
    case_dir = data_dir / "cases" / "case-01"
    case_dir.mkdir(parents=True)
    tumor = _case_grid(case_dir)
    app = create_app(data_dir, seed=1234)
    with TestClient(app) as client:
        yield {"client": client, "data_dir": data_dir, "tumor": tumor}


def _login(client, reviewer="alice"):
    resp = client.post("/api/login", json={"reviewer": reviewer})
    assert resp.status_code == 200
    return resp.json()["token"]


def test_service_login_mints_stable_tokens(service):
    client = service["client"]
    token = _login(client)
    assert len(token) == 32 and int(token, 16) >= 0
    assert _login(client) == token
    assert _login(client, "bob") != token
    assert client.post("/api/login", json={"reviewer": "../etc"}).status_code == 422


def test_service_schema_endpoint(service):
    resp = service["client"].get("/api/schema")
    assert resp.status_code == 200
    assert resp.json() == schema_document()


def test_service_case_listing(service):
    resp = service["client"].get("/api/cases")
    assert resp.status_code == 200
    body = resp.json()
    assert body["schema_version"] == 1
    assert body["cases"] == [
        {"case_id": "case-01", "sequences": ["t1n"], "n_reports": 3}]


def test_service_bundle_requires_auth(service):
    client = service["client"]
    assert client.get("/api/cases/case-01",
                      params={"reviewer": "alice"}).status_code == 401
    assert client.get(
        "/api/cases/case-01",
        params={"reviewer": "alice", "token": "0" * 32}).status_code == 401


def test_service_unknown_case_404(service):
    client = service["client"]
    token = _login(client)
    resp = client.get("/api/cases/case-99",
                      params={"reviewer": "alice", "token": token})
    assert resp.status_code == 404


def test_service_bundle_shape(service):
    client = service["client"]
    token = _login(client)
    resp = client.get("/api/cases/case-01",
                      params={"reviewer": "alice", "token": token})
    assert resp.status_code == 200
    bundle = resp.json()
    assert bundle["case_id"] == "case-01"
    assert bundle["sequences"] == ["t1n"]
    assert bundle["dims"] == [N, N, N]
    assert bundle["spacing_mm"] == [2.0, 2.0, 2.0]
    assert bundle["z_count"] == N
    assert bundle["overlays"] == ["tumor", "btreport_midline", "ideal_midline"]
    assert [s["slot"] for s in bundle["slots"]] == ["A", "B", "C"]
    assert bundle["prior_assessment"] is None
    texts = {s["findings_text"] for s in bundle["slots"]}
    assert texts == {f"Report body number {i}.\nNo midline shift is seen.\n"
                     for i in range(3)}


def test_service_blinding_stable_and_reviewer_specific(service):
    client = service["client"]

    def order_for(reviewer):
        token = _login(client, reviewer)
        bundle = client.get("/api/cases/case-01",
                            params={"reviewer": reviewer,
                                    "token": token}).json()
        return tuple(s["findings_text"] for s in bundle["slots"])

    assert order_for("alice") == order_for("alice")
    orders = {order_for(f"reviewer{i}") for i in range(8)}
    assert len(orders) > 1                       # the blinding reorders
    assert len({frozenset(o) for o in orders}) == 1   # same content set


def test_service_responses_never_name_frameworks(service):
    client = service["client"]
    token = _login(client)
    payloads = [
        client.get("/api/cases").content,
        client.get("/api/schema").content,
        client.get("/api/cases/case-01",
                   params={"reviewer": "alice", "token": token}).content,
    ]
    for raw in payloads:
        blob = raw.lower()
        for name in FRAMEWORKS:
            assert name.encode() not in blob


def test_service_slice_png_and_headers(service):
    client = service["client"]
    token = _login(client)
    resp = client.get("/api/cases/case-01/slice",
                      params={"seq": "t1n", "z": 12, "reviewer": "alice",
                              "token": token})
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"
    assert resp.headers["X-Pixel-Spacing-MM"] == "2,2"
    assert resp.headers["X-Slice-Count"] == str(N)
    img = np.asarray(Image.open(io.BytesIO(resp.content)))
    assert img.shape == (N, N, 4)


def test_service_slice_tumor_overlay_pixels(service):
    client = service["client"]
    token = _login(client)
    z = 12
    params = {"seq": "t1n", "z": z, "reviewer": "alice", "token": token}
    plain = client.get("/api/cases/case-01/slice", params=params)
    overlaid = client.get("/api/cases/case-01/slice",
                          params={**params, "overlays": "tumor"})
    base = np.asarray(Image.open(io.BytesIO(plain.content))).astype(int)
    over = np.asarray(Image.open(io.BytesIO(overlaid.content))).astype(int)
    changed = set(zip(*np.nonzero(np.abs(over - base).sum(axis=2))))
    tumor_slice = service["tumor"].data[:, :, z]
    expected = {(N - 1 - y, x) for x, y in zip(*np.nonzero(tumor_slice))}
    assert changed == expected
    assert len(expected) > 0


@pytest.mark.parametrize("params,fragment", [
    ({"seq": "dwi", "z": 0}, "unknown sequence"),
    ({"seq": "t1n", "z": N}, "out of range"),
    ({"seq": "t1n", "z": -1}, "out of range"),
    ({"seq": "t1n", "z": 0, "window": "abc"}, "bad window"),
    ({"seq": "t1n", "z": 0, "window": "5,5"}, "lo must be"),
    ({"seq": "t1n", "z": 0, "overlays": "vessels"}, "unknown overlay"),
])
def test_service_slice_input_validation(service, params, fragment):
    client = service["client"]
    token = _login(client)
    resp = client.get("/api/cases/case-01/slice",
                      params={**params, "reviewer": "alice", "token": token})
    assert resp.status_code == 422
    assert fragment in json.dumps(resp.json())


def test_service_assessment_round_trip(service):
    client = service["client"]
    token = _login(client, "carol")
    doc = _assessment(slots=("A", "B", "C"), reviewer_id="carol",
                      ranking=["B", "A", "C"],
                      measurements=[{"p1": [0, 0], "p2": [3, 4],
                                     "distance_mm": 10.0}])
    resp = client.post("/api/assessments",
                       params={"reviewer": "carol", "token": token}, json=doc)
    assert resp.status_code == 200
    assert resp.json()["stored"] is True
    assert resp.json()["versions_kept"] == 0

    stored = client.get("/api/assessments/carol/case-01",
                        params={"token": token})
    assert stored.status_code == 200
    body = stored.json()
    assert body["ranking"] == ["B", "A", "C"]
    assert body["submitted_at"].endswith("+00:00")
    assert body["measurements"][0]["distance_mm"] == 10.0

    again = client.post("/api/assessments",
                        params={"reviewer": "carol", "token": token}, json=doc)
    assert again.json()["versions_kept"] == 1

    bundle = client.get("/api/cases/case-01",
                        params={"reviewer": "carol", "token": token}).json()
    assert bundle["prior_assessment"]["ranking"] == ["B", "A", "C"]


def test_service_assessment_slot_set_must_match_case(service):
    client = service["client"]
    token = _login(client, "dave")
    doc = _assessment(slots=("A", "B"), reviewer_id="dave")
    resp = client.post("/api/assessments",
                       params={"reviewer": "dave", "token": token}, json=doc)
    assert resp.status_code == 422
    assert "case slots" in resp.json()["detail"]


def test_service_assessment_reviewer_must_match_session(service):
    client = service["client"]
    token = _login(client, "erin")
    doc = _assessment(slots=("A", "B", "C"), reviewer_id="mallory",
                      ranking=["A", "B", "C"])
    resp = client.post("/api/assessments",
                       params={"reviewer": "erin", "token": token}, json=doc)
    assert resp.status_code == 422
    assert "does not match" in resp.json()["detail"]


def test_service_assessment_schema_errors_are_422(service):
    client = service["client"]
    token = _login(client, "frank")
    doc = _assessment(slots=("A", "B", "C"), reviewer_id="frank",
                      ranking=["A", "B", "C"])
    doc["reports"]["A"]["hallucinations"] = "Minor"   # no types given
    resp = client.post("/api/assessments",
                       params={"reviewer": "frank", "token": token}, json=doc)
    assert resp.status_code == 422
    assert "required" in json.dumps(resp.json())


def test_service_assessment_auth(service):
    client = service["client"]
    doc = _assessment(slots=("A", "B", "C"))
    resp = client.post("/api/assessments",
                       params={"reviewer": "alice", "token": "bad"}, json=doc)
    assert resp.status_code == 401
    token = _login(client, "grace")
    resp = client.get("/api/assessments/grace/case-01",
                      params={"token": token})
    assert resp.status_code == 404
    resp = client.get("/api/assessments/grace/case-01",
                      params={"token": "bad"})
    assert resp.status_code == 401
