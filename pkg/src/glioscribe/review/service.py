"""HTTP backend for blinded report review.

Case data lives under <data_dir>/cases/<case_id>/ as NIfTI volumes plus
a reports/ directory with one findings text file per framework. The
framework name is the file stem and is treated as secret: responses
identify reports only by slot letters in an order decided by
blinding_permutation, and an audit test greps every payload for
registered framework names.
"""

import hashlib
import hmac
import json
import secrets
import threading
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, Response
from pydantic import ValidationError

from .. import nifti, render
from ..midline import ideal_midline
from ..volume import LabelVolume, world_to_voxel
from .blinding import blinding_permutation, slot_names
from .schema import SCHEMA_VERSION, Assessment, schema_document
from .storage import AssessmentStore, _check_id

SEQUENCES = ("t1n", "t1c", "t2w", "t2f")
OVERLAYS = ("tumor", "btreport_midline", "ideal_midline")

TUMOR_SCHEME = {0: "background", 1: "NCR", 2: "ED", 3: "ET"}


class CaseRepository:
    """Read-only view of the case directory with volume caching."""

    def __init__(self, case_root: Path):
        self.root = Path(case_root)
        self._cache = {}
        self._lock = threading.Lock()

    def case_ids(self):
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir()
                      if p.is_dir() and (p / "reports").is_dir())

    def case_dir(self, case_id):
        _check_id(case_id, "case")
        d = self.root / case_id
        if not d.is_dir():
            raise HTTPException(404, f"unknown case {case_id!r}")
        return d

    def sequences(self, case_id):
        d = self.case_dir(case_id)
        found = []
        for seq in SEQUENCES:
            if self._find(d, seq) is not None:
                found.append(seq)
        return found

    def frameworks(self, case_id):
        d = self.case_dir(case_id) / "reports"
        names = sorted(p.stem for p in d.glob("*.txt"))
        if len(names) < 2:
            raise HTTPException(500, f"case {case_id!r} has fewer than 2 reports")
        return names

    def report_text(self, case_id, framework):
        return (self.case_dir(case_id) / "reports" / f"{framework}.txt").read_text()

    @staticmethod
    def _find(case_dir, stem):
        for suffix in (".nii.gz", ".nii"):
            p = case_dir / f"{stem}{suffix}"
            if p.exists():
                return p
        return None

    def volume(self, case_id, stem, kind):
        with self._lock:
            key = (case_id, stem)
            if key not in self._cache:
                path = self._find(self.case_dir(case_id), stem)
                if path is None:
                    raise HTTPException(404, f"{stem} not available for {case_id!r}")
                self._cache[key] = nifti.load_nifti(path, kind=kind)
            return self._cache[key]

    def ideal_line(self, case_id):
        """Rasterized per-slice ideal midline segments, derived from the
        subject midline mask."""
        with self._lock:
            key = (case_id, "__ideal__")
            if key in self._cache:
                return self._cache[key]
        mid = self.volume(case_id, "midline", "labels")
        out = np.zeros(mid.dims, np.uint8)
        ideal = ideal_midline(mid)
        for z, (A, P) in ideal.segments.items():
            av = world_to_voxel(mid.affine, A)
            pv = world_to_voxel(mid.affine, P)
            steps = int(np.ceil(np.abs(pv - av).max())) * 2 + 1
            for t in np.linspace(0.0, 1.0, steps):
                i, j, _ = np.rint(av + t * (pv - av)).astype(np.int64)
                if 0 <= i < out.shape[0] and 0 <= j < out.shape[1]:
                    out[i, j, z] = 1
        vol = LabelVolume(out, mid.affine, scheme={0: "background", 1: "ideal"})
        with self._lock:
            self._cache[key] = vol
        return vol


def _framework_leak_guard(payload_bytes: bytes, frameworks):
    blob = payload_bytes.lower()
    for name in frameworks:
        if name.lower().encode() in blob:
            raise RuntimeError(f"blinding breach: response mentions {name!r}")


def create_app(data_dir, seed=1234, store_dir=None) -> FastAPI:
    data_dir = Path(data_dir)
    repo = CaseRepository(data_dir / "cases")
    store = AssessmentStore(store_dir or data_dir / "assessments")

    secret_path = data_dir / ".token_secret"
    if secret_path.exists():
        secret = secret_path.read_bytes()
    else:
        data_dir.mkdir(parents=True, exist_ok=True)
        secret = secrets.token_bytes(32)
        secret_path.write_bytes(secret)

    app = FastAPI(title="blinded report review", version="0.1.0")

    def mint_token(reviewer_id):
        return hmac.new(secret, reviewer_id.encode(), hashlib.sha256).hexdigest()[:32]

    def check_auth(reviewer, token):
        try:
            _check_id(reviewer, "reviewer")
        except ValueError as e:
            raise HTTPException(401, str(e)) from e
        if not hmac.compare_digest(mint_token(reviewer), token or ""):
            raise HTTPException(401, "invalid reviewer token")

    @app.post("/api/login")
    async def login(request: Request):
        body = await request.json()
        name = (body or {}).get("reviewer", "")
        try:
            _check_id(name, "reviewer")
        except ValueError as e:
            raise HTTPException(422, str(e)) from e
        return {"reviewer_id": name, "token": mint_token(name)}

    @app.get("/api/schema")
    def get_schema():
        return schema_document()

    @app.get("/api/cases")
    def list_cases():
        out = []
        for case_id in repo.case_ids():
            out.append({
                "case_id": case_id,
                "sequences": repo.sequences(case_id),
                "n_reports": len(repo.frameworks(case_id)),
            })
        return {"schema_version": SCHEMA_VERSION, "cases": out}

    @app.get("/api/cases/{case_id}")
    def get_case(case_id: str, reviewer: str = Query(...),
                 token: str = Query("")):
        check_auth(reviewer, token)
        frameworks = repo.frameworks(case_id)
        order = blinding_permutation(case_id, reviewer, seed, len(frameworks))
        slots = []
        for slot, idx in zip(slot_names(len(frameworks)), order):
            slots.append({"slot": slot,
                          "findings_text": repo.report_text(case_id, frameworks[idx])})
        sequences = repo.sequences(case_id)
        if not sequences:
            raise HTTPException(500, f"case {case_id!r} has no image volumes")
        vol = repo.volume(case_id, sequences[0], "scalar")
        overlays = [o for o in OVERLAYS
                    if repo._find(repo.case_dir(case_id),
                                  "tumor" if o == "tumor" else "midline")]
        bundle = {
            "schema_version": SCHEMA_VERSION,
            "case_id": case_id,
            "sequences": sequences,
            "dims": list(vol.dims),
            "spacing_mm": [round(s, 6) for s in vol.spacing],
            "z_count": vol.dims[2],
            "overlays": overlays,
            "slots": slots,
            "prior_assessment": store.load(reviewer, case_id),
        }
        _framework_leak_guard(json.dumps(bundle).encode(), frameworks)
        return bundle

    @app.get("/api/cases/{case_id}/slice")
    def get_slice(case_id: str, seq: str = Query(...), z: int = Query(...),
                  overlays: str = Query(""), window: str = Query(""),
                  reviewer: str = Query(...), token: str = Query("")):
        check_auth(reviewer, token)
        if seq not in SEQUENCES:
            raise HTTPException(422, f"unknown sequence {seq!r}")
        vol = repo.volume(case_id, seq, "scalar")
        if not 0 <= z < vol.dims[2]:
            raise HTTPException(422,
                                f"slice {z} out of range 0..{vol.dims[2] - 1}")
        win = None
        if window:
            try:
                lo, hi = (float(v) for v in window.split(","))
            except ValueError as e:
                raise HTTPException(422, f"bad window {window!r}") from e
            if not lo < hi:
                raise HTTPException(422, "window lo must be < hi")
            win = (lo, hi)
        layer_list = []
        for name in [o for o in overlays.split(",") if o]:
            if name not in OVERLAYS:
                raise HTTPException(422, f"unknown overlay {name!r}")
            if name == "tumor":
                ov = repo.volume(case_id, "tumor", "labels")
                ov = LabelVolume(ov.data, ov.affine, scheme=TUMOR_SCHEME)
                palette = render.palette_for(ov, render.TUMOR_RGBA)
            elif name == "btreport_midline":
                ov = repo.volume(case_id, "midline", "labels")
                palette = {v: render.MIDLINE_RGBA for v in np.unique(ov.data) if v}
            else:
                ov = repo.ideal_line(case_id)
                palette = {1: render.IDEAL_RGBA}
            layer_list.append((ov, palette))
        rgba = render.render_axial_slice(vol, z, window=win, overlays=layer_list)
        png = render.encode_png(rgba)
        sx, sy = vol.spacing[0], vol.spacing[1]
        return Response(png, media_type="image/png", headers={
            "X-Pixel-Spacing-MM": f"{sx:.6g},{sy:.6g}",
            "X-Slice-Count": str(vol.dims[2]),
        })

    @app.post("/api/assessments")
    async def post_assessment(request: Request, reviewer: str = Query(...),
                              token: str = Query("")):
        check_auth(reviewer, token)
        body = await request.json()
        try:
            doc = Assessment.model_validate(body)
        except ValidationError as e:
            raise HTTPException(422, detail=json.loads(e.json())) from e
        if doc.reviewer_id != reviewer:
            raise HTTPException(422, "reviewer_id does not match session")
        frameworks = repo.frameworks(doc.case_id)
        expected = set(slot_names(len(frameworks)))
        if set(doc.reports) != expected:
            raise HTTPException(
                422, f"assessed slots {sorted(doc.reports)} != case slots "
                     f"{sorted(expected)}")
        doc.submitted_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        path = store.save(doc.model_dump())
        return {"stored": True, "document": path.name,
                "versions_kept": len(store.history(reviewer, doc.case_id))}

    @app.get("/api/assessments/{reviewer_id}/{case_id}")
    def get_assessment(reviewer_id: str, case_id: str, token: str = Query("")):
        check_auth(reviewer_id, token)
        doc = store.load(reviewer_id, case_id)
        if doc is None:
            raise HTTPException(404, "no stored assessment")
        return doc

    return app
