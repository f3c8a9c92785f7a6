"""Crash-safe assessment persistence.

One JSON document per (reviewer, case). Writes go to a temp file in the
same directory followed by os.replace, so a reader always sees either
the previous or the new complete document. Re-submission moves the prior
version into history/ first. A file lock serializes writers.
"""

import json
import os
import re
import time
from pathlib import Path

from filelock import FileLock

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


def _check_id(name, kind):
    if not _ID_RE.match(name):
        raise ValueError(f"invalid {kind} identifier {name!r}")
    return name


class AssessmentStore:
    def __init__(self, root):
        self.root = Path(root)
        (self.root / "history").mkdir(parents=True, exist_ok=True)

    def _path(self, reviewer_id, case_id):
        _check_id(reviewer_id, "reviewer")
        _check_id(case_id, "case")
        return self.root / f"{reviewer_id}__{case_id}.json"

    def save(self, doc: dict) -> Path:
        path = self._path(doc["reviewer_id"], doc["case_id"])
        lock = FileLock(str(path) + ".lock")
        with lock:
            if path.exists():
                stamp = time.strftime("%Y%m%dT%H%M%S") + f".{time.time_ns() % 10**9:09d}"
                prior = self.root / "history" / f"{path.stem}.{stamp}.json"
                os.replace(path, prior)
            tmp = path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(doc, indent=2))
            os.replace(tmp, path)
        return path

    def load(self, reviewer_id, case_id):
        path = self._path(reviewer_id, case_id)
        if not path.exists():
            return None
        return json.loads(path.read_text())

    def history(self, reviewer_id, case_id):
        stem = self._path(reviewer_id, case_id).stem
        return sorted((self.root / "history").glob(f"{stem}.*.json"))

    def list_saved(self):
        return sorted(p.stem.split("__", 1) for p in self.root.glob("*__*.json"))
