"""Blinded review backend: deterministic slot shuffling, assessment
schema validation, crash-safe persistence, and the HTTP service."""

from .blinding import blinding_permutation, slot_names
from .schema import Assessment, ReportAssessment, schema_document
from .storage import AssessmentStore

__all__ = [
    "blinding_permutation", "slot_names",
    "Assessment", "ReportAssessment", "schema_document",
    "AssessmentStore",
]
