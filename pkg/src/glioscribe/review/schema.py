"""Assessment document schema with conditional-field validation.

Follow-up fields must be present exactly when their trigger level is
selected, the four clinical ratings are 4-point integers, and the slot
ranking must be a complete permutation of the assessed slots.
"""

from typing import List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator

SCHEMA_VERSION = 1

HALLUCINATION_LEVELS = ("None", "Minor", "Major")
HALLUCINATION_TYPES = (
    "Incorrect anatomical location of tumor",
    "Incorrect tumor characteristics",
    "Incorrect clinical implication",
    "Fabricated finding",
    "Other",
)
MISSING_LEVELS = ("No", "Some", "Many")
MISSING_ELEMENTS = (
    "Tumor size/extent",
    "Enhancement characteristics",
    "Edema/mass effect",
    "Midline shift",
    "Multifocality",
    "Invasion/eloquent cortex",
    "Other",
)
INTENDED_USE = (
    "As a first draft",
    "As a cross-check/second reader",
    "As a summary aid only",
    "Would not use",
)
LIKERT_ITEMS = ("decision_support", "clinical_accuracy",
                "clinical_omission", "clinical_structure")


def _require_conditional(level, triggers, values, allowed, field_name):
    if level in triggers:
        if not values:
            raise ValueError(
                f"{field_name} is required when level is {level!r}")
        bad = set(values) - set(allowed)
        if bad:
            raise ValueError(f"{field_name}: unknown options {sorted(bad)}")
        if len(set(values)) != len(values):
            raise ValueError(f"{field_name}: duplicate options")
    elif values:
        raise ValueError(
            f"{field_name} must be omitted when level is {level!r}")


class Measurement(BaseModel):
    p1: Tuple[float, float]
    p2: Tuple[float, float]
    distance_mm: float = Field(ge=0)


class ReportAssessment(BaseModel):
    hallucinations: str
    hallucination_types: List[str] = Field(default_factory=list)
    hallucination_other: str = ""
    missing_features: str
    missing_elements: List[str] = Field(default_factory=list)
    missing_other: str = ""
    intended_use: str
    decision_support: int = Field(ge=1, le=4)
    clinical_accuracy: int = Field(ge=1, le=4)
    clinical_omission: int = Field(ge=1, le=4)
    clinical_structure: int = Field(ge=1, le=4)
    comments: str = ""

    @field_validator("hallucinations")
    @classmethod
    def _check_halluc_level(cls, v):
        if v not in HALLUCINATION_LEVELS:
            raise ValueError(f"must be one of {HALLUCINATION_LEVELS}")
        return v

    @field_validator("missing_features")
    @classmethod
    def _check_missing_level(cls, v):
        if v not in MISSING_LEVELS:
            raise ValueError(f"must be one of {MISSING_LEVELS}")
        return v

    @field_validator("intended_use")
    @classmethod
    def _check_use(cls, v):
        if v not in INTENDED_USE:
            raise ValueError(f"must be one of {INTENDED_USE}")
        return v

    @model_validator(mode="after")
    def _check_conditionals(self):
        _require_conditional(
            self.hallucinations, ("Minor", "Major"), self.hallucination_types,
            HALLUCINATION_TYPES, "hallucination_types")
        _require_conditional(
            self.missing_features, ("Some", "Many"), self.missing_elements,
            MISSING_ELEMENTS, "missing_elements")
        if "Other" in self.hallucination_types and not self.hallucination_other.strip():
            raise ValueError("hallucination_other text required when Other selected")
        if "Other" not in self.hallucination_types and self.hallucination_other:
            raise ValueError("hallucination_other only allowed with Other selected")
        if "Other" in self.missing_elements and not self.missing_other.strip():
            raise ValueError("missing_other text required when Other selected")
        if "Other" not in self.missing_elements and self.missing_other:
            raise ValueError("missing_other only allowed with Other selected")
        return self


class Assessment(BaseModel):
    schema_version: int = SCHEMA_VERSION
    case_id: str = Field(min_length=1)
    reviewer_id: str = Field(min_length=1)
    reports: dict                      # slot letter -> ReportAssessment
    ranking: List[str]                 # most useful first
    measurements: List[Measurement] = Field(default_factory=list)
    comments: str = ""
    submitted_at: Optional[str] = None

    @field_validator("reports")
    @classmethod
    def _check_reports(cls, v):
        if not v:
            raise ValueError("at least one report assessment required")
        parsed = {}
        for slot, body in v.items():
            if not (isinstance(slot, str) and len(slot) == 1 and slot.isupper()):
                raise ValueError(f"slot keys are single capital letters, got {slot!r}")
            parsed[slot] = body if isinstance(body, ReportAssessment) \
                else ReportAssessment.model_validate(body)
        return parsed

    @model_validator(mode="after")
    def _check_ranking(self):
        if sorted(self.ranking) != sorted(self.reports):
            raise ValueError(
                f"ranking {self.ranking} is not a permutation of slots "
                f"{sorted(self.reports)}")
        return self


def schema_document():
    """Machine-readable form contract served to clients."""
    return {
        "schema_version": SCHEMA_VERSION,
        "hallucination_levels": list(HALLUCINATION_LEVELS),
        "hallucination_trigger_levels": ["Minor", "Major"],
        "hallucination_types": list(HALLUCINATION_TYPES),
        "missing_levels": list(MISSING_LEVELS),
        "missing_trigger_levels": ["Some", "Many"],
        "missing_elements": list(MISSING_ELEMENTS),
        "intended_use": list(INTENDED_USE),
        "likert_items": list(LIKERT_ITEMS),
        "likert_range": [1, 4],
    }
