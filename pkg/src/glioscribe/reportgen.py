"""Findings-section generation and rule-based parsing of findings text.

The flow is: feature document -> prompt (template substitution) -> chat
endpoint -> findings text -> validation (forbidden modality terms,
unsupported numbers) -> pattern-grammar extraction back into a small
feature record for agreement scoring.

The "stub:" endpoint renders canned sentences from the metadata block of
the prompt; those sentences are exactly the canonical phrases the parser
understands, which is what makes the offline round trip exact.
"""

import hashlib
import json
import re
from dataclasses import dataclass, field, asdict
from datetime import datetime, timezone
from pathlib import Path

from .features import FeatureSet
from .llm import LLMClient


_PLACEHOLDERS = ("{example_findings}", "{subject_id}", "{metadata_json}")

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    variant: str                 # Full | Short
    example_findings: str
    body: str

    def __post_init__(self):
        if self.variant not in ("Full", "Short"):
            raise TemplateError(f"variant must be Full or Short, got {self.variant!r}")
        for ph in _PLACEHOLDERS:
            n = self.body.count(ph)
            if n != 1:
                raise TemplateError(
                    f"{self.variant} template must contain {ph} exactly once, found {n}")


def _data_dir():
    return Path(__file__).parent / "data"


def load_examples(directory=None):
    """Concatenate exemplar findings files (sorted for determinism)."""
    directory = Path(directory) if directory else _data_dir() / "exemplars"
    files = sorted(directory.glob("*.txt"))
    if not files:
        raise TemplateError(f"no exemplar findings in {directory}")
    return "\n\n".join(f.read_text().strip() for f in files)


def load_template(variant="Full", template_path=None, examples_dir=None):
    """Load a shipped or user-supplied prompt template."""
    if template_path is None:
        name = "full.txt" if variant == "Full" else "short.txt"
        template_path = _data_dir() / "prompts" / name
    body = Path(template_path).read_text()
    return PromptTemplate(variant, load_examples(examples_dir), body)


def build_prompt(features: FeatureSet, template: PromptTemplate) -> str:
    """Substitute the three placeholders. Deterministic for fixed inputs."""
    return (template.body
            .replace("{example_findings}", template.example_findings)
            .replace("{subject_id}", features.subject_id)
            .replace("{metadata_json}", features.to_json()))


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode()).hexdigest()[:16]


@dataclass
class GeneratedReport:
    subject_id: str
    findings_text: str
    model_name: str
    prompt_hash: str
    created_at: str
    violations: list = field(default_factory=list)

    def to_json(self):
        return json.dumps(asdict(self), indent=2)


def generate_report(prompt, settings, subject_id=None) -> GeneratedReport:
    """Run one prompt through the endpoint. Raises LLMError on failure."""
    if subject_id is None:
        m = re.search(r"METADATA \(for subject ([^)]+)\)", prompt)
        subject_id = m.group(1) if m else "unknown"
    client = LLMClient(settings)
    text = client.complete(prompt)
    return GeneratedReport(
        subject_id=subject_id,
        findings_text=text,
        model_name=settings.model,
        prompt_hash=prompt_digest(prompt),
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


# extraction ---------------------------------------------------------------

@dataclass
class ExtractedReportFeatures:
    """Best-effort record pulled from findings prose; absent fields None."""
    mls_mm: float = None
    mls_direction: str = None          # Left | Right
    num_lesions: int = None
    lesion_sizes_cm: list = None       # dominant lesion dims
    side: str = None                   # Left | Right | Bilateral
    tumor_volume_ml: float = None
    ventricular_effacement: bool = None
    cortical_involvement: bool = None

    def __post_init__(self):
        for name in ("mls_mm", "tumor_volume_ml"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative, got {v}")
        if self.lesion_sizes_cm is not None and \
                any(s < 0 for s in self.lesion_sizes_cm):
            raise ValueError("lesion sizes must be non-negative")

    def populated(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


_DIR_WORDS = {
    "left": "Left", "leftward": "Left", "right-to-left": "Left",
    "right": "Right", "rightward": "Right", "left-to-right": "Right",
}

_NUM = r"(\d+(?:\.\d+)?)"
_DIRX = r"(left(?:ward)?|right(?:ward)?|right-to-left|left-to-right)"

# "12 mm of right-to-left midline shift", "a 2 mm left midline shift"
_MLS_FWD = re.compile(
    _NUM + r"\s*mm\s+(?:of\s+)?" + _DIRX + r"\s+midline shift", re.I)
# "leftward midline shift by approximately 14 mm"
_MLS_INV = re.compile(
    _DIRX + r"\s+midline shift[^.]*?\b" + _NUM + r"\s*mm", re.I)
_MLS_NONE = re.compile(r"\bno (?:significant |measurable )?midline shift", re.I)

_SIZES = re.compile(
    r"measures\s+(?:approximately\s+|about\s+)?" + _NUM +
    r"(?:\s*x\s*" + _NUM + r")?(?:\s*x\s*" + _NUM + r")?\s*cm", re.I)

_SIDE_BEFORE = re.compile(
    r"\b(left|right|bilateral)(?:-sided)?\b[^.]{0,90}?\b(?:mass|lesion|tumou?r)\b",
    re.I)
_SIDE_AFTER = re.compile(
    r"\b(?:mass|lesion|tumou?r)\b[^.]{0,60}?\b(left|right)\s+"
    r"(?:frontal|parietal|temporal|occipital|insular|cerebellar|thalamic|hemispher)",
    re.I)

_COUNT_ONE = re.compile(r"\b(?:solitary|single)\b[^.]{0,40}?\b(?:lesion|mass)\b", re.I)
_COUNT_MANY = re.compile(
    r"\b(" + "|".join(_NUMBER_WORDS) + r"|\d+)\s+(?:\w+\s+){0,2}?lesions\b", re.I)

_VOLUME = re.compile(
    r"(?:tumou?r|lesion)\s+volume\s+(?:is|of|measures)\s+"
    r"(?:approximately\s+|about\s+)?" + _NUM + r"\s*ml\b", re.I)

_EFFACE_POS = re.compile(
    r"effacement[^.]{0,60}?ventric|ventric[^.]{0,60}?effac|"
    r"compression of[^.]{0,40}?ventricle", re.I)
_EFFACE_NEG = re.compile(r"ventricles are normal", re.I)

_CORT_NEG = re.compile(r"\b(?:no|without)\s+cortical (?:involvement|invasion)", re.I)
_CORT_POS = re.compile(
    r"cortical (?:involvement|invasion)|invades the cortex", re.I)


def parse_report_findings(text) -> ExtractedReportFeatures:
    """Pattern-grammar extraction; unmatched fields stay None."""
    out = ExtractedReportFeatures()

    m = _MLS_FWD.search(text)
    if m:
        out.mls_mm = float(m.group(1))
        out.mls_direction = _DIR_WORDS[m.group(2).lower()]
    else:
        m = _MLS_INV.search(text)
        if m:
            out.mls_mm = float(m.group(2))
            out.mls_direction = _DIR_WORDS[m.group(1).lower()]
        elif _MLS_NONE.search(text):
            out.mls_mm = 0.0

    m = _SIZES.search(text)
    if m:
        out.lesion_sizes_cm = [float(g) for g in m.groups() if g is not None]

    mb = _SIDE_BEFORE.search(text)
    ma = _SIDE_AFTER.search(text)
    if mb and (not ma or mb.start() <= ma.start()):
        out.side = mb.group(1).capitalize()
    elif ma:
        out.side = ma.group(1).capitalize()

    if _COUNT_ONE.search(text):
        out.num_lesions = 1
    else:
        m = _COUNT_MANY.search(text)
        if m:
            word = m.group(1).lower()
            out.num_lesions = _NUMBER_WORDS.get(word) or int(word)

    m = _VOLUME.search(text)
    if m:
        out.tumor_volume_ml = float(m.group(1))

    if _EFFACE_NEG.search(text):
        out.ventricular_effacement = False
    elif _EFFACE_POS.search(text):
        out.ventricular_effacement = True

    if _CORT_NEG.search(text):
        out.cortical_involvement = False
    elif _CORT_POS.search(text):
        out.cortical_involvement = True

    return out


# canonical rendering / stub endpoint --------------------------------------

_COUNT_RENDER = {v: k for k, v in _NUMBER_WORDS.items()}


def render_canonical_findings(ex: ExtractedReportFeatures) -> str:
    """Render the extraction record as parser-canonical sentences.

    parse_report_findings(render_canonical_findings(x)) recovers x for any
    record with 1-decimal numbers; the stub endpoint reuses this renderer.
    """
    mass_effect = []
    brain = []

    if ex.mls_mm is not None:
        if ex.mls_mm == 0 or ex.mls_direction is None:
            mass_effect.append("No midline shift is seen.")
        else:
            word = "leftward" if ex.mls_direction == "Left" else "rightward"
            mass_effect.append(
                f"There is a {ex.mls_mm:.1f} mm {word} midline shift.")
    if ex.ventricular_effacement is True:
        mass_effect.append("There is effacement of the adjacent lateral ventricle.")
    elif ex.ventricular_effacement is False:
        mass_effect.append("The ventricles are normal in size and configuration.")

    side_adj = ""
    if ex.side is not None:
        side_adj = {"Left": "left-sided ", "Right": "right-sided ",
                    "Bilateral": "bilateral "}[ex.side]
    if ex.num_lesions is not None and ex.num_lesions != 1:
        word = _COUNT_RENDER.get(ex.num_lesions, str(ex.num_lesions))
        brain.append(f"There are {word} discrete lesions.")
        brain.append(f"The dominant {side_adj}lesion is described below.")
    elif ex.num_lesions == 1:
        brain.append(f"There is a solitary {side_adj}lesion.")
    elif side_adj:
        brain.append(f"There is a {side_adj}mass.")
    if ex.lesion_sizes_cm:
        dims = " x ".join(f"{d:.1f}" for d in ex.lesion_sizes_cm)
        brain.append(f"The dominant lesion measures {dims} cm.")
    if ex.tumor_volume_ml is not None:
        brain.append(
            f"Total tumor volume is approximately {ex.tumor_volume_ml:.1f} mL.")
    if ex.cortical_involvement is True:
        brain.append("Cortical involvement is present.")
    elif ex.cortical_involvement is False:
        brain.append("There is no cortical involvement.")

    parts = []
    if mass_effect:
        parts.append("MASS EFFECT & VENTRICLES:\n" + " ".join(mass_effect))
    if brain:
        parts.append("BRAIN/ENHANCEMENT:\n" + " ".join(brain))
    return "\n\n".join(parts) if parts else "Unremarkable examination."


def reference_extraction(features: FeatureSet) -> ExtractedReportFeatures:
    """Ground-truth extraction record for agreement scoring (the perfect-
    extraction reference column)."""
    sizes = None
    if features.lesion_sizes_cm:
        sizes = [round(float(d), 1) for d in features.lesion_sizes_cm[0]]
    mls = features.max_mls_mm
    return ExtractedReportFeatures(
        mls_mm=None if mls is None else round(float(mls), 1),
        mls_direction=features.mls_direction,
        num_lesions=features.num_lesions or None,
        lesion_sizes_cm=sizes,
        side=features.side_of_epicenter,
        tumor_volume_ml=round(features.total_tumor_volume_ml, 1)
        if features.total_tumor_volume_ml else None,
        ventricular_effacement=features.asymmetrical_ventricles,
        cortical_involvement=features.cortical_involvement,
    )


def render_stub_findings(prompt: str) -> str:
    """Offline completion: read the metadata block back out of the prompt
    and phrase it with the canonical renderer, plus unit-free color."""
    m = re.search(r"METADATA \(for subject [^)]+\):", prompt)
    if m is None:
        raise ValueError("prompt has no metadata block")
    start = prompt.index("{", m.end())
    meta = json.JSONDecoder().raw_decode(prompt, start)[0]

    ex = reference_extraction(FeatureSet.from_json(json.dumps(meta)))
    text = render_canonical_findings(ex)
    extras = []
    quality = meta.get("enhancement_quality")
    if quality and quality != "None":
        style = "marked" if quality == "Marked" else "mild"
        margin = ""
        if str(meta.get("enhancement_thickness", "")).startswith("Thick"):
            margin = " with a thick enhancing margin"
        extras.append(f"The mass shows {style} enhancement{margin}.")
    if meta.get("edema_crosses_midline"):
        extras.append("Surrounding vasogenic edema crosses the midline.")
    if extras:
        text += " " + " ".join(extras)
    return text


# validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str        # forbidden-modality | unsupported-number | style
    message: str


# lowercase words matched case-insensitively; abbreviations exactly
_FORBIDDEN_WORDS = ("diffusion", "perfusion", "spectroscopy", "susceptibility")
_FORBIDDEN_ABBREV = ("MRA", "SWI", "DWI", "ADC")

_UNIT_CHAIN = re.compile(
    r"(\d+(?:\.\d+)?(?:\s*x\s*\d+(?:\.\d+)?)*)\s*(mm|cm|ml)\b", re.I)

MLS_TOL_MM = 1.0
SIZE_TOL_CM = 0.2
VOLUME_RTOL = 0.1


def _supported_numbers(features: FeatureSet):
    mm = {0.0}
    if features.max_mls_mm is not None:
        mm.add(float(features.max_mls_mm))
    cm = {float(d) for lesion in features.lesion_sizes_cm for d in lesion}
    ml = {float(features.total_tumor_volume_ml), float(features.ed_volume_ml)}
    return {"mm": mm, "cm": cm, "ml": ml}


def validate_report(text, features: FeatureSet = None):
    """Flag forbidden modality terms and metadata-unsupported numbers."""
    violations = []
    metadata_text = features.to_json().lower() if features is not None else ""

    for word in _FORBIDDEN_WORDS:
        if re.search(rf"\b{word}\b", text, re.I) and word not in metadata_text:
            violations.append(Violation(
                "forbidden-modality", f"mentions {word!r}"))
    for abbrev in _FORBIDDEN_ABBREV:
        if re.search(rf"\b{abbrev}\b", text) and \
                abbrev.lower() not in metadata_text:
            violations.append(Violation(
                "forbidden-modality", f"mentions {abbrev!r}"))

    if features is not None:
        supported = _supported_numbers(features)
        for m in _UNIT_CHAIN.finditer(text):
            unit = m.group(2).lower()
            for tok in re.split(r"\s*x\s*", m.group(1)):
                value = float(tok)
                if not _number_supported(value, unit, supported):
                    violations.append(Violation(
                        "unsupported-number",
                        f"{tok} {unit} not backed by any metadata value"))
        if features.max_mls_mm is not None and features.max_mls_mm < 5.0:
            m = _MLS_FWD.search(text) or _MLS_INV.search(text)
            if m:
                violations.append(Violation(
                    "style",
                    "shift under 5 mm should be phrased as no shift"))
    return violations


def _number_supported(value, unit, supported):
    if unit == "mm":
        return any(abs(value - v) <= MLS_TOL_MM for v in supported["mm"])
    if unit == "cm":
        return any(abs(value - v) <= SIZE_TOL_CM for v in supported["cm"])
    return any(v > 0 and abs(value - v) / v <= VOLUME_RTOL or value == v == 0.0
               for v in supported["ml"])


# agreement ----------------------------------------------------------------

_CATEGORICAL = ("mls_direction", "side", "ventricular_effacement",
                "cortical_involvement")
_NUMERIC = ("mls_mm", "num_lesions", "tumor_volume_ml")


def feature_agreement(extracted: ExtractedReportFeatures,
                      reference: ExtractedReportFeatures):
    """Per-feature match/error record over jointly populated fields."""
    got = extracted.populated()
    want = reference.populated()
    record = {}
    for name in _CATEGORICAL:
        if name in got and name in want:
            record[name] = {"kind": "categorical",
                            "match": got[name] == want[name]}
    for name in _NUMERIC:
        if name in got and name in want:
            record[name] = {"kind": "numeric",
                            "abs_error": abs(float(got[name]) - float(want[name]))}
    if "lesion_sizes_cm" in got and "lesion_sizes_cm" in want:
        pairs = list(zip(got["lesion_sizes_cm"], want["lesion_sizes_cm"]))
        if pairs:
            err = sum(abs(a - b) for a, b in pairs) / len(pairs)
            record["lesion_sizes_cm"] = {"kind": "numeric", "abs_error": err}
    if not record:
        raise ValueError("no overlapping populated fields")
    return record
