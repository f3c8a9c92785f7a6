"""Pipeline configuration: thresholds, label schemes, endpoint settings.

Everything here is overridable from a YAML config file; every decision
threshold used by the feature rules is surfaced as an explicit named value
and logged into FeatureSet provenance.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field

import yaml

# FreeSurfer-flavored integer codes; any map can be substituted via config.
DEFAULT_ANATOMY_SCHEME = {
    2: "cerebral-white-matter-left",
    3: "cerebral-cortex-left",
    4: "lateral-ventricle-left",
    10: "thalamus-left",
    14: "third-ventricle",
    15: "fourth-ventricle",
    16: "brain-stem",
    17: "hippocampus-left",
    41: "cerebral-white-matter-right",
    42: "cerebral-cortex-right",
    43: "lateral-ventricle-right",
    49: "thalamus-right",
    53: "hippocampus-right",
    251: "corpus-callosum",
    1018: "inferior-frontal-opercular-left",
    1021: "pericalcarine-left",
    1022: "postcentral-left",
    1024: "precentral-left",
    2018: "inferior-frontal-opercular-right",
    2021: "pericalcarine-right",
    2022: "postcentral-right",
    2024: "precentral-right",
}

# current convention first; "legacy" uses 4 for enhancing tumor
TUMOR_LABEL_SCHEMES = {
    "default": {"NCR": 1, "ED": 2, "ET": 3},
    "legacy": {"NCR": 1, "ED": 2, "ET": 4},
}

DEFAULT_ELOQUENT_REGIONS = {
    "motor": ["precentral-left", "precentral-right"],
    "sensory": ["postcentral-left", "postcentral-right"],
    "vision": ["pericalcarine-left", "pericalcarine-right"],
    "language": ["inferior-frontal-opercular-left"],
}

CORTICAL_GM_NAMES = ["cerebral-cortex-left", "cerebral-cortex-right"]
CEREBRAL_WM_NAMES = ["cerebral-white-matter-left", "cerebral-white-matter-right"]
LATERAL_VENTRICLE_NAMES = ["lateral-ventricle-left", "lateral-ventricle-right"]
VENTRICLE_NAMES = LATERAL_VENTRICLE_NAMES + ["third-ventricle"]


@dataclass
class Thresholds:
    """Decision thresholds for the categorical feature rules."""

    r_asym: float = 1.5            # ventricle asymmetry ratio
    r_enl: float = 1.3             # ventricular enlargement vs atlas reference
    min_lesion_ml: float = 0.05    # speckle floor for lesion counting
    crossing_min_ml: float = 1.0   # per-side volume for midline crossing
    q_mild: float = 0.05           # enhancing proportion below which quality is Mild
    v_min_ml: float = 0.1          # generic involvement volume floor
    sat_max_ml: float = 1.0        # satellite nodules are smaller than this
    deep_wm_mm: float = 10.0       # WM within this distance of ventricles is "deep"
    thick_rim_mm: float = 3.0      # enhancement rim thicker than this is Thick
    epicenter_frac: float = 0.6    # side fraction above which a side is declared
    location_min_frac: float = 0.15
    location_max_regions: int = 3
    no_shift_mm: float = 5.0       # below this, reports should phrase "no shift"
    tol_mls_mm: float = 1.0        # validator tolerances
    tol_size_cm: float = 0.2
    tol_volume_rel: float = 0.1

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class LLMSettings:
    base_url: str = "stub:"
    model: str = "offline-stub"
    api_key_env: str = ""
    timeout_s: float = 60.0
    attempts: int = 3
    backoff_s: float = 0.5
    temperature: float = 0.2
    max_in_flight: int = 4


@dataclass
class PipelineConfig:
    thresholds: Thresholds = field(default_factory=Thresholds)
    anatomy_scheme: dict = field(default_factory=lambda: dict(DEFAULT_ANATOMY_SCHEME))
    tumor_labels: dict = field(default_factory=lambda: dict(TUMOR_LABEL_SCHEMES["default"]))
    eloquent_regions: dict = field(default_factory=lambda: copy.deepcopy(DEFAULT_ELOQUENT_REGIONS))
    cortical_gm_names: list = field(default_factory=lambda: list(CORTICAL_GM_NAMES))
    cerebral_wm_names: list = field(default_factory=lambda: list(CEREBRAL_WM_NAMES))
    lateral_ventricle_names: list = field(default_factory=lambda: list(LATERAL_VENTRICLE_NAMES))
    ventricle_names: list = field(default_factory=lambda: list(VENTRICLE_NAMES))
    atlas_reference_ml: float = None
    llm: LLMSettings = field(default_factory=LLMSettings)
    prompt_variant: str = "full"
    seed: int = 1234

    def as_dict(self):
        d = {
            "thresholds": self.thresholds.as_dict(),
            "anatomy_scheme": {str(k): v for k, v in sorted(self.anatomy_scheme.items())},
            "tumor_labels": dict(sorted(self.tumor_labels.items())),
            "eloquent_regions": {k: list(v) for k, v in sorted(self.eloquent_regions.items())},
            "cortical_gm_names": list(self.cortical_gm_names),
            "cerebral_wm_names": list(self.cerebral_wm_names),
            "lateral_ventricle_names": list(self.lateral_ventricle_names),
            "ventricle_names": list(self.ventricle_names),
            "atlas_reference_ml": self.atlas_reference_ml,
            "llm": {k: getattr(self.llm, k) for k in self.llm.__dataclass_fields__},
            "prompt_variant": self.prompt_variant,
            "seed": self.seed,
        }
        return d


def config_hash(cfg: PipelineConfig) -> str:
    blob = json.dumps(cfg.as_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


class ConfigError(ValueError):
    pass


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Build a PipelineConfig from defaults, an optional YAML file, and an
    optional flat dict of dotted-key overrides (e.g. {"thresholds.q_mild": 0.1})."""
    cfg = PipelineConfig()
    doc = {}
    if path is not None:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config root must be a mapping")
    for key, value in doc.items():
        _apply(cfg, key, value, source=str(path))
    for key, value in (overrides or {}).items():
        _apply_dotted(cfg, key, value)
    _validate(cfg)
    return cfg


def _apply(cfg, key, value, source):
    if key == "thresholds":
        for k, v in value.items():
            if k not in Thresholds.__dataclass_fields__:
                raise ConfigError(f"{source}: unknown threshold {k!r}")
            setattr(cfg.thresholds, k, float(v) if k != "location_max_regions" else int(v))
    elif key == "llm":
        for k, v in value.items():
            if k not in LLMSettings.__dataclass_fields__:
                raise ConfigError(f"{source}: unknown llm setting {k!r}")
            setattr(cfg.llm, k, v)
    elif key == "anatomy_scheme":
        cfg.anatomy_scheme = {int(k): str(v) for k, v in value.items()}
    elif key == "tumor_labels":
        if isinstance(value, str):
            if value not in TUMOR_LABEL_SCHEMES:
                raise ConfigError(f"{source}: unknown tumor label scheme {value!r}")
            cfg.tumor_labels = dict(TUMOR_LABEL_SCHEMES[value])
        else:
            cfg.tumor_labels = {str(k): int(v) for k, v in value.items()}
    elif key in ("eloquent_regions",):
        cfg.eloquent_regions = {str(k): list(v) for k, v in value.items()}
    elif key in ("cortical_gm_names", "cerebral_wm_names",
                 "lateral_ventricle_names", "ventricle_names"):
        setattr(cfg, key, list(value))
    elif key == "atlas_reference_ml":
        cfg.atlas_reference_ml = None if value is None else float(value)
    elif key == "prompt_variant":
        if value not in ("full", "short"):
            raise ConfigError(f"{source}: prompt_variant must be full or short")
        cfg.prompt_variant = value
    elif key == "seed":
        cfg.seed = int(value)
    else:
        raise ConfigError(f"{source}: unknown config key {key!r}")


def _apply_dotted(cfg, dotted, value):
    if "." in dotted:
        head, tail = dotted.split(".", 1)
        target = getattr(cfg, head, None)
        if target is None or tail not in getattr(target, "__dataclass_fields__", {}):
            raise ConfigError(f"unknown config override {dotted!r}")
        current = getattr(target, tail)
        setattr(target, tail, type(current)(value) if current is not None else value)
    else:
        _apply(cfg, dotted, value, source="<override>")


def _validate(cfg):
    t = cfg.thresholds
    for name in ("r_asym", "r_enl", "min_lesion_ml", "crossing_min_ml", "q_mild",
                 "v_min_ml", "sat_max_ml", "deep_wm_mm", "thick_rim_mm",
                 "epicenter_frac", "location_min_frac", "tol_mls_mm",
                 "tol_size_cm", "tol_volume_rel"):
        if getattr(t, name) <= 0:
            raise ConfigError(f"threshold {name} must be positive")
    required = {"NCR", "ED", "ET"}
    if set(cfg.tumor_labels) != required:
        raise ConfigError(f"tumor_labels must define exactly {sorted(required)}")
