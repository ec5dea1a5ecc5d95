"""Pipeline configuration: key=value files with command-line overrides.

Flags always win over the file.  Unknown keys are rejected so typos do not
silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

from .errors import ConfigInvalid

ALIGNMENT_SOURCES = ("gmm-hmm", "dnn", "dnn-hmm")


@dataclass
class PipelineConfig:
    # alignment flow
    alignment_source: str = "dnn"
    silence_policy: str = "optional_between"
    # model sizes
    hmm_components: int = 16
    ubm_components: int = 512
    pgmm_components: int = 16
    pgmm_em_iterations: int = 4
    mlp_hidden: str = "512,512,512,512"
    mlp_epochs: int = 15
    mlp_learning_rate: float = 0.05
    mlp_batch_size: int = 256
    # backends
    relevance: float = 5.0
    ivector_rank: int = 400
    tv_iterations: int = 5
    lda_dim: int = 100
    plda_iterations: int = 10
    # content verification
    epsilon: float = 1e-5
    class_level: str = "digit"
    # feature stream per stage (GMM-side models vs the frame classifier)
    gmm_feature_kind: str = "mfcc60"
    dnn_feature_kind: str = "spliced"
    # detection-cost operating points, "c_miss,c_fa,p_target"
    dcf_sre08: str = "10,1,0.01"
    dcf_sre10: str = "1,1,0.001"
    # misc
    seed: int = 0
    # model paths (fallbacks when a stage flag is omitted)
    hmm_path: str = ""
    ubm_path: str = ""
    mlp_path: str = ""
    pgmm_path: str = ""
    background_path: str = ""
    speakers_path: str = ""
    tv_path: str = ""
    backend_path: str = ""

    def __post_init__(self):
        if self.alignment_source not in ALIGNMENT_SOURCES:
            raise ConfigInvalid(
                f"alignment_source must be one of {ALIGNMENT_SOURCES}, "
                f"got {self.alignment_source!r}"
            )
        if self.class_level not in ("digit", "state"):
            raise ConfigInvalid(f"class_level must be digit or state, got {self.class_level!r}")
        for field_name in ("gmm_feature_kind", "dnn_feature_kind"):
            value = getattr(self, field_name)
            if value not in ("fbank120", "mfcc60", "spliced"):
                raise ConfigInvalid(f"{field_name} must name a feature kind, got {value!r}")
        self.dcf_params("sre08"), self.dcf_params("sre10")  # validate eagerly

    @property
    def mlp_hidden_dims(self) -> tuple:
        try:
            dims = tuple(int(v) for v in self.mlp_hidden.split(",") if v.strip())
        except ValueError:
            raise ConfigInvalid(f"bad mlp_hidden value {self.mlp_hidden!r}") from None
        if not dims or min(dims) < 1:
            raise ConfigInvalid(f"bad mlp_hidden value {self.mlp_hidden!r}")
        return dims

    def dcf_params(self, name: str):
        from .eval_trials import DcfParams

        raw = getattr(self, f"dcf_{name}", None)
        if raw is None:
            raise ConfigInvalid(f"unknown DCF operating point {name!r}")
        try:
            c_miss, c_fa, p_target = (float(v) for v in raw.split(","))
            return DcfParams(c_miss, c_fa, p_target)
        except ValueError as exc:
            raise ConfigInvalid(f"bad dcf_{name} value {raw!r}: {exc}") from None


_FIELD_TYPES = {f.name: f.type for f in fields(PipelineConfig)}


def parse_config_lines(lines) -> dict:
    """Parse key=value lines into typed overrides."""
    overrides = {}
    for no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"config line {no}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigInvalid(f"config line {no}: unknown key {key!r}")
        overrides[key] = _coerce(key, value, no)
    return overrides


def _coerce(key: str, value: str, line_no: int):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError:
        raise ConfigInvalid(f"config line {line_no}: bad value {value!r} for {key}") from None


def load_config(path: str | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Build a config from an optional file plus explicit overrides (flags win)."""
    merged: dict = {}
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            merged.update(parse_config_lines(fh))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _FIELD_TYPES:
            raise ConfigInvalid(f"unknown config key {key!r}")
        merged[key] = value
    return PipelineConfig(**merged)
