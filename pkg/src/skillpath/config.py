"""Project and scenario configuration documents."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .capture import TrackerErrorModel
from .errors import ConfigError
from .kinematics import ValidationPolicy
from .scenarios import BUILTIN_SCENARIOS, PROFILES


@dataclass(frozen=True)
class FusionParams:
    resample_spacing_mm: float = 5.0
    weights_xyz: tuple[float, float, float] = (1.0, 1.0, 0.1)
    downsample_tol_pos_mm: float = 0.5
    downsample_tol_rot_deg: float = 1.0
    orientation_window_s: float = 0.2
    speed_window_s: float = 0.2
    speed_clamp_mm_s: tuple[float, float] = (1.0, 1000.0)
    segment_speed_floor_mm_s: float = 5.0
    segment_dwell_s: float = 0.5

    def __post_init__(self):
        if self.resample_spacing_mm <= 0:
            raise ConfigError("resample_spacing_mm must be positive")
        if self.downsample_tol_pos_mm <= 0 or self.downsample_tol_rot_deg <= 0:
            raise ConfigError("downsample tolerances must be positive")
        v_min, v_max = self.speed_clamp_mm_s
        if not (0 < v_min < v_max):
            raise ConfigError("speed clamp must satisfy 0 < min < max")
        if any(w < 0 for w in self.weights_xyz) or not any(w > 0 for w in self.weights_xyz):
            raise ConfigError("weights must be non-negative and not all zero")
        if self.orientation_window_s < 0 or self.speed_window_s < 0:
            raise ConfigError("smoothing windows must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["weights_xyz"] = list(self.weights_xyz)
        d["speed_clamp_mm_s"] = list(self.speed_clamp_mm_s)
        return d

    @staticmethod
    def from_dict(doc: dict) -> "FusionParams":
        doc = dict(doc)
        if "weights_xyz" in doc:
            doc["weights_xyz"] = tuple(doc["weights_xyz"])
        if "speed_clamp_mm_s" in doc:
            doc["speed_clamp_mm_s"] = tuple(doc["speed_clamp_mm_s"])
        return FusionParams(**doc)


@dataclass(frozen=True)
class EmitConfig:
    name: str = "JOB1"
    tool: int = 0

    def to_dict(self) -> dict:
        return {"name": self.name, "tool": self.tool}

    @staticmethod
    def from_dict(doc: dict) -> "EmitConfig":
        return EmitConfig(**doc)


@dataclass(frozen=True)
class ProjectConfig:
    calibration_path: Path
    arm_model_path: Path
    nominal_path_path: Path
    trace_path: Path
    fusion: FusionParams = FusionParams()
    validation: ValidationPolicy = ValidationPolicy()
    emit: EmitConfig = EmitConfig()
    mount_fixed_xyz_deg: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def snapshot(self) -> dict:
        """Self-contained dict stored in session files (absolute paths)."""
        return {
            "calibration_path": str(self.calibration_path),
            "arm_model_path": str(self.arm_model_path),
            "nominal_path_path": str(self.nominal_path_path),
            "trace_path": str(self.trace_path),
            "fusion": self.fusion.to_dict(),
            "validation": self.validation.to_dict(),
            "emit": self.emit.to_dict(),
            "mount_fixed_xyz_deg": list(self.mount_fixed_xyz_deg),
        }

    @staticmethod
    def from_snapshot(doc: dict) -> "ProjectConfig":
        return ProjectConfig(
            calibration_path=Path(doc["calibration_path"]),
            arm_model_path=Path(doc["arm_model_path"]),
            nominal_path_path=Path(doc["nominal_path_path"]),
            trace_path=Path(doc["trace_path"]),
            fusion=FusionParams.from_dict(doc["fusion"]),
            validation=ValidationPolicy.from_dict(doc["validation"]),
            emit=EmitConfig.from_dict(doc["emit"]),
            mount_fixed_xyz_deg=tuple(doc.get("mount_fixed_xyz_deg", (0.0, 0.0, 0.0))),
        )


_PROJECT_KEYS = {
    "version", "calibration", "arm_model", "nominal_path", "trace",
    "fusion", "validation", "emit", "mount_fixed_xyz_deg",
}


def load_project_config(path: str | Path) -> ProjectConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    extra = set(doc) - _PROJECT_KEYS
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    if doc.get("version") != 1:
        raise ConfigError(f"{path}: unsupported version {doc.get('version')!r}")
    base = path.parent.resolve()

    def resolve_file(key: str) -> Path:
        if key not in doc:
            raise ConfigError(f"{path}: missing required key {key!r}")
        p = Path(doc[key])
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise ConfigError(f"{path}: {key} file does not exist: {p}")
        return p

    fusion = FusionParams.from_dict(doc.get("fusion", {}))
    validation = ValidationPolicy.from_dict(doc.get("validation", {}))
    emit = EmitConfig.from_dict(doc.get("emit", {}))
    mount = tuple(doc.get("mount_fixed_xyz_deg", (0.0, 0.0, 0.0)))
    if len(mount) != 3:
        raise ConfigError(f"{path}: mount_fixed_xyz_deg must be a 3-element list")
    return ProjectConfig(
        calibration_path=resolve_file("calibration"),
        arm_model_path=resolve_file("arm_model"),
        nominal_path_path=resolve_file("nominal_path"),
        trace_path=resolve_file("trace"),
        fusion=fusion,
        validation=validation,
        emit=emit,
        mount_fixed_xyz_deg=mount,
    )


@dataclass(frozen=True)
class ScenarioOutputs:
    trace: Path
    truth: Path
    nominal_path: Path


@dataclass(frozen=True)
class ScenarioConfig:
    """None for speed/rate/receptor/profile means: use the scenario's own
    defaults (built-ins carry sensible ones)."""

    scenario: str  # builtin name or "custom"
    outputs: ScenarioOutputs
    nominal_path_in: Path | None = None  # required for "custom"
    profile: str | None = None
    speed_mm_s: float | None = None
    sample_rate_hz: float | None = None
    receptor_mm: tuple[float, float, float] | None = None
    error_model: TrackerErrorModel = field(default_factory=TrackerErrorModel)


_SCENARIO_KEYS = {
    "version", "scenario", "nominal_path_in", "profile", "speed_mm_s",
    "sample_rate_hz", "receptor_mm", "error_model", "outputs",
}
_ERROR_MODEL_KEYS = {
    "z_drift_mm_at_max_range", "drift_growth", "orientation_noise_deg", "xy_jitter_mm",
}


def load_scenario_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"scenario config not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    extra = set(doc) - _SCENARIO_KEYS
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    if doc.get("version") != 1:
        raise ConfigError(f"{path}: unsupported version {doc.get('version')!r}")
    name = doc.get("scenario")
    if name != "custom" and name not in BUILTIN_SCENARIOS:
        raise ConfigError(
            f"{path}: scenario must be 'custom' or one of {sorted(BUILTIN_SCENARIOS)}"
        )
    base = path.parent.resolve()
    outputs_doc = doc.get("outputs", {})
    for key in ("trace", "truth", "nominal_path"):
        if key not in outputs_doc:
            raise ConfigError(f"{path}: outputs.{key} is required")

    def out_path(key: str) -> Path:
        p = Path(outputs_doc[key])
        return p if p.is_absolute() else base / p

    nominal_in = None
    if name == "custom":
        if "nominal_path_in" not in doc:
            raise ConfigError(f"{path}: custom scenarios need 'nominal_path_in'")
        nominal_in = Path(doc["nominal_path_in"])
        if not nominal_in.is_absolute():
            nominal_in = base / nominal_in
        if not nominal_in.exists():
            raise ConfigError(f"{path}: nominal_path_in does not exist: {nominal_in}")
    profile = doc.get("profile")
    if profile is not None and profile not in PROFILES:
        raise ConfigError(f"{path}: unknown profile {profile!r}; options: {sorted(PROFILES)}")
    em_doc = doc.get("error_model", {})
    extra = set(em_doc) - _ERROR_MODEL_KEYS
    if extra:
        raise ConfigError(f"{path}: unknown error_model keys {sorted(extra)}")
    if "orientation_noise_deg" in em_doc:
        em_doc = dict(em_doc)
        em_doc["orientation_noise_deg"] = tuple(em_doc["orientation_noise_deg"])
    model = TrackerErrorModel(**em_doc)
    receptor = doc.get("receptor_mm")
    return ScenarioConfig(
        scenario=name,
        outputs=ScenarioOutputs(out_path("trace"), out_path("truth"), out_path("nominal_path")),
        nominal_path_in=nominal_in,
        profile=profile,
        speed_mm_s=None if "speed_mm_s" not in doc else float(doc["speed_mm_s"]),
        sample_rate_hz=None if "sample_rate_hz" not in doc else float(doc["sample_rate_hz"]),
        receptor_mm=None if receptor is None else tuple(receptor),
        error_model=model,
    )
