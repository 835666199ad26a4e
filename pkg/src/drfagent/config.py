"""One JSON document configuring every stage of the pipeline."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import BadInput
from .idm import IdmParams
from .risk_assessor import DEFAULT_TEMPLATES
from .risk_field import Convention, CostTable, DrfParams, GridSpec
from .scene import LabelerConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SceneConfig:
    radius: float = 50.0
    cap: int = 8
    lane_width: float = 3.5
    wheelbase_ratio: float = 0.6  # wheelbase as a fraction of vehicle length
    stride: int = 25  # frames between scenes cut from a recorded table


@dataclass(frozen=True)
class AgentConfig:
    risk_enabled: bool = True
    memory_enabled: bool = True
    few_shots: Mapping[str, int] = field(
        default_factory=lambda: {"highway": 3, "intersection": 3, "roundabout": 2}
    )
    default_few_shots: int = 3
    max_retries: int = 2
    temperature: float = 0.0
    risk_emphasis: str = "normal"  # "normal" | "high"
    retrieval_query: str = "scene"  # "scene" | "scene+risk"
    safety_gate: bool = False
    log_latency: bool = False
    system_message: str | None = None  # verbatim override

    def __post_init__(self):
        if self.risk_emphasis not in ("normal", "high"):
            raise BadInput("agent.risk_emphasis must be 'normal' or 'high'")
        if self.retrieval_query not in ("scene", "scene+risk"):
            raise BadInput("agent.retrieval_query must be 'scene' or 'scene+risk'")
        if self.max_retries < 0:
            raise BadInput("agent.max_retries must be >= 0")

    def shots_for(self, tag: str) -> int:
        return int(self.few_shots.get(tag, self.default_few_shots))


@dataclass(frozen=True)
class OracleConfig:
    horizon: float = 4.0
    dt: float = 0.1
    ttc_threshold: float = 2.0
    decel_threshold: float = 3.0
    accel: float = 2.0
    decel: float = 2.0
    lane_change_time: float = 3.0
    lane_width: float = 3.5
    turn_radius: float = 12.0

    def __post_init__(self):
        if not (self.horizon > 0 and self.dt > 0):
            raise BadInput("oracle.horizon and oracle.dt must be > 0")


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "scripted"  # "scripted" | "replay" | "wire"
    rules_path: str | None = None  # None: bundled rule table
    replay_path: str | None = None
    base_url: str = "http://localhost:8000/v1"
    model: str = "gpt-4"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    embedder: str = "hash"  # "hash" | "wire"
    embedding_model: str = "text-embedding-3-small"
    embedding_dimension: int = 256

    def __post_init__(self):
        if self.kind not in ("scripted", "replay", "wire"):
            raise BadInput("backend.kind must be scripted, replay or wire")
        if self.embedder not in ("hash", "wire"):
            raise BadInput("backend.embedder must be hash or wire")


@dataclass(frozen=True)
class CalibrationConfig:
    samples: int = 2000
    seed: int = 7


def _build(cls, data: Mapping | None, section: str):
    if data is None:
        return cls()
    if not isinstance(data, Mapping):
        raise BadInput(f"config section {section!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise BadInput(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise BadInput(f"bad {section!r} section: {exc}") from None


@dataclass(frozen=True)
class Config:
    drf: DrfParams = field(default_factory=DrfParams)
    costs: CostTable = field(default_factory=CostTable)
    grid: GridSpec = field(default_factory=GridSpec)
    convention: Convention = Convention.AREA_INTEGRAL
    continuity_rel_tol: float = 0.1  # arc vs straight field, relative to the peak value
    thresholds_path: str | None = None
    risk_templates: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_TEMPLATES))
    scene: SceneConfig = field(default_factory=SceneConfig)
    labeler: LabelerConfig = field(default_factory=LabelerConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    backend: BackendConfig = field(default_factory=BackendConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    seed: int = 0

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def with_agent(self, **changes) -> "Config":
        return dataclasses.replace(self, agent=dataclasses.replace(self.agent, **changes))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "drf": self.drf.to_dict(),
            "costs": self.costs.to_dict(),
            "grid": self.grid.to_dict(),
            "convention": self.convention.value,
            "continuity_rel_tol": self.continuity_rel_tol,
            "thresholds_path": self.thresholds_path,
            "risk_templates": dict(self.risk_templates),
            "scene": dataclasses.asdict(self.scene),
            "labeler": dataclasses.asdict(self.labeler),
            "agent": {**dataclasses.asdict(self.agent), "few_shots": dict(self.agent.few_shots)},
            "oracle": dataclasses.asdict(self.oracle),
            "idm": self.idm.to_dict(),
            "backend": dataclasses.asdict(self.backend),
            "calibration": dataclasses.asdict(self.calibration),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Config":
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise BadInput(f"config schema_version {version} is not supported (expected {SCHEMA_VERSION})")
        known = {f.name for f in dataclasses.fields(cls)} | {"schema_version"}
        unknown = set(d) - known
        if unknown:
            raise BadInput(f"unknown config keys: {sorted(unknown)}")
        try:
            drf = DrfParams.from_dict(d.get("drf", {}))
            costs = CostTable.from_dict(d["costs"]) if "costs" in d else CostTable()
            grid = GridSpec.from_dict(d.get("grid", {}))
            convention = Convention(d.get("convention", Convention.AREA_INTEGRAL.value))
            idm = IdmParams.from_dict(d.get("idm", {}))
        except (TypeError, ValueError, KeyError) as exc:
            raise BadInput(f"bad risk configuration: {exc}") from None
        templates = dict(DEFAULT_TEMPLATES)
        templates.update(d.get("risk_templates") or {})
        return cls(
            drf=drf,
            costs=costs,
            grid=grid,
            convention=convention,
            continuity_rel_tol=float(d.get("continuity_rel_tol", 0.1)),
            thresholds_path=d.get("thresholds_path"),
            risk_templates=templates,
            scene=_build(SceneConfig, d.get("scene"), "scene"),
            labeler=_build(LabelerConfig, d.get("labeler"), "labeler"),
            agent=_build(AgentConfig, d.get("agent"), "agent"),
            oracle=_build(OracleConfig, d.get("oracle"), "oracle"),
            idm=idm,
            backend=_build(BackendConfig, d.get("backend"), "backend"),
            calibration=_build(CalibrationConfig, d.get("calibration"), "calibration"),
            seed=int(d.get("seed", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Config":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise BadInput(f"cannot read config {path}: {exc}") from None
        if not isinstance(doc, Mapping):
            raise BadInput("config must be a JSON object")
        return cls.from_dict(doc)
