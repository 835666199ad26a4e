"""Risk-aware LLM driving decisions.

Driver risk fields and QPR (:mod:`drfagent.risk_field`), percentile risk
notifications (:mod:`drfagent.risk_assessor`), trajectory scenes
(:mod:`drfagent.scene`), vector memory (:mod:`drfagent.memory`), the decision
loop (:mod:`drfagent.agent`) and the evaluation harness
(:mod:`drfagent.evaluation`).
"""

from .agent import DecisionAgent, DecisionRecord, Modules, ReflectionRecord, assemble_prompt, build_system_message, decode_action
from .config import Config
from .errors import BackendError, BadInput, DrfAgentError, ParseError
from .evaluation import builtin_suite, evaluate, idm_policy, qpr_sweeps, safety_oracle
from .idm import IdmParams, idm_accel
from .llm import ChatMessage, ReplayClient, ScriptedClient, WireClient
from .memory import HashingEmbedder, MemoryRecord, VectorStore
from .risk_assessor import RiskLevel, RiskThresholds, calibrate_thresholds, classify_risk, risk_notification
from .risk_field import (
    Convention,
    CostTable,
    DrfParams,
    Grid,
    GridSpec,
    QprReport,
    VehicleClass,
    VehicleState,
    drf_evaluate,
    qpr_total,
)
from .scene import Action, LabeledScene, Scene, TrajectoryTable, extract_scene, parse_tracks, render_scene_text, synth_scenario

__version__ = "0.1.0"
