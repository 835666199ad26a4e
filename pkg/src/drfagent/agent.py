"""Closed-loop decision agent: risk text, retrieved memories, LLM reasoning, reflection."""

from __future__ import annotations

import re
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .config import AgentConfig, Config
from .errors import BackendError, BadInput, ParseError
from .llm import REFLECTION_MARKER, ChatMessage, LlmClient
from .memory import MemoryRecord, VectorStore
from .risk_assessor import RiskThresholds, risk_notification
from .risk_field import qpr_total
from .scene import Action, LabeledScene, Scene, render_scene_text

MATCHED = "matched"
MISMATCHED = "mismatched"
NO_LABEL = "no_label"

RETRY_PROMPT = "Answer with 'Final decision: <token>'."

_ACTION_HELP = {
    Action.ACCELERATE: "speed up while keeping the current lane",
    Action.DECELERATE: "slow down while keeping the current lane",
    Action.LANE_CHANGE_LEFT: "move into the adjacent lane on the left",
    Action.LANE_CHANGE_RIGHT: "move into the adjacent lane on the right",
    Action.TURN_LEFT: "turn left at the junction",
    Action.TURN_RIGHT: "turn right at the junction",
    Action.IDLE: "hold the current lane and speed",
}

_ROLE = (
    "You are the decision-making module of an automated vehicle (the ego vehicle). "
    "Each turn you receive a description of the traffic scene around the ego vehicle, "
    "and sometimes a risk assessment of the surrounding vehicles and worked examples "
    "of earlier decisions. Choose the ego vehicle's next driving action."
)

_FORMAT = (
    "Respond in this format:\n"
    "Reasoning: <your step-by-step analysis of the scene>\n"
    "Final decision: <token>\n"
    "The last line must contain exactly one token from the list above."
)

_SAFETY = (
    "Safety comes first. Never pick a maneuver that brings the ego vehicle close to a "
    "collision or forces another road user to brake hard. The navigation instruction "
    "matters only when it can be followed safely; when in doubt, stay in your lane."
)

_RISK_PRIORITY = (
    "Risk priority: the risk assessment rates every nearby vehicle as LOW, MEDIUM or HIGH. "
    "Treat a HIGH rating as a hard constraint. Do not move into the path of a HIGH-risk "
    "vehicle and do not close the gap to one, even when that delays the navigation goal."
)


def build_system_message(config: Config | AgentConfig | None = None) -> ChatMessage:
    """Role, action vocabulary, output format and safety instructions."""
    agent = config.agent if isinstance(config, Config) else (config or AgentConfig())
    if agent.system_message:
        return ChatMessage("system", agent.system_message)
    vocab = "\n".join(f"- {a.token}: {_ACTION_HELP[a]}" for a in Action)
    parts = [_ROLE, "Available actions:\n" + vocab, _FORMAT, _SAFETY]
    if agent.risk_emphasis == "high":
        parts.append(_RISK_PRIORITY)
    return ChatMessage("system", "\n\n".join(parts))


def _user_block(scene_text: str, risk_text: str | None) -> str:
    return f"{scene_text}\n\n{risk_text}" if risk_text else scene_text


def _answer_block(reasoning: str, action: Action) -> str:
    body = reasoning.strip()
    if not body.lower().startswith("reasoning:"):
        body = f"Reasoning: {body}"
    return f"{body}\nFinal decision: {action.token}"


def assemble_prompt(
    system: ChatMessage,
    scene_text: str,
    risk_text: str | None = None,
    few_shots: Sequence[MemoryRecord] = (),
    include_shot_risk: bool = True,
) -> list[ChatMessage]:
    """System message, one user/assistant pair per few-shot, then the current scene."""
    if not scene_text or not scene_text.strip():
        raise BadInput("scene text must be non-empty")
    messages = [system]
    for rec in few_shots:
        messages.append(ChatMessage("user", _user_block(rec.scene_text, rec.risk_text if include_shot_risk else None)))
        messages.append(ChatMessage("assistant", _answer_block(rec.reasoning, rec.action)))
    messages.append(ChatMessage("user", _user_block(scene_text, risk_text)))
    return messages


# --------------------------------------------------------------------------
# Decoding

_DECISION_LINE = re.compile(r"^[\s>*#_`-]*final\s+decision\s*[*_`]*\s*:(.*)$", re.I)

_PHRASES = {a.token.replace("_", ""): a for a in Action}
_PHRASES.update({
    "changelaneleft": Action.LANE_CHANGE_LEFT,
    "changelanesleft": Action.LANE_CHANGE_LEFT,
    "changelaneright": Action.LANE_CHANGE_RIGHT,
    "changelanesright": Action.LANE_CHANGE_RIGHT,
    "keep": Action.IDLE,
    "keeplane": Action.IDLE,
    "maintain": Action.IDLE,
    "maintainspeed": Action.IDLE,
    "brake": Action.DECELERATE,
    "slowdown": Action.DECELERATE,
    "speedup": Action.ACCELERATE,
})


def _phrase_key(text: str) -> str:
    return re.sub(r"[^a-z]", "", text.lower())


def decode_action(llm_output: str) -> tuple[str, Action]:
    """Read the last ``Final decision:`` line; the reasoning is everything before it."""
    lines = (llm_output or "").splitlines()
    for k in range(len(lines) - 1, -1, -1):
        m = _DECISION_LINE.match(lines[k])
        if m:
            break
    else:
        raise ParseError(llm_output, "no 'Final decision:' line")
    key = _phrase_key(m.group(1))
    if key not in _PHRASES:
        raise ParseError(llm_output, f"unknown action {m.group(1).strip()!r}")
    reasoning = "\n".join(lines[:k]).strip()
    reasoning = re.sub(r"^reasoning\s*:\s*", "", reasoning, flags=re.I)
    return reasoning, _PHRASES[key]


_ANALYSIS = re.compile(r"analysis\s*:\s*(.*?)\s*(?=corrected reasoning\s*:)", re.I | re.S)
_CORRECTED = re.compile(r"corrected reasoning\s*:\s*(.*?)\s*(?=^[\s*]*final\s+decision|\Z)", re.I | re.S | re.M)


def decode_reflection(text: str) -> tuple[str, str]:
    a = _ANALYSIS.search(text or "")
    c = _CORRECTED.search(text or "")
    if not a or not c or not a.group(1).strip() or not c.group(1).strip():
        raise ParseError(text, "reflection needs 'Analysis:' and 'Corrected reasoning:' sections")
    return a.group(1).strip(), c.group(1).strip()


# --------------------------------------------------------------------------
# Records


@dataclass(frozen=True)
class DecisionRecord:
    scene_ref: str
    risk_text: str | None
    few_shot_ids: tuple[int, ...]
    reasoning: str
    action: Action | None  # None when decoding failed on every attempt
    matched_truth: str = NO_LABEL
    reflection: str | None = None
    latency: float = 0.0
    token_estimate: int = 0
    error: str | None = None
    gated: bool = False  # action replaced by the safety gate

    def __post_init__(self):
        if self.matched_truth not in (MATCHED, MISMATCHED, NO_LABEL):
            raise ValueError(f"bad matched_truth {self.matched_truth!r}")
        if self.reflection is not None and self.matched_truth != MISMATCHED:
            raise ValueError("reflection is only recorded for mismatched decisions")

    @property
    def decided(self) -> bool:
        return self.action is not None

    def to_dict(self, include_latency: bool = False) -> dict:
        out = {
            "scene_ref": self.scene_ref,
            "risk_text": self.risk_text,
            "few_shot_ids": list(self.few_shot_ids),
            "reasoning": self.reasoning,
            "action": None if self.action is None else self.action.token,
            "matched_truth": self.matched_truth,
            "reflection": self.reflection,
            "token_estimate": self.token_estimate,
            "error": self.error,
            "gated": self.gated,
        }
        if include_latency:
            out["latency"] = self.latency
        return out


@dataclass(frozen=True)
class ReflectionRecord:
    wrong_action: Action
    true_label: Action
    analysis: str
    corrected_reasoning: str

    def __post_init__(self):
        if self.wrong_action == self.true_label:
            raise ValueError("a reflection needs differing wrong and true actions")

    def to_text(self) -> str:
        return f"Analysis: {self.analysis}\nCorrected reasoning: {self.corrected_reasoning}"


@dataclass(frozen=True)
class Modules:
    risk: bool = True
    memory: bool = True


@dataclass
class EpisodeLog:
    entries: list[tuple[LabeledScene, DecisionRecord]] = field(default_factory=list)
    condition: str = ""

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def records(self) -> list[DecisionRecord]:
        return [rec for _, rec in self.entries]

    def to_lines(self, include_latency: bool = False) -> list[dict]:
        out = []
        for ls, rec in self.entries:
            line = rec.to_dict(include_latency)
            line["condition"] = self.condition
            line["true_label"] = None if ls.true_label is None else ls.true_label.token
            out.append(line)
        return out


def _token_count(messages: Iterable[ChatMessage]) -> int:
    return sum(len(m.content.split()) for m in messages)


SafetyGate = Callable[[Scene, Action], bool]


class DecisionAgent:
    """Runs the reasoning and reflection passes against one memory store.

    Instrumented counters (``qpr_calls``, ``retrieve_calls``, ``llm_calls``)
    make ablations checkable.
    """

    def __init__(
        self,
        config: Config,
        client: LlmClient,
        store: VectorStore | None = None,
        thresholds: RiskThresholds | None = None,
        modules: Modules | None = None,
        safety_gate: SafetyGate | None = None,
    ):
        self.config = config
        self.client = client
        self.store = store if store is not None else VectorStore()
        self.thresholds = thresholds
        self.modules = modules or Modules(config.agent.risk_enabled, config.agent.memory_enabled)
        if self.modules.risk and thresholds is None:
            raise BadInput("the risk module needs calibrated thresholds")
        self.safety_gate = safety_gate
        self.system = build_system_message(config)
        self.qpr_calls = 0
        self.retrieve_calls = 0
        self.llm_calls = 0
        self._clock = 0

    # -- pieces -----------------------------------------------------------

    def risk_text(self, scene: Scene) -> str:
        cfg = self.config
        self.qpr_calls += 1
        report = qpr_total(scene.ego, scene.neighbor_states, cfg.drf, cfg.costs,
                           cfg.grid.build(scene.ego), cfg.convention)
        return risk_notification(report, self.thresholds, cfg.risk_templates).to_text()

    def _query(self, scene_text: str, risk_text: str | None) -> str:
        if self.config.agent.retrieval_query == "scene+risk" and risk_text:
            return _user_block(scene_text, risk_text)
        return scene_text

    def _complete(self, messages: list[ChatMessage]) -> str:
        retries = self.config.agent.max_retries
        for attempt in range(retries + 1):
            try:
                self.llm_calls += 1
                return self.client.complete(messages, self.config.agent.temperature)
            except BackendError:
                if attempt == retries:
                    raise
        raise AssertionError("unreachable")

    def _ask(self, messages: list[ChatMessage], decode):
        """Complete and decode, re-asking on parse failures."""
        messages = list(messages)
        err = None
        for attempt in range(self.config.agent.max_retries + 1):
            raw = self._complete(messages)
            try:
                return decode(raw), messages, None
            except ParseError as exc:
                err = exc
                if attempt < self.config.agent.max_retries:
                    if raw.strip():
                        messages.append(ChatMessage("assistant", raw))
                    messages.append(ChatMessage("user", RETRY_PROMPT))
        return None, messages, err

    # -- passes ------------------------------------------------------------

    def reason(self, scene: Scene, true_label: Action | None = None) -> DecisionRecord:
        start = time.perf_counter()
        scene_text = render_scene_text(scene)
        risk = self.risk_text(scene) if self.modules.risk else None
        shots: list[MemoryRecord] = []
        if self.modules.memory:
            self.retrieve_calls += 1
            n = self.config.agent.shots_for(scene.dataset_tag)
            shots = [rec for rec, _ in self.store.retrieve(self._query(scene_text, risk), n)]
        messages = assemble_prompt(self.system, scene_text, risk, shots, include_shot_risk=self.modules.risk)
        decoded, sent, err = self._ask(messages, decode_action)
        latency = time.perf_counter() - start
        ids = tuple(rec.record_id for rec in shots)
        if decoded is None:
            return DecisionRecord(scene.ref, risk, ids, "", None,
                                  NO_LABEL if true_label is None else MISMATCHED,
                                  latency=latency, token_estimate=_token_count(sent),
                                  error=f"ParseError: {err.reason}")
        reasoning, action = decoded
        gated = False
        if self.config.agent.safety_gate and self.safety_gate is not None and not self.safety_gate(scene, action):
            action, gated = Action.DECELERATE, True
        if true_label is None:
            verdict = NO_LABEL
        else:
            verdict = MATCHED if action == true_label else MISMATCHED
        return DecisionRecord(scene.ref, risk, ids, reasoning, action, verdict,
                              latency=latency, token_estimate=_token_count(sent), gated=gated)

    def reflect(self, scene: Scene, record: DecisionRecord, true_label: Action) -> ReflectionRecord:
        if record.matched_truth != MISMATCHED or record.action is None or record.action == true_label:
            raise BadInput("reflection applies only to decided, mismatched records")
        body = [REFLECTION_MARKER, render_scene_text(scene)]
        if record.risk_text:
            body.append(record.risk_text)
        body.append(
            f"Chosen action: {record.action.token}\n"
            f"Correct action: {true_label.token}\n"
            f"Earlier reasoning: {record.reasoning or '(none)'}"
        )
        body.append(
            "Explain why the chosen action was wrong and give reasoning that leads to the "
            "correct action. Respond in this format:\n"
            "Analysis: <why the choice was wrong>\n"
            "Corrected reasoning: <reasoning that leads to the correct action>\n"
            "Final decision: <token>"
        )
        messages = [self.system, ChatMessage("user", "\n\n".join(body))]
        decoded, _, err = self._ask(messages, decode_reflection)
        if decoded is None:
            raise err
        analysis, corrected = decoded
        return ReflectionRecord(record.action, true_label, analysis, corrected)

    def step(self, labeled: LabeledScene) -> DecisionRecord:
        """One iteration of the loop: reason, reflect on a mismatch, write memory."""
        scene, truth = labeled.scene, labeled.true_label
        rec = self.reason(scene, truth)
        if rec.action is None:
            return rec
        scene_text = render_scene_text(scene)
        self._clock += 1
        if rec.matched_truth != MISMATCHED:
            self.store.add(scene_text, rec.risk_text or "", rec.reasoning, rec.action, "correct",
                           index_text=self._query(scene_text, rec.risk_text), created_at=float(self._clock))
            return rec
        try:
            refl = self.reflect(scene, rec, truth)
        except ParseError as exc:
            self.store.add(scene_text, rec.risk_text or "", rec.reasoning, truth, "corrected",
                           index_text=self._query(scene_text, rec.risk_text), created_at=float(self._clock))
            return DecisionRecord(**{**rec.__dict__, "error": f"reflection ParseError: {exc.reason}"})
        self.store.add(scene_text, rec.risk_text or "", refl.corrected_reasoning, truth, "corrected",
                       reflection=refl.analysis, index_text=self._query(scene_text, rec.risk_text),
                       created_at=float(self._clock))
        return DecisionRecord(**{**rec.__dict__, "reflection": refl.to_text()})

    def run_episode(self, scenes: Sequence[LabeledScene], condition: str = "") -> EpisodeLog:
        log = EpisodeLog(condition=condition)
        for labeled in scenes:
            log.entries.append((labeled, self.step(labeled)))
        return log


# --------------------------------------------------------------------------
# Functional entry points


def reason(scene: Scene, thresholds: RiskThresholds | None, store: VectorStore, client: LlmClient,
           config: Config, modules: Modules | None = None, true_label: Action | None = None) -> DecisionRecord:
    return DecisionAgent(config, client, store, thresholds, modules).reason(scene, true_label)


def reflect(scene: Scene, record: DecisionRecord, true_label: Action, client: LlmClient,
            config: Config | None = None) -> ReflectionRecord:
    cfg = config or Config()
    agent = DecisionAgent(cfg, client, None, None, Modules(risk=False, memory=False))
    return agent.reflect(scene, record, true_label)


def run_episode(scenes: Sequence[LabeledScene], modules: Modules, store: VectorStore, client: LlmClient,
                config: Config, thresholds: RiskThresholds | None = None,
                safety_gate: SafetyGate | None = None, condition: str = "") -> EpisodeLog:
    agent = DecisionAgent(config, client, store, thresholds, modules, safety_gate)
    return agent.run_episode(scenes, condition)
