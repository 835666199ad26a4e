"""IDM baseline, rollout safety oracle, Table-style metrics and QPR sweeps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .agent import DecisionAgent, DecisionRecord, EpisodeLog, Modules, MATCHED, MISMATCHED, NO_LABEL
from .config import Config, OracleConfig
from .errors import BadParameter, EmptyLog, MissingLabels
from .idm import IdmParams, idm_accel
from .llm import LlmClient
from .memory import Embedder, VectorStore, bundled_exemplars, seed_memory
from .risk_assessor import RiskThresholds, calibrate_thresholds, sample_qpr_distribution
from .risk_field import VehicleClass, VehicleState, qpr_front, qpr_total
from .scene import (
    Action,
    LabeledScene,
    Scene,
    TrajectoryTable,
    extract_scene,
    label_action,
    render_scene_text,
    synth_scenario,
)

CONDITIONS = ("idm", "plain", "memory", "risk", "both")
CONDITION_MODULES = {
    "plain": Modules(risk=False, memory=False),
    "memory": Modules(risk=False, memory=True),
    "risk": Modules(risk=True, memory=False),
    "both": Modules(risk=True, memory=True),
}

ACCEL_BAND = 0.3


# --------------------------------------------------------------------------
# IDM baseline


def _leader(scene: Scene, lane_width: float, horizon: float) -> tuple[float, float] | None:
    """(bumper gap, closing speed) to the nearest same-lane or conflict-point leader."""
    ego = scene.ego
    best = None
    for nb in scene.neighbors:
        s = nb.state
        along = s.speed * math.cos(nb.rel_heading)
        across = s.speed * math.sin(nb.rel_heading)
        if scene.lane_context.lane_id is not None and nb.lane_id is not None:
            in_path = nb.lane_id == scene.lane_context.lane_id
        else:
            in_path = abs(nb.rel_y) < lane_width / 2
        if in_path and nb.rel_x > 0:
            cand = (nb.rel_x - (ego.length + s.length) / 2, ego.speed - along)
        elif scene.lane_context.lane_id is None and abs(across) > 0.1 and nb.rel_y * across < 0:
            # crossing vehicle: a standing obstacle where it meets the ego path
            t_cross = -nb.rel_y / across
            x_cross = nb.rel_x + along * t_cross
            if x_cross <= 0 or t_cross > horizon:
                continue
            if t_cross > x_cross / max(ego.speed, 0.1) + 2.0:
                continue  # it arrives well after the ego has passed
            cand = (x_cross - ego.length / 2 - s.width / 2, ego.speed)
        else:
            continue
        if best is None or cand[0] < best[0]:
            best = cand
    return best


def idm_policy(scene: Scene, params: IdmParams | None = None, lane_width: float = 3.5,
               horizon: float = 4.0) -> Action:
    """Discretized IDM acceleration; never changes lanes."""
    params = params or IdmParams()
    lead = _leader(scene, lane_width, horizon)
    if lead is None:
        a = idm_accel(scene.ego.speed, math.inf, 0.0, params)
    else:
        a = idm_accel(scene.ego.speed, max(lead[0], 0.1), lead[1], params)
    if a > ACCEL_BAND:
        return Action.ACCELERATE
    if a < -ACCEL_BAND:
        return Action.DECELERATE
    return Action.IDLE


# --------------------------------------------------------------------------
# Safety oracle


@dataclass(frozen=True)
class SafetyVerdict:
    safe: bool
    min_ttc: float
    induced_decel: float
    cause: str


def _ego_rollout(ego: VehicleState, action: Action, t: np.ndarray, cfg: OracleConfig):
    """Ego pose and velocity in its own initial frame (x forward, y left)."""
    v0 = ego.speed
    zero = np.zeros_like(t)
    if action is Action.ACCELERATE:
        v = v0 + cfg.accel * t
        x = v0 * t + 0.5 * cfg.accel * t * t
        return x, zero, zero, v, zero
    if action is Action.DECELERATE:
        tt = np.minimum(t, v0 / cfg.decel)
        v = v0 - cfg.decel * tt
        x = v0 * tt - 0.5 * cfg.decel * tt * tt
        return x, zero, zero, v, zero
    if action in (Action.LANE_CHANGE_LEFT, Action.LANE_CHANGE_RIGHT):
        sign = 1.0 if action is Action.LANE_CHANGE_LEFT else -1.0
        T = cfg.lane_change_time
        u = np.clip(t / T, 0.0, 1.0)
        y = sign * cfg.lane_width * (1 - np.cos(np.pi * u)) / 2
        vy = np.where(t < T, sign * cfg.lane_width * np.pi / (2 * T) * np.sin(np.pi * u), 0.0)
        return v0 * t, y, np.arctan2(vy, v0), zero + v0, vy
    if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        sign = 1.0 if action is Action.TURN_LEFT else -1.0
        R = cfg.turn_radius
        th = v0 * t / R
        x, y = R * np.sin(th), sign * R * (1 - np.cos(th))
        return x, y, sign * th, v0 * np.cos(th), sign * v0 * np.sin(th)
    return v0 * t, zero, zero, zero + v0, zero


def _other_rollout(state: VehicleState, rel_x: float, rel_y: float, rel_heading: float, t: np.ndarray):
    """Constant speed and turn rate (from the steering angle)."""
    v = state.speed
    if abs(state.steering) < 1e-3 or v == 0:
        cx, cy = v * math.cos(rel_heading), v * math.sin(rel_heading)
        return rel_x + cx * t, rel_y + cy * t, np.full_like(t, rel_heading)
    omega = v * math.tan(state.steering) / state.wheelbase
    h = rel_heading + omega * t
    x = rel_x + v / omega * (np.sin(h) - math.sin(rel_heading))
    y = rel_y - v / omega * (np.cos(h) - math.cos(rel_heading))
    return x, y, h


def _box_gap(dx, dy, h_e, len_e, w_e, h_o, len_o, w_o):
    """Longitudinal bumper gap along the ego heading and whether the boxes overlap laterally."""
    c, s = math.cos(h_e), math.sin(h_e)
    lon = dx * c + dy * s
    lat = -dx * s + dy * c
    rel = h_o - h_e
    lon_ext = abs(len_o * math.cos(rel)) + abs(w_o * math.sin(rel))
    lat_ext = abs(len_o * math.sin(rel)) + abs(w_o * math.cos(rel))
    overlap = abs(lat) < (w_e + lat_ext) / 2
    return lon, abs(lon) - (len_e + lon_ext) / 2, overlap


def safety_oracle(
    scene: Scene,
    action: Action,
    horizon: float | None = None,
    oracle: OracleConfig | None = None,
    idm: IdmParams | None = None,
) -> SafetyVerdict:
    """Kinematic rollout of the ego action against the scene at ``1/dt`` Hz.

    Other vehicles hold their speed and turn rate, except followers in the
    ego's current or target lane: once the ego occupies their lane ahead of
    them they are driven by IDM with the ego as leader, and the hardest
    braking IDM demands is reported as the induced deceleration.
    """
    cfg = oracle or OracleConfig()
    idm = idm or IdmParams()
    horizon = cfg.horizon if horizon is None else horizon
    steps = int(round(horizon / cfg.dt))
    t = np.arange(steps + 1) * cfg.dt
    ex, ey, eh, evx, evy = _ego_rollout(scene.ego, action, t, cfg)
    ego = scene.ego
    half = cfg.lane_width / 2
    target = {Action.LANE_CHANGE_LEFT: cfg.lane_width, Action.LANE_CHANGE_RIGHT: -cfg.lane_width}.get(action, 0.0)

    min_ttc, ttc_id = math.inf, None
    induced, induced_id = 0.0, None
    for nb in scene.neighbors:
        s = nb.state
        follower = (
            nb.rel_x < 0
            and abs(nb.rel_heading) < math.pi / 4
            and (abs(nb.rel_y) < half or abs(nb.rel_y - target) < half)
        )
        if follower:
            ox, oy, oh, braking = _follower_rollout(s, nb, t, ex, ey, evx, cfg, idm, ego)
            if braking > induced:
                induced, induced_id = braking, s.id
        else:
            ox, oy, oh = _other_rollout(s, nb.rel_x, nb.rel_y, nb.rel_heading, t)
        ovx = np.gradient(ox, cfg.dt) if len(t) > 1 else np.zeros_like(t)
        ovy = np.gradient(oy, cfg.dt) if len(t) > 1 else np.zeros_like(t)
        for k in range(len(t)):
            lon, gap, overlap = _box_gap(ox[k] - ex[k], oy[k] - ey[k], eh[k], ego.length, ego.width,
                                         oh[k], s.length, s.width)
            if not overlap:
                continue
            if gap <= 0:
                ttc = 0.0
            else:
                c, sn = math.cos(eh[k]), math.sin(eh[k])
                closing = (evx[k] - ovx[k]) * c + (evy[k] - ovy[k]) * sn
                if lon < 0:
                    closing = -closing
                ttc = gap / closing if closing > 1e-9 else math.inf
            if ttc < min_ttc:
                min_ttc, ttc_id = ttc, s.id
    causes = []
    if induced > cfg.decel_threshold:
        causes.append(f"induced braking of {induced:.1f} m/s^2 on vehicle {induced_id}")
    if min_ttc < cfg.ttc_threshold:
        causes.append(f"time to collision {min_ttc:.2f} s with vehicle {ttc_id}")
    safe = min_ttc >= cfg.ttc_threshold and induced <= cfg.decel_threshold
    return SafetyVerdict(bool(safe), float(min_ttc), float(induced), "; ".join(causes) if causes else "no conflict")


def _follower_rollout(s, nb, t, ex, ey, evx, cfg, idm, ego):
    """IDM-driven follower: x, y, heading and the hardest braking demanded."""
    half = cfg.lane_width / 2
    v0 = max(s.speed, idm.v0)
    params = IdmParams(v0, idm.T, idm.a_max, idm.b, idm.s0, idm.exponent, idm.b_emergency)
    x = np.empty_like(t)
    y = np.full_like(t, nb.rel_y)
    h = np.full_like(t, nb.rel_heading)
    x[0] = nb.rel_x
    v = s.speed * math.cos(nb.rel_heading)
    worst = 0.0
    for k in range(len(t) - 1):
        leading = abs(ey[k] - nb.rel_y) < half and ex[k] > x[k]
        if leading:
            gap = max(ex[k] - x[k] - (ego.length + s.length) / 2, 0.1)
            a = idm_accel(v, gap, v - evx[k], params)
        else:
            a = idm_accel(v, math.inf, 0.0, params)
        worst = max(worst, -a)
        dt = t[k + 1] - t[k]
        v_next = max(0.0, v + a * dt)
        x[k + 1] = x[k] + 0.5 * (v + v_next) * dt
        v = v_next
    return x, y, h, worst


# --------------------------------------------------------------------------
# Metrics


def _verdicts(log: EpisodeLog, horizon: float | None, oracle: OracleConfig | None, idm: IdmParams | None):
    return [
        rec.action is not None and safety_oracle(ls.scene, rec.action, horizon, oracle, idm).safe
        for ls, rec in log.entries
    ]


def safety_rate(log: EpisodeLog, horizon: float | None = None, oracle: OracleConfig | None = None,
                idm: IdmParams | None = None) -> float:
    """Share of scenes whose decision the oracle marks safe; no decision counts as unsafe."""
    if len(log) == 0:
        raise EmptyLog("safety rate of an empty log")
    flags = _verdicts(log, horizon, oracle, idm)
    return sum(flags) / len(flags)


def decision_alignment(log: EpisodeLog) -> float:
    if len(log) == 0:
        raise EmptyLog("alignment of an empty log")
    if any(ls.true_label is None for ls, _ in log.entries):
        raise MissingLabels("every scene needs a true label")
    hits = sum(rec.action is not None and rec.action == ls.true_label for ls, rec in log.entries)
    return hits / len(log)


@dataclass(frozen=True)
class MetricsRow:
    tag: str
    condition: str
    n_scenes: int
    n_safe: int
    n_aligned: int
    n_no_decision: int

    @property
    def safety_rate(self) -> float:
        return self.n_safe / self.n_scenes

    @property
    def decision_alignment(self) -> float:
        return self.n_aligned / self.n_scenes

    def to_dict(self) -> dict:
        return {
            "scenario_tag": self.tag,
            "condition": self.condition,
            "safety_rate": self.safety_rate,
            "decision_alignment": self.decision_alignment,
            "n_scenes": self.n_scenes,
            "n_safe": self.n_safe,
            "n_aligned": self.n_aligned,
            "n_no_decision": self.n_no_decision,
        }


@dataclass
class MetricsTable:
    rows: dict[tuple[str, str], MetricsRow] = field(default_factory=dict)
    logs: dict[tuple[str, str], EpisodeLog] = field(default_factory=dict)

    def __getitem__(self, key: tuple[str, str]) -> MetricsRow:
        return self.rows[key]

    def to_dict(self) -> dict:
        order = {c: k for k, c in enumerate(CONDITIONS)}
        keys = sorted(self.rows, key=lambda k: (k[0], order.get(k[1], len(order)), k[1]))
        return {"rows": [self.rows[k].to_dict() for k in keys]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def log_lines(self) -> list[dict]:
        out = []
        for key in sorted(self.logs):
            out.extend(self.logs[key].to_lines())
        return out


def _row(tag: str, condition: str, log: EpisodeLog, cfg: Config) -> MetricsRow:
    flags = _verdicts(log, None, cfg.oracle, cfg.idm)
    aligned = sum(rec.action is not None and rec.action == ls.true_label for ls, rec in log.entries)
    no_dec = sum(rec.action is None for rec in log.records)
    return MetricsRow(tag, condition, len(log), sum(flags), aligned, no_dec)


def idm_episode(scenes: Sequence[LabeledScene], cfg: Config) -> EpisodeLog:
    log = EpisodeLog(condition="idm")
    for ls in scenes:
        action = idm_policy(ls.scene, cfg.idm, cfg.oracle.lane_width, cfg.oracle.horizon)
        if ls.true_label is None:
            verdict = NO_LABEL
        else:
            verdict = MATCHED if action == ls.true_label else MISMATCHED
        log.entries.append((ls, DecisionRecord(ls.scene.ref, None, (), "IDM baseline", action, verdict)))
    return log


def oracle_gate(cfg: Config) -> Callable[[Scene, Action], bool]:
    return lambda scene, action: safety_oracle(scene, action, None, cfg.oracle, cfg.idm).safe


def evaluate(
    dataset: Sequence[LabeledScene],
    conditions: Sequence[str],
    config: Config,
    client_factory: Callable[[str, str], LlmClient] | None = None,
    thresholds: Mapping[str, RiskThresholds] | RiskThresholds | None = None,
    exemplars: Mapping[str, list] | None = None,
    embedder_factory: Callable[[], Embedder] | None = None,
) -> MetricsTable:
    """Run every condition on every scenario tag with a fresh seeded store.

    Tags are processed in sorted order and conditions in the order given;
    ``client_factory(tag, condition)`` is called once per agent run.
    """
    unknown = [c for c in conditions if c not in CONDITIONS]
    if unknown:
        raise BadParameter(f"unknown conditions {unknown}; expected a subset of {CONDITIONS}")
    if any(ls.true_label is None for ls in dataset):
        raise MissingLabels("evaluate needs a labeled dataset")
    exemplars = bundled_exemplars() if exemplars is None else exemplars
    by_tag: dict[str, list[LabeledScene]] = {}
    for ls in dataset:
        by_tag.setdefault(ls.tag, []).append(ls)
    table = MetricsTable()
    for tag in sorted(by_tag):
        scenes = by_tag[tag]
        for cond in conditions:
            if cond == "idm":
                log = idm_episode(scenes, config)
            else:
                if client_factory is None:
                    raise BadParameter("agent conditions need a client factory")
                mods = CONDITION_MODULES[cond]
                thr = thresholds.get(tag) if isinstance(thresholds, Mapping) else thresholds
                embedder = embedder_factory() if embedder_factory else None
                dim = embedder.dimension if embedder else config.backend.embedding_dimension
                store = VectorStore(dim, embedder=embedder)
                seed_memory(store, exemplars.get(tag, []))
                gate = oracle_gate(config) if config.agent.safety_gate else None
                agent = DecisionAgent(config, client_factory(tag, cond), store, thr, mods, gate)
                log = agent.run_episode(scenes, cond)
            table.rows[(tag, cond)] = _row(tag, cond, log, config)
            table.logs[(tag, cond)] = log
    return table


# --------------------------------------------------------------------------
# Datasets


def table_from_scene(scene: Scene) -> TrajectoryTable:
    """One-frame table holding the ego and its neighbors."""
    rows = []
    lanes = {nb.state.id: nb.lane_id for nb in scene.neighbors}
    lanes[scene.ego.id] = scene.lane_context.lane_id
    for s in [scene.ego] + scene.neighbor_states:
        vx, vy = s.velocity
        rows.append({
            "frame": scene.frame, "id": s.id, "x": s.x, "y": s.y, "width": s.width, "length": s.length,
            "x_velocity": vx, "y_velocity": vy, "lane_id": lanes.get(s.id), "cls": s.cls.value,
            "yaw_rate": None, "heading": s.heading,
        })
    return TrajectoryTable.from_rows(rows, metadata={"dataset_tag": scene.dataset_tag})


def calibrate_per_tag(
    tables: Mapping[str, Sequence[TrajectoryTable]], config: Config
) -> dict[str, RiskThresholds]:
    cal = config.calibration
    out = {}
    for tag in sorted(tables):
        samples = sample_qpr_distribution(tables[tag], cal.samples, cal.seed, config.drf, config.costs,
                                          config.grid, config.convention, config.scene.wheelbase_ratio,
                                          config.scene.radius)
        out[tag] = calibrate_thresholds(samples, config.convention, tag, cal.seed)
    return out


def scenes_from_table(table: TrajectoryTable, config: Config, overrides=None,
                      ego_ids: Sequence[int] | None = None) -> list[LabeledScene]:
    """Cut labeled scenes every ``scene.stride`` frames for every vehicle with a long enough track."""
    lab = config.labeler
    out = []
    for frame in table.frames()[:: max(1, config.scene.stride)]:
        for r in table.rows_at(frame):
            vid = int(table.id[r])
            if ego_ids is not None and vid not in ego_ids:
                continue
            if table.row(frame + lab.horizon, vid) is None and not (overrides and (vid, frame) in overrides):
                continue
            label = label_action(table, vid, frame, lab.horizon, lab.turn_threshold, lab.accel_threshold, overrides)
            scene = extract_scene(table, vid, frame, config.scene.radius, config.scene.cap,
                                  wheelbase_ratio=config.scene.wheelbase_ratio)
            out.append(LabeledScene(scene, label, "file" if overrides and (vid, frame) in overrides else "heuristic"))
    return out


# Five variants per family.  The first lane_change_conflict variant is the
# overtaking conflict: ego asked to move left while a faster car closes in
# the target lane.
SUITE_SPECS: tuple[tuple[dict, int], ...] = (
    ({"kind": "car_following", "speed": 20.0, "thw": 2.0, "duration": 3.0}, 0),
    ({"kind": "car_following", "speed": 22.0, "thw": 0.8, "follower_accel": -2.5, "duration": 3.0}, 0),
    ({"kind": "car_following", "speed": 16.0, "thw": 2.6, "follower_accel": 1.0, "duration": 3.0}, 0),
    ({"kind": "car_following", "speed": 20.0, "thw": 1.2, "leader_class": "Truck",
      "leader_accel": -1.5, "follower_accel": -1.5, "duration": 3.0}, 0),
    ({"kind": "car_following", "speed": 16.0, "thw": 2.5, "leader_speed": 18.0, "duration": 3.0}, 0),
    ({"kind": "lane_change_conflict", "ego_speed": 25.0, "overtaker_speed": 35.0, "overtaker_gap": 35.0}, 0),
    ({"kind": "lane_change_conflict", "ego_speed": 25.0, "overtaker_speed": 28.0,
      "overtaker_gap": 150.0, "ego_maneuver": "lane_change_left", "leader_gap": 45.0, "leader_speed": 20.0}, 20),
    ({"kind": "lane_change_conflict", "ego_speed": 25.0, "overtaker_speed": 30.0,
      "overtaker_gap": 40.0, "ego_maneuver": "brake", "leader_gap": 35.0, "leader_speed": 15.0}, 0),
    ({"kind": "lane_change_conflict", "ego_speed": 24.0, "overtaker_speed": 32.0,
      "overtaker_gap": 35.0, "leader_gap": 60.0, "leader_speed": 24.0}, 0),
    ({"kind": "lane_change_conflict", "ego_speed": 22.0, "overtaker_speed": 26.0,
      "overtaker_gap": 200.0, "ego_maneuver": "lane_change_left"}, 20),
    ({"kind": "intersection_approach", "ego_speed": 8.0, "approach": 45.0, "queue": 1,
      "oncoming": [30.0, 50.0], "follower_gap": 30.0, "leader_gap": 25.0}, 0),
    ({"kind": "intersection_approach", "ego_speed": 10.0, "ego_accel": -2.0, "approach": 40.0,
      "queue": 1, "oncoming": [20.0], "follower_gap": 40.0, "leader_gap": 18.0, "leader_speed": 6.0}, 0),
    ({"kind": "intersection_approach", "ego_speed": 6.0, "ego_accel": 1.0, "approach": 35.0,
      "queue": 0, "oncoming": [45.0], "oncoming_speed": 10.0, "follower_gap": 30.0, "leader_gap": 35.0,
      "leader_speed": 9.0}, 0),
    ({"kind": "intersection_approach", "ego_speed": 9.0, "approach": 30.0, "queue": 1,
      "oncoming": [15.0, 40.0], "follower_gap": 32.0, "leader_gap": 28.0}, 0),
    ({"kind": "intersection_approach", "ego_speed": 12.0, "ego_accel": -1.5, "approach": 42.0,
      "queue": 0, "oncoming": [35.0], "follower_gap": 45.0, "leader_gap": 22.0, "leader_speed": 8.0}, 0),
    ({"kind": "roundabout_merge", "ego_speed": 8.0, "ring_angles": [-2.2, 1.0, 2.1],
      "follower_gap": 30.0}, 0),
    ({"kind": "roundabout_merge", "ego_speed": 7.0, "ego_accel": -1.5, "ring_angles": [-1.2, 0.9],
      "follower_gap": 35.0}, 0),
    ({"kind": "roundabout_merge", "ego_speed": 6.0, "ego_accel": 1.0, "ring_angles": [1.6, 2.6],
      "follower_gap": 30.0}, 0),
    ({"kind": "roundabout_merge", "ego_speed": 8.0, "ring_angles": [-2.5, 1.2, 2.3],
      "ring_speed": 7.0, "follower_gap": 32.0}, 0),
    ({"kind": "roundabout_merge", "ego_speed": 9.0, "ego_accel": -1.0, "ring_angles": [-2.7, 0.6, 1.8],
      "follower_gap": 36.0}, 0),
)


@dataclass(frozen=True)
class Suite:
    scenes: tuple[LabeledScene, ...]
    tables: Mapping[str, tuple[TrajectoryTable, ...]]  # by dataset tag

    @property
    def conflict_scene(self) -> LabeledScene:
        return self.scenes[5]


def builtin_suite(config: Config | None = None) -> Suite:
    """Twenty synthetic scenes: five per scenario family, labeled from each ego's own future."""
    cfg = config or Config()
    lab = cfg.labeler
    scenes, tables = [], {}
    for spec, frame in SUITE_SPECS:
        table = synth_scenario(spec)
        ego = int(table.metadata["ego_id"])
        label = label_action(table, ego, frame, lab.horizon, lab.turn_threshold, lab.accel_threshold)
        scene = extract_scene(table, ego, frame, cfg.scene.radius, cfg.scene.cap,
                              wheelbase_ratio=cfg.scene.wheelbase_ratio)
        scenes.append(LabeledScene(scene, label, "heuristic"))
        tables.setdefault(scene.dataset_tag, []).append(table)
    return Suite(tuple(scenes), {k: tuple(v) for k, v in tables.items()})


def truth_responses(scenes: Sequence[LabeledScene]) -> list[str]:
    """Replay script that answers every scene with its true label."""
    return [f"Reasoning: follow the recorded driver.\nFinal decision: {ls.true_label.token}" for ls in scenes]


# --------------------------------------------------------------------------
# QPR sweeps


@dataclass(frozen=True)
class SweepTable:
    kind: str
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    meta: Mapping = field(default_factory=dict)

    def column(self, name: str) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]

    def write_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            w.writerows([[repr(v) if isinstance(v, float) else v for v in row] for row in self.rows])


SWEEP_KINDS = ("thw", "lateral", "class", "intersection_profile")


def _sweep_thw(cfg: Config, p: Mapping) -> SweepTable:
    speed = float(p.get("speed", 20.0))
    values = p.get("values") or list(np.linspace(0.5, 4.0, 8))
    rows = []
    for thw in values:
        table = synth_scenario({"kind": "car_following", "speed": speed, "thw": float(thw), "duration": 0.2})
        ego, lead = table.state(table.row(0, 1)), table.state(table.row(0, 2))
        rep = qpr_total(ego, [lead], cfg.drf, cfg.costs, cfg.grid.build(ego), cfg.convention)
        rows.append((float(thw), rep.total))
    return SweepTable("thw", ("thw", "qpr"), tuple(rows), {"speed": speed})


def _sweep_lateral(cfg: Config, p: Mapping) -> SweepTable:
    speed = float(p.get("speed", 20.0))
    ahead = float(p.get("ahead", 25.0))
    values = p.get("values") or [0.5 * k for k in range(1, 13)]
    ego = VehicleState(1, VehicleClass.SEDAN, 0.0, 0.0, 0.0, speed)
    grid = cfg.grid.build(ego)
    rows = []
    for off in values:
        nb = VehicleState(2, VehicleClass.SEDAN, ahead, float(off), 0.0, speed)
        rows.append((float(off), qpr_total(ego, [nb], cfg.drf, cfg.costs, grid, cfg.convention).total))
    return SweepTable("lateral", ("lateral_offset", "qpr"), tuple(rows), {"speed": speed, "ahead": ahead})


def _sweep_class(cfg: Config, p: Mapping) -> SweepTable:
    speed = float(p.get("speed", 20.0))
    thw = float(p.get("thw", 1.5))
    ego = VehicleState(1, VehicleClass.SEDAN, 0.0, 0.0, 0.0, speed)
    grid = cfg.grid.build(ego)
    gap = 4.5 + thw * speed
    rows = []
    for cls in (VehicleClass.SEDAN, VehicleClass.TRUCK, VehicleClass.BUS, VehicleClass.MOTORCYCLE, VehicleClass.VRU):
        nb = VehicleState(2, cls, gap, 0.0, 0.0, speed)  # identical footprint and motion
        front, _ = qpr_front(ego, [nb], cfg.drf, cfg.costs, grid, cfg.convention)
        rows.append((cls.value, cfg.costs.cost(cls), front))
    return SweepTable("class", ("class", "cost", "qpr_front"), tuple(rows), {"speed": speed, "thw": thw})


def _sweep_intersection(cfg: Config, p: Mapping) -> SweepTable:
    # queue head 3 m short of the ego lane so it sits inside the field's lateral support
    spec = {"kind": "intersection_approach", "stop_offset": 3.0, **{k: v for k, v in p.items() if k != "kind"}}
    table = synth_scenario(spec)
    ego_id = int(table.metadata["ego_id"])
    cx, cy = table.metadata["conflict_point"]
    rows = []
    window = []
    for frame in table.frames():
        scene = extract_scene(table, ego_id, frame, cfg.scene.radius, cfg.scene.cap,
                              wheelbase_ratio=cfg.scene.wheelbase_ratio)
        ego = scene.ego
        rep = qpr_total(ego, scene.neighbor_states, cfg.drf, cfg.costs, cfg.grid.build(ego), cfg.convention)
        dist = math.hypot(ego.x - cx, ego.y - cy)
        inside = dist <= cfg.drf.support(ego)
        if inside:
            window.append(frame)
        rows.append((frame / table.frame_rate, rep.total, dist, inside))
    meta = {"conflict_window": [min(window), max(window)] if window else None}
    return SweepTable("intersection_profile", ("time", "qpr", "distance_to_conflict", "in_conflict_window"),
                      tuple(rows), meta)


_SWEEPS = {
    "thw": _sweep_thw,
    "lateral": _sweep_lateral,
    "class": _sweep_class,
    "intersection_profile": _sweep_intersection,
}


def qpr_sweeps(kind: str, params: Mapping | None = None, config: Config | None = None) -> SweepTable:
    if kind not in _SWEEPS:
        raise BadParameter(f"unknown sweep kind {kind!r}; expected one of {SWEEP_KINDS}")
    try:
        return _SWEEPS[kind](config or Config(), dict(params or {}))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, BadParameter):
            raise
        raise BadParameter(str(exc)) from None


__all__ = [
    "CONDITIONS", "MetricsRow", "MetricsTable", "SafetyVerdict", "Suite", "SweepTable",
    "builtin_suite", "calibrate_per_tag", "decision_alignment", "evaluate", "idm_episode",
    "idm_policy", "qpr_sweeps", "render_scene_text", "safety_oracle", "safety_rate",
    "scenes_from_table", "table_from_scene", "truth_responses",
]
