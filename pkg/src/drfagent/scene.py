"""Trajectory tables, per-frame scenes, text rendering, labels and synthetic scenarios.

Coordinates follow the usual right-handed convention: x forward along the
road, y to the left, headings counterclockwise from +x.  Lane ids grow
toward the driver's left.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadParameter,
    DuplicateKey,
    MalformedRow,
    MissingColumn,
    TrackTooShort,
    UnknownEgo,
    UnknownFrame,
)
from .risk_field import VehicleClass, VehicleState, normalize_angle


class Action(str, enum.Enum):
    ACCELERATE = "accelerate"
    DECELERATE = "decelerate"
    LANE_CHANGE_LEFT = "lane_change_left"
    LANE_CHANGE_RIGHT = "lane_change_right"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    IDLE = "idle"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "Action":
        return cls(token.strip().lower())


DATASET_TAGS = ("highway", "intersection", "roundabout")

DEFAULT_INSTRUCTIONS = {
    "highway": "Keep driving safely along the highway.",
    "intersection": "Proceed straight through the intersection.",
    "roundabout": "Enter the roundabout and continue.",
}

# --------------------------------------------------------------------------
# Trajectory tables

_COLUMNS = (
    "frame",
    "id",
    "x",
    "y",
    "width",
    "length",
    "x_velocity",
    "y_velocity",
    "lane_id",
    "cls",
    "yaw_rate",
    "heading",
)

_ALIASES = {
    "frame": "frame",
    "frameid": "frame",
    "id": "id",
    "trackid": "id",
    "x": "x",
    "y": "y",
    "width": "width",
    "height": "length",
    "length": "length",
    "xvelocity": "x_velocity",
    "x_velocity": "x_velocity",
    "yvelocity": "y_velocity",
    "y_velocity": "y_velocity",
    "laneid": "lane_id",
    "lane_id": "lane_id",
    "class": "cls",
    "vehicleclass": "cls",
    "yawrate": "yaw_rate",
    "yaw_rate": "yaw_rate",
    "heading": "heading",
}

_REQUIRED = ("frame", "id", "x", "y", "width", "length", "x_velocity", "y_velocity")
# names reported by MissingColumn, in the input format's vocabulary
_REPORTED = {"length": "height", "x_velocity": "xVelocity", "y_velocity": "yVelocity"}

NO_LANE = -1


@dataclass(frozen=True, eq=False)
class TrajectoryTable:
    """Columnar trajectory store, rows sorted by (frame, id).

    ``lane_id`` uses -1 for "no lane"; ``yaw_rate`` uses NaN for "unknown".
    """

    frame: np.ndarray
    id: np.ndarray
    x: np.ndarray
    y: np.ndarray
    width: np.ndarray
    length: np.ndarray
    x_velocity: np.ndarray
    y_velocity: np.ndarray
    lane_id: np.ndarray
    cls: np.ndarray
    yaw_rate: np.ndarray
    heading: np.ndarray
    frame_rate: float = 25.0
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise BadParameter("frame_rate must be > 0")
        cols = {}
        for name in _COLUMNS:
            arr = np.asarray(getattr(self, name))
            if name in ("frame", "id", "lane_id"):
                arr = arr.astype(np.int64)
            elif name == "cls":
                arr = np.array([VehicleClass.parse(c).value for c in arr], dtype=object)
            else:
                arr = arr.astype(float)
            cols[name] = arr
        n = len(cols["frame"])
        if any(len(a) != n for a in cols.values()):
            raise BadParameter("all columns must have the same length")
        if n and cols["frame"].min() < 0:
            raise BadParameter("frames must be non-negative")
        order = np.lexsort((cols["id"], cols["frame"]))
        for name, arr in cols.items():
            arr = arr[order]
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        keys = self.frame * (int(self.id.max()) + 1 if n else 1) + self.id
        if n and np.unique(keys).size != n:
            dup = np.flatnonzero(np.diff(keys) == 0)[0]
            raise DuplicateKey(int(self.frame[dup]), int(self.id[dup]))
        object.__setattr__(self, "metadata", dict(self.metadata))

    def __len__(self) -> int:
        return len(self.frame)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectoryTable):
            return NotImplemented
        if self.frame_rate != other.frame_rate or self.metadata != other.metadata:
            return False
        for name in _COLUMNS:
            a, b = getattr(self, name), getattr(other, name)
            if a.dtype.kind == "f":
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif not np.array_equal(a, b):
                return False
        return True

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping], frame_rate: float = 25.0, metadata=None) -> "TrajectoryTable":
        rows = list(rows)
        cols = {name: [] for name in _COLUMNS}
        for r in rows:
            vx, vy = float(r["x_velocity"]), float(r["y_velocity"])
            for name in _COLUMNS:
                if name == "lane_id":
                    lane = r.get("lane_id")
                    cols[name].append(NO_LANE if lane is None else int(lane))
                elif name == "cls":
                    cols[name].append(r.get("cls", "Other"))
                elif name == "yaw_rate":
                    yr = r.get("yaw_rate")
                    cols[name].append(math.nan if yr is None else float(yr))
                elif name == "heading":
                    h = r.get("heading")
                    cols[name].append(math.atan2(vy, vx) if h is None else normalize_angle(float(h)))
                else:
                    cols[name].append(r[name])
        return cls(**cols, frame_rate=frame_rate, metadata=metadata or {})

    @cached_property
    def _index(self) -> dict[tuple[int, int], int]:
        return {(int(f), int(i)): k for k, (f, i) in enumerate(zip(self.frame, self.id))}

    @cached_property
    def _frame_slices(self) -> dict[int, slice]:
        frames, starts = np.unique(self.frame, return_index=True)
        ends = list(starts[1:]) + [len(self)]
        return {int(f): slice(int(s), int(e)) for f, s, e in zip(frames, starts, ends)}

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.x_velocity, self.y_velocity)

    def frames(self) -> list[int]:
        return list(self._frame_slices)

    def ids(self) -> list[int]:
        return [int(i) for i in np.unique(self.id)]

    def row(self, frame: int, track_id: int) -> int | None:
        return self._index.get((int(frame), int(track_id)))

    def rows_at(self, frame: int) -> range:
        sl = self._frame_slices.get(int(frame))
        return range(0) if sl is None else range(sl.start, sl.stop)

    def track(self, track_id: int) -> np.ndarray:
        """Row indices of one track in frame order."""
        return np.flatnonzero(self.id == track_id)

    def lane(self, row: int) -> int | None:
        lane = int(self.lane_id[row])
        return None if lane == NO_LANE else lane

    def state(self, row: int, wheelbase_ratio: float = 0.6) -> VehicleState:
        """VehicleState for a row; steering is recovered from yaw rate when known."""
        speed = float(math.hypot(self.x_velocity[row], self.y_velocity[row]))
        length = float(self.length[row])
        wheelbase = wheelbase_ratio * length
        yaw = float(self.yaw_rate[row])
        steering = 0.0
        if math.isfinite(yaw) and speed > 0.1:
            steering = math.atan(wheelbase * yaw / speed)
        return VehicleState(
            id=int(self.id[row]),
            cls=VehicleClass(self.cls[row]),
            x=float(self.x[row]),
            y=float(self.y[row]),
            heading=float(self.heading[row]),
            speed=speed,
            steering=steering,
            width=float(self.width[row]),
            length=length,
            wheelbase=wheelbase,
        )


def _derive_headings(frames, ids, vx, vy, given) -> np.ndarray:
    """atan2 of the velocity when moving faster than 0.1 m/s, else carried forward."""
    heading = np.array(given, dtype=float)
    moving = np.hypot(vx, vy) > 0.1
    for tid in np.unique(ids):
        rows = np.flatnonzero(ids == tid)
        rows = rows[np.argsort(frames[rows], kind="stable")]
        last = math.nan
        for r in rows:
            if not math.isnan(heading[r]):
                last = heading[r]
            elif moving[r]:
                last = math.atan2(vy[r], vx[r])
                heading[r] = last
            else:
                heading[r] = last
        # leading stationary rows take the first known heading (0 if none)
        known = heading[rows][~np.isnan(heading[rows])]
        first = known[0] if known.size else 0.0
        for r in rows:
            if math.isnan(heading[r]):
                heading[r] = first
            else:
                break
    return np.array([normalize_angle(h) for h in heading])


def parse_tracks(path, frame_rate: float = 25.0, metadata: Mapping | None = None) -> TrajectoryTable:
    """Read a highD-style tracks CSV (header row, comma separated, UTF-8)."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn("frame") from None
        colmap = {}
        for k, name in enumerate(header):
            canon = _ALIASES.get(name.strip().lower())
            if canon is not None and canon not in colmap:
                colmap[canon] = k
        for name in _REQUIRED:
            if name not in colmap:
                raise MissingColumn(_REPORTED.get(name, name))
        cols = {name: [] for name in _COLUMNS}
        seen = set()
        for lineno, raw in enumerate(reader, start=2):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) < len(header):
                raise MalformedRow(lineno, f"expected {len(header)} fields, got {len(raw)}")
            try:
                frame = int(float(raw[colmap["frame"]]))
                tid = int(float(raw[colmap["id"]]))
                vals = {n: float(raw[colmap[n]]) for n in _REQUIRED[2:]}
                lane = NO_LANE
                if "lane_id" in colmap and raw[colmap["lane_id"]].strip():
                    lane = int(float(raw[colmap["lane_id"]]))
                yaw = math.nan
                if "yaw_rate" in colmap and raw[colmap["yaw_rate"]].strip():
                    yaw = float(raw[colmap["yaw_rate"]])
                heading = math.nan
                if "heading" in colmap and raw[colmap["heading"]].strip():
                    heading = float(raw[colmap["heading"]])
            except ValueError as exc:
                raise MalformedRow(lineno, str(exc)) from None
            if (frame, tid) in seen:
                raise DuplicateKey(frame, tid)
            seen.add((frame, tid))
            if frame < 0 or not all(math.isfinite(v) for v in vals.values()):
                raise MalformedRow(lineno, "negative frame or non-finite value")
            if vals["width"] <= 0 or vals["length"] <= 0:
                raise MalformedRow(lineno, "width and length must be positive")
            cols["frame"].append(frame)
            cols["id"].append(tid)
            for n, v in vals.items():
                cols[n].append(v)
            cols["lane_id"].append(lane)
            cols["cls"].append(raw[colmap["cls"]] if "cls" in colmap else "Other")
            cols["yaw_rate"].append(yaw)
            cols["heading"].append(heading)
    arrays = {k: np.asarray(v) for k, v in cols.items()}
    arrays["heading"] = _derive_headings(
        arrays["frame"], arrays["id"], arrays["x_velocity"].astype(float),
        arrays["y_velocity"].astype(float), arrays["heading"],
    ) if len(arrays["frame"]) else np.zeros(0)
    return TrajectoryTable(**arrays, frame_rate=frame_rate, metadata=metadata or {})


def write_tracks(table: TrajectoryTable, path) -> None:
    """Serialize in the same CSV dialect that :func:`parse_tracks` reads."""
    header = ["frame", "id", "x", "y", "width", "length", "xVelocity", "yVelocity",
              "laneId", "class", "yawRate", "heading"]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k in range(len(table)):
            lane = int(table.lane_id[k])
            yaw = float(table.yaw_rate[k])
            w.writerow([
                int(table.frame[k]), int(table.id[k]),
                repr(float(table.x[k])), repr(float(table.y[k])),
                repr(float(table.width[k])), repr(float(table.length[k])),
                repr(float(table.x_velocity[k])), repr(float(table.y_velocity[k])),
                "" if lane == NO_LANE else lane,
                table.cls[k],
                "" if math.isnan(yaw) else repr(yaw),
                repr(float(table.heading[k])),
            ])


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def save_table(table: TrajectoryTable, path) -> None:
    """Tracks CSV plus ``<path>.meta.json`` holding the frame rate and metadata."""
    write_tracks(table, path)
    meta = {"frame_rate": table.frame_rate, "metadata": dict(table.metadata)}
    _sidecar(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_table(path, frame_rate: float | None = None, metadata: Mapping | None = None) -> TrajectoryTable:
    """Read a tracks CSV, picking up the sidecar written by :func:`save_table` when present."""
    side = _sidecar(path)
    rate, meta = 25.0, {}
    if side.exists():
        try:
            doc = json.loads(side.read_text(encoding="utf-8"))
            rate, meta = float(doc.get("frame_rate", 25.0)), dict(doc.get("metadata", {}))
        except (ValueError, TypeError, AttributeError) as exc:
            raise BadParameter(f"bad table sidecar {side}: {exc}") from None
    meta.update(metadata or {})
    return parse_tracks(path, frame_rate if frame_rate is not None else rate, meta)


# --------------------------------------------------------------------------
# Scenes


@dataclass(frozen=True)
class LaneContext:
    lane_id: int | None
    lanes_left: int = 0
    lanes_right: int = 0
    descriptor: str = ""  # used where there are no lanes (intersections, roundabouts)

    def to_dict(self) -> dict:
        return {"lane_id": self.lane_id, "lanes_left": self.lanes_left,
                "lanes_right": self.lanes_right, "descriptor": self.descriptor}


@dataclass(frozen=True)
class Neighbor:
    state: VehicleState
    lane_id: int | None
    rel_x: float  # ego frame, forward
    rel_y: float  # ego frame, left
    rel_heading: float


@dataclass(frozen=True)
class Scene:
    ego: VehicleState
    neighbors: tuple[Neighbor, ...]
    lane_context: LaneContext
    frame: int = 0
    navigation_instruction: str = DEFAULT_INSTRUCTIONS["highway"]
    dataset_tag: str = "highway"

    def __post_init__(self):
        if any(nb.state.id == self.ego.id for nb in self.neighbors):
            raise ValueError("ego must not be among its neighbors")
        if self.dataset_tag not in DATASET_TAGS:
            raise ValueError(f"unknown dataset tag {self.dataset_tag!r}")

    @classmethod
    def build(
        cls,
        ego: VehicleState,
        neighbors: Sequence[VehicleState],
        lane_context: LaneContext | None = None,
        neighbor_lanes: Mapping[int, int | None] | None = None,
        frame: int = 0,
        navigation_instruction: str | None = None,
        dataset_tag: str = "highway",
    ) -> "Scene":
        neighbor_lanes = neighbor_lanes or {}
        views = []
        for nb in neighbors:
            rx, ry = ego.to_local(nb.x, nb.y)
            views.append(Neighbor(nb, neighbor_lanes.get(nb.id), rx, ry,
                                  normalize_angle(nb.heading - ego.heading)))
        return cls(
            ego=ego,
            neighbors=tuple(views),
            lane_context=lane_context or LaneContext(None, descriptor=dataset_tag),
            frame=frame,
            navigation_instruction=navigation_instruction or DEFAULT_INSTRUCTIONS[dataset_tag],
            dataset_tag=dataset_tag,
        )

    @property
    def neighbor_states(self) -> list[VehicleState]:
        return [nb.state for nb in self.neighbors]

    @property
    def ref(self) -> str:
        return f"{self.dataset_tag}:{self.ego.id}@{self.frame}"

    def to_dict(self) -> dict:
        return {
            "ego": self.ego.to_dict(),
            "neighbors": [dict(nb.state.to_dict(), lane_id=nb.lane_id) for nb in self.neighbors],
            "lane_context": self.lane_context.to_dict(),
            "frame": self.frame,
            "navigation_instruction": self.navigation_instruction,
            "dataset_tag": self.dataset_tag,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scene":
        ego = VehicleState.from_dict(d["ego"])
        nbs = [VehicleState.from_dict(n) for n in d.get("neighbors", [])]
        lanes = {int(n["id"]): n.get("lane_id") for n in d.get("neighbors", [])}
        lc = d.get("lane_context")
        tag = d.get("dataset_tag", "highway")
        context = None
        if lc is not None:
            context = LaneContext(lc.get("lane_id"), int(lc.get("lanes_left", 0)),
                                  int(lc.get("lanes_right", 0)), lc.get("descriptor", ""))
        return cls.build(ego, nbs, context, lanes, int(d.get("frame", 0)),
                         d.get("navigation_instruction"), tag)


@dataclass(frozen=True)
class LabeledScene:
    scene: Scene
    true_label: Action | None
    label_source: str = "heuristic"  # "file" | "heuristic" | "manual"

    @property
    def tag(self) -> str:
        return self.scene.dataset_tag

    def to_dict(self) -> dict:
        return {
            "scene": self.scene.to_dict(),
            "true_label": None if self.true_label is None else self.true_label.token,
            "label_source": self.label_source,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabeledScene":
        label = d.get("true_label")
        return cls(Scene.from_dict(d["scene"]), None if label is None else Action.from_token(label),
                   d.get("label_source", "file"))


def _lane_context(table: TrajectoryTable, row: int, tag: str) -> LaneContext:
    lane = table.lane(row)
    if lane is None:
        return LaneContext(None, descriptor=tag)
    lanes = table.metadata.get("lane_ids")
    if lanes is None:
        lanes = sorted({int(v) for v in table.lane_id if v != NO_LANE})
    return LaneContext(lane, sum(1 for v in lanes if v > lane), sum(1 for v in lanes if v < lane))


def extract_scene(
    table: TrajectoryTable,
    ego_id: int,
    frame: int,
    radius: float = 50.0,
    cap: int = 8,
    instruction: str | None = None,
    wheelbase_ratio: float = 0.6,
) -> Scene:
    """Ego plus the ``cap`` nearest vehicles within ``radius`` (closed ball)."""
    rows = table.rows_at(frame)
    if len(rows) == 0:
        raise UnknownFrame(f"frame {frame} not in table")
    ego_row = table.row(frame, ego_id)
    if ego_row is None:
        raise UnknownEgo(f"vehicle {ego_id} not present at frame {frame}")
    ex, ey = table.x[ego_row], table.y[ego_row]
    cands = []
    for r in rows:
        if r == ego_row:
            continue
        d = math.hypot(table.x[r] - ex, table.y[r] - ey)
        if d <= radius:
            cands.append((d, int(table.id[r]), r))
    cands.sort()
    cands = cands[:cap]
    tag = table.metadata.get("dataset_tag", "highway")
    ego = table.state(ego_row, wheelbase_ratio)
    nbs = [table.state(r, wheelbase_ratio) for _, _, r in cands]
    lanes = {int(table.id[r]): table.lane(r) for _, _, r in cands}
    return Scene.build(
        ego, nbs, _lane_context(table, ego_row, tag), lanes, int(frame),
        instruction or table.metadata.get("navigation_instruction"), tag,
    )


def _num(v: float, digits: int = 1) -> str:
    text = f"{v:.{digits}f}"
    return text[1:] if text.startswith("-") and float(text) == 0.0 else text


def _signed(v: float) -> str:
    text = _num(v)
    return text if text.startswith("-") else "+" + text


def render_scene_text(scene: Scene) -> str:
    ego, lc = scene.ego, scene.lane_context
    lines = [f"Scene: {scene.dataset_tag}, frame {scene.frame}."]
    if lc.lane_id is not None:
        where = f"lane {lc.lane_id} ({lc.lanes_left} lane(s) to the left, {lc.lanes_right} to the right)"
    else:
        where = f"no marked lane ({lc.descriptor or scene.dataset_tag})"
    lines.append(
        f"Ego vehicle {ego.id} ({ego.cls.value}): {where}, position ({_num(ego.x)}, {_num(ego.y)}) m, "
        f"speed {_num(ego.speed)} m/s, heading {_num(math.degrees(ego.heading))} deg."
    )
    for nb in sorted(scene.neighbors, key=lambda n: n.state.id):
        s = nb.state
        lane = f"lane {nb.lane_id}" if nb.lane_id is not None else "no marked lane"
        lines.append(
            f"Vehicle {s.id} ({s.cls.value}): {lane}, relative position "
            f"({_signed(nb.rel_x)}, {_signed(nb.rel_y)}) m, speed {_num(s.speed)} m/s, "
            f"relative heading {_num(math.degrees(nb.rel_heading))} deg."
        )
    lines.append(f"Navigation: {scene.navigation_instruction}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Ground-truth labels


@dataclass(frozen=True)
class LabelerConfig:
    horizon: int = 25
    turn_threshold: float = 0.2
    accel_threshold: float = 0.3


def label_action(
    table: TrajectoryTable,
    ego_id: int,
    frame: int,
    horizon: int = 25,
    turn_threshold: float = 0.2,
    accel_threshold: float = 0.3,
    overrides: Mapping[tuple[int, int], Action] | None = None,
) -> Action:
    """Heuristic next-action label from the ego's own future track."""
    if overrides and (ego_id, frame) in overrides:
        return overrides[(ego_id, frame)]
    r0 = table.row(frame, ego_id)
    r1 = table.row(frame + horizon, ego_id)
    if r0 is None or r1 is None:
        raise TrackTooShort(f"vehicle {ego_id} has no rows at frames {frame} and {frame + horizon}")
    start = table.state(r0)
    lanes = [table.row(f, ego_id) for f in range(frame, frame + horizon + 1)]
    lane0 = table.lane(r0)
    if lane0 is not None:
        for r in lanes:
            if r is not None and table.lane(r) not in (None, lane0):
                _, lat = start.to_local(table.x[r], table.y[r])
                return Action.LANE_CHANGE_LEFT if lat > 0 else Action.LANE_CHANGE_RIGHT
    turn = normalize_angle(float(table.heading[r1]) - start.heading)
    if turn > turn_threshold:
        return Action.TURN_LEFT
    if turn < -turn_threshold:
        return Action.TURN_RIGHT
    v0 = start.speed
    v1 = math.hypot(table.x_velocity[r1], table.y_velocity[r1])
    accel = (v1 - v0) / (horizon / table.frame_rate)
    if accel > accel_threshold:
        return Action.ACCELERATE
    if accel < -accel_threshold:
        return Action.DECELERATE
    return Action.IDLE


def load_label_file(path) -> dict[tuple[int, int], Action]:
    """Label overrides: CSV with header ``ego_id,frame,action``."""
    out = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for name in ("ego_id", "frame", "action"):
            if reader.fieldnames is None or name not in reader.fieldnames:
                raise MissingColumn(name)
        for lineno, row in enumerate(reader, start=2):
            try:
                out[(int(row["ego_id"]), int(row["frame"]))] = Action.from_token(row["action"])
            except (ValueError, TypeError) as exc:
                raise MalformedRow(lineno, str(exc)) from None
    return out


# --------------------------------------------------------------------------
# Synthetic scenarios

SYNTH_RATE = 25.0
LANE_WIDTH = 3.5


def _check(cond: bool, msg: str):
    if not cond:
        raise BadParameter(msg)


def _longitudinal(x0: float, v0: float, accel: float, t: np.ndarray):
    """Constant acceleration that stops at zero speed."""
    if accel < 0 and v0 > 0:
        t_stop = v0 / -accel
        tt = np.minimum(t, t_stop)
    elif accel < 0:
        tt = np.zeros_like(t)
    else:
        tt = t
    return x0 + v0 * tt + 0.5 * accel * tt * tt, v0 + accel * tt


def _rows(tid, cls, t, x, y, vx, vy, heading, lane=None, yaw=None, width=1.8, length=4.5):
    out = []
    for k in range(len(t)):
        out.append({
            "frame": k, "id": tid, "x": float(x[k]), "y": float(y[k]),
            "width": width, "length": length,
            "x_velocity": float(vx[k]), "y_velocity": float(vy[k]),
            "lane_id": None if lane is None else int(lane[k]) if np.ndim(lane) else int(lane),
            "cls": cls,
            "yaw_rate": None if yaw is None else float(yaw[k]) if np.ndim(yaw) else float(yaw),
            "heading": float(heading[k]) if np.ndim(heading) else float(heading),
        })
    return out


def _dims(cls: str) -> tuple[float, float]:
    c = VehicleClass.parse(cls)
    if c in (VehicleClass.TRUCK, VehicleClass.BUS):
        return 2.5, 12.0
    if c is VehicleClass.MOTORCYCLE:
        return 0.8, 2.2
    if c is VehicleClass.VRU:
        return 0.6, 0.6
    return 1.8, 4.5


def _car_following(p: Mapping) -> TrajectoryTable:
    speed = float(p.get("speed", 20.0))
    thw = float(p.get("thw", 2.0))
    duration = float(p.get("duration", 4.0))
    f_acc = float(p.get("follower_accel", 0.0))
    l_acc = float(p.get("leader_accel", 0.0))
    l_speed = float(p.get("leader_speed", speed))
    f_cls = p.get("follower_class", "Sedan")
    l_cls = p.get("leader_class", "Sedan")
    _check(0 < speed <= 60, "speed must be in (0, 60] m/s")
    _check(0.1 <= thw <= 10, "thw must be in [0.1, 10] s")
    _check(0 < duration <= 60, "duration must be in (0, 60] s")
    _check(0 <= l_speed <= 60, "leader_speed must be in [0, 60] m/s")
    _check(abs(f_acc) <= 8 and abs(l_acc) <= 8, "accelerations must be within +-8 m/s^2")
    fw, fl = _dims(f_cls)
    lw, ll = _dims(l_cls)
    t = np.arange(int(round(duration * SYNTH_RATE)) + 1) / SYNTH_RATE
    xf, vf = _longitudinal(0.0, speed, f_acc, t)
    xl, vl = _longitudinal(fl / 2 + thw * speed + ll / 2, l_speed, l_acc, t)
    zero = np.zeros_like(t)
    rows = _rows(1, f_cls, t, xf, zero, vf, zero, 0.0, lane=2, yaw=0.0, width=fw, length=fl)
    rows += _rows(2, l_cls, t, xl, zero, vl, zero, 0.0, lane=2, yaw=0.0, width=lw, length=ll)
    meta = {"kind": "car_following", "dataset_tag": "highway", "lane_ids": [1, 2, 3], "ego_id": 1}
    return TrajectoryTable.from_rows(rows, SYNTH_RATE, meta)


def _lane_change_conflict(p: Mapping) -> TrajectoryTable:
    speed = float(p.get("ego_speed", 25.0))
    o_speed = float(p.get("overtaker_speed", 35.0))
    o_gap = float(p.get("overtaker_gap", 25.0))
    maneuver = p.get("ego_maneuver", "keep")
    duration = float(p.get("duration", 4.0))
    lead_gap = p.get("leader_gap")
    lead_speed = float(p.get("leader_speed", speed))
    ego_acc = float(p.get("ego_accel", -2.0 if maneuver == "brake" else 0.0))
    _check(0 < speed <= 60 and 0 <= o_speed <= 60, "speeds must be in (0, 60] m/s")
    _check(0 <= o_gap <= 300, "overtaker_gap must be in [0, 300] m")
    _check(maneuver in ("keep", "lane_change_left", "brake"), "ego_maneuver must be keep|lane_change_left|brake")
    _check(0 < duration <= 60, "duration must be in (0, 60] s")
    t = np.arange(int(round(duration * SYNTH_RATE)) + 1) / SYNTH_RATE
    zero = np.zeros_like(t)
    xe, ve = _longitudinal(0.0, speed, ego_acc, t)
    if maneuver == "lane_change_left":
        t_lc = 3.0
        u = np.clip(t / t_lc, 0.0, 1.0)
        ye = LANE_WIDTH * (1 - np.cos(np.pi * u)) / 2
        vye = np.where(t < t_lc, LANE_WIDTH * np.pi / (2 * t_lc) * np.sin(np.pi * u), 0.0)
        lane = np.where(ye > LANE_WIDTH / 2, 3, 2)
    else:
        ye, vye, lane = zero, zero, np.full(len(t), 2)
    heading = np.arctan2(vye, ve)
    rows = _rows(1, "Sedan", t, xe, ye, ve, vye, heading, lane=lane, yaw=0.0)
    xo = -o_gap + o_speed * t
    rows += _rows(2, "Sedan", t, xo, zero + LANE_WIDTH, zero + o_speed, zero, 0.0, lane=3, yaw=0.0)
    if lead_gap is not None:
        lead_gap = float(lead_gap)
        _check(0 < lead_gap <= 300, "leader_gap must be in (0, 300] m")
        xl = lead_gap + lead_speed * t
        rows += _rows(3, "Sedan", t, xl, zero, zero + lead_speed, zero, 0.0, lane=2, yaw=0.0)
    meta = {
        "kind": "lane_change_conflict",
        "dataset_tag": "highway",
        "lane_ids": [1, 2, 3],
        "ego_id": 1,
        "navigation_instruction": "Change to the left lane when it is safe to do so.",
    }
    return TrajectoryTable.from_rows(rows, SYNTH_RATE, meta)


def _intersection_approach(p: Mapping) -> TrajectoryTable:
    speed = float(p.get("ego_speed", 8.0))
    approach = float(p.get("approach", 60.0))
    exit_ = float(p.get("exit", 40.0))
    n_queue = int(p.get("queue", 3))
    spacing = float(p.get("spacing", 6.5))
    stop = float(p.get("stop_offset", 8.0))
    ego_acc = float(p.get("ego_accel", 0.0))
    _check(0 < speed <= 25, "ego_speed must be in (0, 25] m/s")
    _check(10 <= approach <= 200 and 10 <= exit_ <= 200, "approach/exit must be in [10, 200] m")
    _check(0 <= n_queue <= 10, "queue must be in [0, 10]")
    oncoming = [float(v) for v in p.get("oncoming", ())]
    oncoming_speed = float(p.get("oncoming_speed", 8.0))
    follower_gap = p.get("follower_gap")
    follower_gap = None if follower_gap is None else float(follower_gap)
    _check(follower_gap is None or 5 <= follower_gap <= 100, "follower_gap must be in [5, 100] m")
    leader_gap = p.get("leader_gap")
    leader_gap = None if leader_gap is None else float(leader_gap)
    leader_speed = float(p.get("leader_speed", speed))
    _check(leader_gap is None or 5 <= leader_gap <= 100, "leader_gap must be in [5, 100] m")
    _check(0 <= leader_speed <= 25, "leader_speed must be in [0, 25] m/s")
    _check(abs(ego_acc) <= 3, "ego_accel must be within +-3 m/s^2")
    _check(all(0 < v <= 300 for v in oncoming), "oncoming distances must be in (0, 300] m")
    _check(0 <= oncoming_speed <= 25, "oncoming_speed must be in [0, 25] m/s")
    conflict = (LANE_WIDTH / 2, -LANE_WIDTH / 2)
    duration = float(p.get("duration", (approach + exit_) / speed))
    t = np.arange(int(round(duration * SYNTH_RATE)) + 1) / SYNTH_RATE
    zero = np.zeros_like(t)
    xe, ve = _longitudinal(conflict[0] - approach, speed, ego_acc, t)
    rows = _rows(1, "Sedan", t, xe, zero + conflict[1], ve, zero, 0.0, yaw=0.0)
    for k in range(n_queue):
        yq = conflict[1] - stop - k * spacing
        rows += _rows(2 + k, "Sedan", t, zero + conflict[0], zero + yq, zero, zero, math.pi / 2, yaw=0.0)
    # oncoming traffic in the opposite lane, given as initial distance ahead of the ego
    for k, ahead in enumerate(oncoming):
        xo = xe[0] + ahead - oncoming_speed * t
        rows += _rows(2 + n_queue + k, "Sedan", t, xo, zero - conflict[1], zero - oncoming_speed, zero,
                      math.pi, yaw=0.0)
    next_id = 2 + n_queue + len(oncoming)
    if follower_gap is not None:
        rows += _rows(next_id, "Sedan", t, xe - follower_gap, zero + conflict[1], ve, zero, 0.0, yaw=0.0)
        next_id += 1
    if leader_gap is not None:
        xl = xe[0] + leader_gap + leader_speed * t
        rows += _rows(next_id, "Sedan", t, xl, zero + conflict[1], zero + leader_speed, zero, 0.0, yaw=0.0)
    meta = {
        "kind": "intersection_approach",
        "dataset_tag": "intersection",
        "ego_id": 1,
        "conflict_point": list(conflict),
        "navigation_instruction": DEFAULT_INSTRUCTIONS["intersection"],
    }
    return TrajectoryTable.from_rows(rows, SYNTH_RATE, meta)


def _roundabout_merge(p: Mapping) -> TrajectoryTable:
    radius = float(p.get("radius", 20.0))
    speed = float(p.get("ego_speed", 8.0))
    ring_speed = float(p.get("ring_speed", 8.0))
    approach = float(p.get("approach", 30.0))
    angles = [float(a) for a in p.get("ring_angles", (-2.0, 2.0))]
    duration = float(p.get("duration", 6.0))
    ego_acc = float(p.get("ego_accel", 0.0))
    _check(8 <= radius <= 60, "radius must be in [8, 60] m")
    _check(0 < speed <= 20 and 0 <= ring_speed <= 20, "speeds must be in (0, 20] m/s")
    _check(0 <= approach <= 200, "approach must be in [0, 200] m")
    _check(0 < duration <= 60, "duration must be in (0, 60] s")
    _check(abs(ego_acc) <= 3, "ego_accel must be within +-3 m/s^2")
    follower_gap = p.get("follower_gap")
    follower_gap = None if follower_gap is None else float(follower_gap)
    _check(follower_gap is None or 5 <= follower_gap <= 100, "follower_gap must be in [5, 100] m")
    t = np.arange(int(round(duration * SYNTH_RATE)) + 1) / SYNTH_RATE
    dist, v = _longitudinal(0.0, speed, ego_acc, t)

    def entry_path(d):
        # straight tangent approach along x = radius, then counterclockwise on the ring
        on_ring = d > approach
        theta = np.where(on_ring, (d - approach) / radius, 0.0)
        x = np.where(on_ring, radius * np.cos(theta), radius)
        y = np.where(on_ring, radius * np.sin(theta), d - approach)
        h = np.where(on_ring, theta + math.pi / 2, math.pi / 2)
        return x, y, h, np.where(on_ring, v / radius, 0.0)

    xe, ye, he, yaw_e = entry_path(dist)
    rows = _rows(1, "Sedan", t, xe, ye, v * np.cos(he), v * np.sin(he), he, yaw=yaw_e)
    for k, a0 in enumerate(angles):
        th = a0 + ring_speed * t / radius
        h = th + math.pi / 2
        rows += _rows(2 + k, "Sedan", t, radius * np.cos(th), radius * np.sin(th),
                      ring_speed * np.cos(h), ring_speed * np.sin(h), h,
                      yaw=ring_speed / radius)
    if follower_gap is not None:
        xf, yf, hf, yaw_f = entry_path(dist - follower_gap)
        rows += _rows(2 + len(angles), "Sedan", t, xf, yf, v * np.cos(hf), v * np.sin(hf), hf, yaw=yaw_f)
    meta = {
        "kind": "roundabout_merge",
        "dataset_tag": "roundabout",
        "ego_id": 1,
        "merge_point": [radius, 0.0],
        "navigation_instruction": DEFAULT_INSTRUCTIONS["roundabout"],
    }
    return TrajectoryTable.from_rows(rows, SYNTH_RATE, meta)


_SYNTH = {
    "car_following": _car_following,
    "lane_change_conflict": _lane_change_conflict,
    "intersection_approach": _intersection_approach,
    "roundabout_merge": _roundabout_merge,
}


def synth_scenario(spec: Mapping) -> TrajectoryTable:
    """Deterministic 25 Hz kinematic rollout; ``spec = {"kind": ..., **parameters}``."""
    kind = spec.get("kind")
    if kind not in _SYNTH:
        raise BadParameter(f"unknown scenario kind {kind!r}; expected one of {sorted(_SYNTH)}")
    try:
        return _SYNTH[kind]({k: v for k, v in spec.items() if k != "kind"})
    except (TypeError, ValueError) as exc:
        if isinstance(exc, BadParameter):
            raise
        raise BadParameter(str(exc)) from None
