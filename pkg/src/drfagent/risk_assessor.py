"""Percentile thresholds over QPR samples and per-participant risk notifications."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConventionMismatch, EmptyDataset, InsufficientSamples
from .risk_field import Convention, CostTable, DrfParams, GridSpec, QprReport, qpr_total
from .scene import TrajectoryTable

LOW_PERCENTILE = 30
HIGH_PERCENTILE = 70
MIN_CALIBRATION_SAMPLES = 10


class RiskLevel(enum.IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def marker(self) -> str:
        return self.name


@dataclass(frozen=True)
class RiskThresholds:
    t_low: float
    t_high: float
    sample_count: int
    convention: Convention = Convention.AREA_INTEGRAL
    source_tag: str = ""
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "convention", Convention(self.convention))
        if not self.t_low <= self.t_high:
            raise ValueError("t_low must not exceed t_high")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "t_low": self.t_low,
            "t_high": self.t_high,
            "sample_count": self.sample_count,
            "convention": self.convention.value,
            "seed": self.seed,
            "source_tag": self.source_tag,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "RiskThresholds":
        return cls(float(d["t_low"]), float(d["t_high"]), int(d["sample_count"]),
                   Convention(d.get("convention", "AreaIntegral")), d.get("source_tag", ""), d.get("seed"))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RiskThresholds":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _triple_index(table: TrajectoryTable, radius: float | None):
    """Per-frame (ego_row, neighbor_row) pairs and their cumulative counts.

    With a radius only pairs whose centers lie within it (closed ball) count.
    """
    pairs, counts = [], []
    for f in table.frames():
        rows = np.arange(table.rows_at(f).start, table.rows_at(f).stop)
        ego_rows, nb_rows = np.meshgrid(rows, rows, indexing="ij")
        keep = ego_rows != nb_rows
        if radius is not None:
            d = np.hypot(table.x[nb_rows] - table.x[ego_rows], table.y[nb_rows] - table.y[ego_rows])
            keep &= d <= radius
        pairs.append((ego_rows[keep], nb_rows[keep]))
        counts.append(int(keep.sum()))
    return pairs, np.cumsum(np.array(counts, dtype=np.int64))


def sample_qpr_distribution(
    tables: TrajectoryTable | Sequence[TrajectoryTable],
    n: int,
    seed: int,
    params: DrfParams,
    costs: CostTable,
    grid_spec: GridSpec,
    convention: Convention = Convention.AREA_INTEGRAL,
    wheelbase_ratio: float = 0.6,
    radius: float | None = None,
) -> list[float]:
    """Draw ``n`` per-vehicle QPR shares from uniformly sampled (ego, frame, neighbor) triples.

    Each share is the pairwise QPR of the neighbor against the ego (front and
    rear parts summed).  Triples are drawn with replacement.  ``radius``
    limits neighbors to those a scene of that radius would contain.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(tables, TrajectoryTable):
        tables = [tables]
    if not tables:
        raise EmptyDataset("no trajectory tables given")
    index = [_triple_index(t, radius) for t in tables]
    totals = np.array([cum[-1] if len(cum) else 0 for _, cum in index], dtype=np.int64)
    grand = int(totals.sum())
    if grand == 0:
        raise EmptyDataset("no frame holds a pair of vehicles to sample")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, grand, size=n)
    table_edges = np.cumsum(totals)
    cache: dict[tuple[int, int, int], float] = {}
    out = []
    for pick in picks:
        t_idx = int(np.searchsorted(table_edges, pick, side="right"))
        local = int(pick - (table_edges[t_idx - 1] if t_idx else 0))
        pairs, cum = index[t_idx]
        f_idx = int(np.searchsorted(cum, local, side="right"))
        local -= int(cum[f_idx - 1]) if f_idx else 0
        ego_row = int(pairs[f_idx][0][local])
        nb_row = int(pairs[f_idx][1][local])
        key = (t_idx, ego_row, nb_row)
        if key not in cache:
            table = tables[t_idx]
            ego = table.state(ego_row, wheelbase_ratio)
            nb = table.state(nb_row, wheelbase_ratio)
            report = qpr_total(ego, [nb], params, costs, grid_spec.build(ego), convention)
            cache[key] = report.share(nb.id)
        out.append(cache[key])
    return out


def nearest_rank(sorted_values: Sequence[float], percent: int) -> float:
    """Value at rank ceil(percent/100 * n) of an ascending sequence (1-based)."""
    n = len(sorted_values)
    rank = max(1, -(-percent * n // 100))
    return float(sorted_values[rank - 1])


def calibrate_thresholds(
    samples: Sequence[float],
    convention: Convention = Convention.AREA_INTEGRAL,
    source_tag: str = "",
    seed: int | None = None,
) -> RiskThresholds:
    """Nearest-rank 30th/70th percentiles (no interpolation)."""
    if len(samples) < MIN_CALIBRATION_SAMPLES:
        raise InsufficientSamples(f"need at least {MIN_CALIBRATION_SAMPLES} samples, got {len(samples)}")
    ordered = np.sort(np.asarray(samples, dtype=float))
    return RiskThresholds(
        nearest_rank(ordered, LOW_PERCENTILE),
        nearest_rank(ordered, HIGH_PERCENTILE),
        len(ordered),
        convention,
        source_tag,
        seed,
    )


def classify_risk(qpr: float, thresholds: RiskThresholds) -> RiskLevel:
    if qpr < thresholds.t_low:
        return RiskLevel.LOW
    if qpr > thresholds.t_high:
        return RiskLevel.HIGH
    return RiskLevel.MEDIUM


DEFAULT_TEMPLATES = {
    "header": "Risk assessment: total QPR {total:.3f}, scene risk level {level}.",
    "HIGH:front": "Vehicle {id} (front): HIGH risk, QPR {qpr:.3f}. It is a major hazard ahead; "
                  "increase the gap and do not close in on it.",
    "HIGH:rear": "Vehicle {id} (rear): HIGH risk, QPR {qpr:.3f}. It is approaching fast from behind; "
                 "do not move into its path.",
    "MEDIUM:front": "Vehicle {id} (front): MEDIUM risk, QPR {qpr:.3f}. Keep monitoring it.",
    "MEDIUM:rear": "Vehicle {id} (rear): MEDIUM risk, QPR {qpr:.3f}. Keep monitoring it.",
    "LOW:front": "Vehicle {id} (front): LOW risk, QPR {qpr:.3f}.",
    "LOW:rear": "Vehicle {id} (rear): LOW risk, QPR {qpr:.3f}.",
}


@dataclass(frozen=True)
class ParticipantRisk:
    id: int
    qpr_share: float
    level: RiskLevel
    relation: str  # "front" | "rear"
    sentence: str


@dataclass(frozen=True)
class RiskNotification:
    participants: tuple[ParticipantRisk, ...]
    scene_level: RiskLevel
    total: float
    header: str = ""

    def to_text(self) -> str:
        return "\n".join([self.header] + [p.sentence for p in self.participants])


def risk_notification(
    report: QprReport,
    thresholds: RiskThresholds,
    templates: Mapping[str, str] | None = None,
) -> RiskNotification:
    if report.convention is not thresholds.convention:
        raise ConventionMismatch(
            f"report uses {report.convention.value}, thresholds use {thresholds.convention.value}"
        )
    tpl = dict(DEFAULT_TEMPLATES)
    tpl.update(templates or {})
    entries = []
    for vid, (front, rear) in report.per_vehicle.items():
        share = front + rear
        entries.append((-share, vid, front, rear))
    entries.sort()
    participants = []
    for neg_share, vid, front, rear in entries:
        share = -neg_share
        level = classify_risk(share, thresholds)
        relation = "rear" if rear > front else "front"
        sentence = tpl[f"{level.marker}:{relation}"].format(id=vid, qpr=share, level=level.marker)
        participants.append(ParticipantRisk(vid, share, level, relation, sentence))
    scene_level = classify_risk(report.total, thresholds)
    header = tpl["header"].format(total=report.total, level=scene_level.marker)
    return RiskNotification(tuple(participants), scene_level, report.total, header)
