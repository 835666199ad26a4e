"""Dynamic driver risk field (DRF), cost maps and omnidirectional QPR.

The DRF of a vehicle is a ridge laid along the arc the vehicle would follow
with its current steering angle held constant (kinematic bicycle model).
Along the path the ridge height is a parabola in arc length that reaches
zero at the look-ahead distance ``speed * t_la``; across the path it has a
Gaussian profile whose width grows linearly with arc length, with separate
gains on the inside and outside of the turn.

Quantified perceived risk (QPR) is the grid sum of cost map times DRF.  The
front part uses the ego DRF against the neighbours' costs; the rear part
uses each trailing neighbour's DRF against the ego's own cost.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi
_EDGE_SLACK = 1e-9  # relative tolerance on the 4-sigma cut, absolute (m) on s >= 0


class VehicleClass(str, enum.Enum):
    SEDAN = "Sedan"
    TRUCK = "Truck"
    BUS = "Bus"
    MOTORCYCLE = "Motorcycle"
    VRU = "VRU"
    OTHER = "Other"

    @classmethod
    def parse(cls, text: str | "VehicleClass") -> "VehicleClass":
        if isinstance(text, VehicleClass):
            return text
        key = str(text).strip().lower()
        for member in cls:
            if member.value.lower() == key:
                return member
        return _CLASS_ALIASES.get(key, cls.OTHER)


_CLASS_ALIASES = {
    "car": VehicleClass.SEDAN,
    "van": VehicleClass.SEDAN,
    "trailer": VehicleClass.TRUCK,
    "truck_bus": VehicleClass.TRUCK,
    "motorbike": VehicleClass.MOTORCYCLE,
    "pedestrian": VehicleClass.VRU,
    "bicycle": VehicleClass.VRU,
    "bicyclist": VehicleClass.VRU,
    "cyclist": VehicleClass.VRU,
}


class Convention(str, enum.Enum):
    """How the per-cell products are aggregated into a QPR value."""

    GRID_SUM = "GridSum"  # raw sum over cells
    AREA_INTEGRAL = "AreaIntegral"  # sum times cell area


class PathMode(str, enum.Enum):
    ARC = "Arc"
    STRAIGHT = "Straight"


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return float(theta)
    wrapped = math.remainder(theta, TWO_PI)
    return math.pi if wrapped <= -math.pi else wrapped


@dataclass(frozen=True)
class VehicleState:
    """One road user at one instant. Angles in radians, lengths in meters."""

    id: int
    cls: VehicleClass
    x: float
    y: float
    heading: float
    speed: float
    steering: float = 0.0
    width: float = 1.8
    length: float = 4.5
    wheelbase: float = 2.7

    def __post_init__(self):
        object.__setattr__(self, "cls", VehicleClass.parse(self.cls))
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))
        if not self.speed >= 0.0:
            raise ValueError(f"vehicle {self.id}: speed must be >= 0, got {self.speed}")
        for name in ("width", "length", "wheelbase"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"vehicle {self.id}: {name} must be > 0")
        if not abs(self.steering) < math.pi / 2:
            raise ValueError(f"vehicle {self.id}: |steering| must be < pi/2")
        for name in ("x", "y"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"vehicle {self.id}: {name} must be finite")

    @property
    def velocity(self) -> tuple[float, float]:
        return self.speed * math.cos(self.heading), self.speed * math.sin(self.heading)

    def to_local(self, x: float, y: float) -> tuple[float, float]:
        """World point -> (longitudinal, lateral) in this vehicle's frame, left positive."""
        dx, dy = x - self.x, y - self.y
        c, s = math.cos(self.heading), math.sin(self.heading)
        return dx * c + dy * s, -dx * s + dy * c

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "class": self.cls.value,
            "x": self.x,
            "y": self.y,
            "heading": self.heading,
            "speed": self.speed,
            "steering": self.steering,
            "width": self.width,
            "length": self.length,
            "wheelbase": self.wheelbase,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "VehicleState":
        kwargs = {k: d[k] for k in ("x", "y", "heading", "speed") if k in d}
        for k in ("steering", "width", "length", "wheelbase"):
            if k in d:
                kwargs[k] = float(d[k])
        return cls(id=int(d["id"]), cls=VehicleClass.parse(d.get("class", "Other")), **kwargs)


@dataclass(frozen=True)
class DrfParams:
    """Field shape.

    ``c`` of None means a quarter of the owning vehicle's width; ``s_max`` of
    None means the look-ahead distance ``speed * t_la``.
    """

    p: float = 0.0064
    t_la: float = 5.0
    m: float = 0.05
    k_inner: float = 0.2
    k_outer: float = 1.14
    c: float | None = None
    delta_straight: float = 1e-3
    s_max: float | None = None
    cutoff_sigmas: float = 4.0

    def __post_init__(self):
        if not (self.p > 0 and self.t_la > 0):
            raise ValueError("p and t_la must be > 0")
        if self.c is not None and not self.c > 0:
            raise ValueError("c must be > 0")
        if min(self.m, self.k_inner, self.k_outer) < 0:
            raise ValueError("m, k_inner, k_outer must be >= 0")
        if not self.delta_straight > 0:
            raise ValueError("delta_straight must be > 0")
        if self.s_max is not None and self.s_max < 0:
            raise ValueError("s_max must be >= 0")

    def half_width(self, state: VehicleState) -> float:
        return state.width / 4.0 if self.c is None else self.c

    def support(self, state: VehicleState) -> float:
        return state.speed * self.t_la if self.s_max is None else self.s_max

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DrfParams":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class Grid:
    """Regular planar grid; the cell axes may be rotated by ``angle``.

    Cell (i, j) has its center at ``origin + R(angle) @ ((i + .5) h, (j + .5) h)``.
    Arrays over the grid are indexed ``[j, i]`` (row-major, ny rows of nx).
    """

    origin_x: float
    origin_y: float
    nx: int
    ny: int
    resolution: float
    angle: float = 0.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("grid needs at least one cell per axis")
        if not self.resolution > 0:
            raise ValueError("resolution must be > 0")

    @property
    def shape(self) -> tuple[int, int]:
        return self.ny, self.nx

    @property
    def cell_area(self) -> float:
        return self.resolution * self.resolution

    def centers_at(self, jj: np.ndarray, ii: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = self.resolution
        u = (np.asarray(ii, dtype=float) + 0.5) * h
        v = (np.asarray(jj, dtype=float) + 0.5) * h
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        return self.origin_x + u * ca - v * sa, self.origin_y + u * sa + v * ca

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        jj, ii = np.indices(self.shape)
        return self.centers_at(jj, ii)

    def to_local(self, x, y):
        """World coordinates -> grid-axis coordinates relative to the origin."""
        ca, sa = math.cos(self.angle), math.sin(self.angle)
        dx, dy = np.asarray(x) - self.origin_x, np.asarray(y) - self.origin_y
        return dx * ca + dy * sa, -dx * sa + dy * ca

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Grid":
        return cls(
            origin_x=float(d["origin_x"]),
            origin_y=float(d["origin_y"]),
            nx=int(d["nx"]),
            ny=int(d["ny"]),
            resolution=float(d["resolution"]),
            angle=float(d.get("angle", 0.0)),
        )


@dataclass(frozen=True)
class GridSpec:
    """Recipe for an ego-attached grid aligned with the ego heading."""

    ahead: float = 160.0
    behind: float = 40.0
    half_width: float = 30.0
    resolution: float = 0.5

    def build(self, ego: VehicleState) -> Grid:
        h = self.resolution
        nx = max(1, int(round((self.ahead + self.behind) / h)))
        ny = max(1, int(round(2.0 * self.half_width / h)))
        c, s = math.cos(ego.heading), math.sin(ego.heading)
        ox = ego.x - self.behind * c + self.half_width * s
        oy = ego.y - self.behind * s - self.half_width * c
        return Grid(ox, oy, nx, ny, h, ego.heading)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GridSpec":
        return cls(**{k: float(d[k]) for k in cls.__dataclass_fields__ if k in d})


@dataclass(frozen=True)
class ArcGeometry:
    mode: PathMode
    radius: float = math.inf
    center_x: float = math.nan
    center_y: float = math.nan
    turn_sign: int = 0  # +1 left (counterclockwise), -1 right


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray  # shape (ny, nx)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError("field values must be finite and non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


_DEFAULT_COSTS = {
    VehicleClass.SEDAN: 1.0,
    VehicleClass.TRUCK: 2.0,
    VehicleClass.BUS: 2.0,
    VehicleClass.MOTORCYCLE: 0.8,
    VehicleClass.VRU: 3.0,
}


@dataclass(frozen=True)
class CostTable:
    costs: Mapping[VehicleClass, float] = field(default_factory=lambda: dict(_DEFAULT_COSTS))
    default_cost: float = 1.0

    def __post_init__(self):
        parsed = {VehicleClass.parse(k): float(v) for k, v in self.costs.items()}
        if any(v < 0 for v in parsed.values()) or self.default_cost < 0:
            raise ValueError("costs must be >= 0")
        object.__setattr__(self, "costs", parsed)

    def cost(self, cls: VehicleClass) -> float:
        return self.costs.get(VehicleClass.parse(cls), self.default_cost)

    def scaled(self, factor: float) -> "CostTable":
        return CostTable({k: v * factor for k, v in self.costs.items()}, self.default_cost * factor)

    def to_dict(self) -> dict:
        return {"costs": {k.value: v for k, v in self.costs.items()}, "default_cost": self.default_cost}

    @classmethod
    def from_dict(cls, d: Mapping) -> "CostTable":
        return cls(dict(d.get("costs", _DEFAULT_COSTS)), float(d.get("default_cost", 1.0)))


@dataclass(frozen=True)
class QprReport:
    total: float
    front: float
    rear: float
    per_vehicle: Mapping[int, tuple[float, float]]  # id -> (front_share, rear_share)
    grid: Grid
    convention: Convention

    def share(self, vehicle_id: int) -> float:
        f, r = self.per_vehicle[vehicle_id]
        return f + r

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "front": self.front,
            "rear": self.rear,
            "per_vehicle": {str(k): {"front": f, "rear": r} for k, (f, r) in sorted(self.per_vehicle.items())},
            "grid": self.grid.to_dict(),
            "convention": self.convention.value,
        }


# --------------------------------------------------------------------------
# Path geometry


def predicted_arc(state: VehicleState, params: DrfParams) -> ArcGeometry:
    """Constant-steering travel circle, or straight mode for tiny steering."""
    delta = state.steering
    if abs(delta) < params.delta_straight:
        return ArcGeometry(PathMode.STRAIGHT)
    radius = state.wheelbase / abs(math.tan(delta))
    sign = 1 if delta > 0 else -1
    # center sits on the left normal for a left turn
    cx = state.x - sign * radius * math.sin(state.heading)
    cy = state.y + sign * radius * math.cos(state.heading)
    return ArcGeometry(PathMode.ARC, radius, cx, cy, sign)


def _path_coords(xs, ys, state: VehicleState, arc: ArcGeometry):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if arc.mode is PathMode.STRAIGHT:
        c, s = math.cos(state.heading), math.sin(state.heading)
        dx, dy = xs - state.x, ys - state.y
        along = dx * c + dy * s
        lat = -dx * s + dy * c
        return along, np.abs(lat), lat > 0
    # angle swept from the vehicle to the point, in the direction of travel
    vx, vy = state.x - arc.center_x, state.y - arc.center_y
    px, py = xs - arc.center_x, ys - arc.center_y
    swept = np.arctan2(vx * py - vy * px, vx * px + vy * py) * arc.turn_sign
    swept = np.mod(swept, TWO_PI)
    r = np.hypot(px, py)
    return arc.radius * swept, np.abs(r - arc.radius), r < arc.radius


def path_coordinates(point: tuple[float, float], state: VehicleState, arc: ArcGeometry):
    """Return ``(s, lateral_offset, side)`` for one point, side in {"inner", "outer"}.

    In arc mode ``s`` is measured forward along the circle and lies in
    [0, 2 pi R); in straight mode points behind the vehicle get ``s < 0``.
    """
    s, lat, inner = _path_coords(point[0], point[1], state, arc)
    return float(s), float(lat), "inner" if bool(inner) else "outer"


def drf_height(s, speed: float, params: DrfParams):
    reach = speed * params.t_la
    s = np.asarray(s, dtype=float)
    a = params.p * (s - reach) ** 2
    out = np.where((s >= 0.0) & (s <= reach), a, 0.0)
    return float(out) if out.ndim == 0 else out


def drf_width(s, steering: float, side: str, params: DrfParams, c: float | None = None):
    if c is None:
        c = params.c
    if c is None:
        raise ValueError("c must be given when params.c is derived from vehicle width")
    k = params.k_inner if side == "inner" else params.k_outer
    return (params.m + k * abs(steering)) * np.asarray(s, dtype=float) + c


def drf_values(state: VehicleState, params: DrfParams, xs, ys) -> np.ndarray:
    """DRF of ``state`` sampled at arbitrary world points."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    reach = params.support(state)
    if reach <= 0.0 or xs.size == 0:
        return np.zeros(np.broadcast(xs, ys).shape)
    arc = predicted_arc(state, params)
    s, lat, inner = _path_coords(xs, ys, state, arc)
    c = params.half_width(state)
    growth = np.where(
        inner,
        params.m + params.k_inner * abs(state.steering),
        params.m + params.k_outer * abs(state.steering),
    )
    sigma = growth * s + c
    height = drf_height(np.maximum(s, 0.0), state.speed, params)
    # the slack keeps mirror-image cells on the same side of the cut despite rounding
    keep = (s >= -_EDGE_SLACK) & (s <= reach) & (lat <= params.cutoff_sigmas * sigma * (1.0 + _EDGE_SLACK))
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        vals = height * np.exp(-(lat * lat) / (2.0 * sigma * sigma))
    return np.where(keep, vals, 0.0)


def drf_evaluate(state: VehicleState, params: DrfParams, grid: Grid) -> ScalarField:
    xs, ys = grid.centers()
    return ScalarField(grid, drf_values(state, params, xs, ys))


# --------------------------------------------------------------------------
# Cost maps


def footprint_cells(state: VehicleState, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Indices ``(jj, ii)`` of the cells whose centers lie inside the vehicle rectangle."""
    hl, hw = state.length / 2.0, state.width / 2.0
    c, s = math.cos(state.heading), math.sin(state.heading)
    cx = [state.x + a * hl * c - b * hw * s for a in (-1, 1) for b in (-1, 1)]
    cy = [state.y + a * hl * s + b * hw * c for a in (-1, 1) for b in (-1, 1)]
    u, v = grid.to_local(np.array(cx), np.array(cy))
    h = grid.resolution
    i0 = max(0, int(math.floor(u.min() / h - 0.5)))
    i1 = min(grid.nx - 1, int(math.ceil(u.max() / h - 0.5)))
    j0 = max(0, int(math.floor(v.min() / h - 0.5)))
    j1 = min(grid.ny - 1, int(math.ceil(v.max() / h - 0.5)))
    if i0 > i1 or j0 > j1:
        empty = np.zeros(0, dtype=int)
        return empty, empty
    jj, ii = np.mgrid[j0 : j1 + 1, i0 : i1 + 1]
    jj, ii = jj.ravel(), ii.ravel()
    x, y = grid.centers_at(jj, ii)
    dx, dy = x - state.x, y - state.y
    inside = (np.abs(dx * c + dy * s) <= hl) & (np.abs(-dx * s + dy * c) <= hw)
    return jj[inside], ii[inside]


def cost_map(
    vehicles: Iterable[VehicleState],
    costs: CostTable,
    grid: Grid,
    exclude: int | None = None,
) -> ScalarField:
    """Rasterize vehicle footprints; overlapping cells keep the larger cost."""
    values = np.zeros(grid.shape)
    for veh in vehicles:
        if veh.id == exclude:
            continue
        jj, ii = footprint_cells(veh, grid)
        np.maximum.at(values, (jj, ii), costs.cost(veh.cls))
    return ScalarField(grid, values)


# --------------------------------------------------------------------------
# QPR


def _scale(grid: Grid, convention: Convention) -> float:
    return grid.cell_area if Convention(convention) is Convention.AREA_INTEGRAL else 1.0


def is_behind(ego: VehicleState, other: VehicleState) -> bool:
    lon, _ = ego.to_local(other.x, other.y)
    return lon < 0.0


def qpr_front(
    ego: VehicleState,
    neighbors: Sequence[VehicleState],
    params: DrfParams,
    costs: CostTable,
    grid: Grid,
    convention: Convention = Convention.AREA_INTEGRAL,
) -> tuple[float, dict[int, float]]:
    """Ego DRF weighted by the neighbours' cost map.

    Shares come from rasterizing each neighbour alone.  When footprints share
    cells the combined value uses the per-cell maximum cost and the shares are
    rescaled to sum to it.
    """
    scale = _scale(grid, convention)
    shares: dict[int, float] = {}
    cells = []
    for nb in neighbors:
        jj, ii = footprint_cells(nb, grid)
        cells.append((nb, jj, ii))
        if jj.size == 0:
            shares[nb.id] = 0.0
            continue
        x, y = grid.centers_at(jj, ii)
        field_sum = math.fsum(drf_values(ego, params, x, y))
        shares[nb.id] = costs.cost(nb.cls) * field_sum * scale

    flat = [jj * grid.nx + ii for _, jj, ii in cells]
    n_cells = sum(f.size for f in flat)
    if n_cells == 0:
        return 0.0, shares
    union = np.unique(np.concatenate(flat))
    if union.size == n_cells:
        return math.fsum(shares.values()), shares

    best = np.zeros(union.size)
    for (nb, _, _), f in zip(cells, flat):
        pos = np.searchsorted(union, f)
        np.maximum.at(best, pos, costs.cost(nb.cls))
    x, y = grid.centers_at(union // grid.nx, union % grid.nx)
    front = math.fsum(best * drf_values(ego, params, x, y)) * scale
    raw = math.fsum(shares.values())
    if raw > 0.0:
        shares = {k: v * (front / raw) for k, v in shares.items()}
    return front, shares


def qpr_rear(
    ego: VehicleState,
    neighbors: Sequence[VehicleState],
    params: DrfParams,
    costs: CostTable,
    grid: Grid,
    convention: Convention = Convention.AREA_INTEGRAL,
) -> tuple[float, dict[int, float]]:
    """Trailing neighbours' DRFs weighted by the ego's cost over its footprint."""
    scale = _scale(grid, convention)
    jj, ii = footprint_cells(ego, grid)
    x, y = grid.centers_at(jj, ii)
    ego_cost = costs.cost(ego.cls)
    shares: dict[int, float] = {}
    for nb in neighbors:
        if not is_behind(ego, nb):
            continue
        shares[nb.id] = ego_cost * math.fsum(drf_values(nb, params, x, y)) * scale
    return math.fsum(shares.values()), shares


def qpr_total(
    ego: VehicleState,
    neighbors: Sequence[VehicleState],
    params: DrfParams,
    costs: CostTable,
    grid: Grid,
    convention: Convention = Convention.AREA_INTEGRAL,
) -> QprReport:
    convention = Convention(convention)
    if any(nb.id == ego.id for nb in neighbors):
        raise ValueError("ego must not appear among its neighbors")
    front, fshares = qpr_front(ego, neighbors, params, costs, grid, convention)
    rear, rshares = qpr_rear(ego, neighbors, params, costs, grid, convention)
    per_vehicle = {nb.id: (fshares.get(nb.id, 0.0), rshares.get(nb.id, 0.0)) for nb in neighbors}
    return QprReport(front + rear, front, rear, per_vehicle, grid, convention)




# --------------------------------------------------------------------------
# Export


def write_field_csv(field_: ScalarField, path) -> None:
    """Cell centers and values, row-major, header ``x,y,value``."""
    xs, ys = field_.grid.centers()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("x,y,value\n")
        for x, y, v in zip(xs.reshape(-1).tolist(), ys.reshape(-1).tolist(), field_.flat().tolist()):
            fh.write(f"{x!r},{y!r},{v!r}\n")


def write_field_pgm(field_: ScalarField, path) -> dict:
    """Binary 16-bit graymap, min-max normalized; bounds go to ``<path>.json``.

    Row 0 of the image is the grid's last row so that +y points up.
    """
    vals = field_.values
    lo, hi = float(vals.min()), float(vals.max())
    span = hi - lo
    norm = (vals - lo) / span if span > 0 else np.zeros_like(vals)
    pixels = np.rint(norm * 65535).astype(">u2")[::-1]
    ny, nx = vals.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n65535\n".encode("ascii"))
        fh.write(pixels.tobytes())
    sidecar = {"min": lo, "max": hi, "maxval": 65535, "grid": field_.grid.to_dict()}
    with open(f"{path}.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return sidecar


def read_field_pgm(path) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`write_field_pgm` up to 16-bit quantization."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    nx, ny, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pixels = np.frombuffer(parts[4][: nx * ny * 2], dtype=">u2").reshape(ny, nx)[::-1]
    with open(f"{path}.json", encoding="utf-8") as fh:
        sidecar = json.load(fh)
    values = sidecar["min"] + pixels / maxval * (sidecar["max"] - sidecar["min"])
    return values, sidecar
