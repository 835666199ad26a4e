"""Intelligent Driver Model acceleration law."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

from .errors import NonPositiveGap


@dataclass(frozen=True)
class IdmParams:
    v0: float = 30.0  # desired speed, m/s
    T: float = 1.5  # time headway, s
    a_max: float = 1.5
    b: float = 2.0  # comfortable deceleration
    s0: float = 2.0  # minimum gap, m
    exponent: float = 4.0
    b_emergency: float = 8.0  # lower clamp on the returned acceleration

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"IDM parameter {name} must be positive and finite")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "IdmParams":
        return cls(**{k: float(v) for k, v in d.items()})


def desired_gap(v: float, dv: float, params: IdmParams) -> float:
    return params.s0 + v * params.T + v * dv / (2.0 * math.sqrt(params.a_max * params.b))


def idm_accel(v: float, s: float, dv: float, params: IdmParams) -> float:
    """Acceleration for speed ``v``, bumper gap ``s`` and closing speed ``dv`` (own minus leader).

    ``s = math.inf`` gives the free-road law.  The result is clamped to
    ``[-b_emergency, a_max]``.
    """
    if not s > 0:
        raise NonPositiveGap(f"gap must be > 0, got {s}")
    free = 1.0 - (v / params.v0) ** params.exponent
    interaction = 0.0 if math.isinf(s) else (desired_gap(v, dv, params) / s) ** 2
    a = params.a_max * (free - interaction)
    return min(params.a_max, max(-params.b_emergency, a))
