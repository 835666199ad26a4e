"""Naive reference implementations written independently of the package.

Everything here works on plain floats, one point at a time, so it can
check the vectorized code without sharing any of its helpers.
"""

from __future__ import annotations

import math
import random
from fractions import Fraction

COSTS = {"Sedan": 1.0, "Truck": 2.0, "Bus": 2.0, "Motorcycle": 0.8, "VRU": 3.0}


def drf_point(v, px, py, p, t_la, m, k_in, k_out, delta_min=1e-3, cutoff=4.0, edge_tol=1e-9):
    """Field value of vehicle ``v`` (a dict) at one point.

    The support is closed; ``edge_tol`` keeps points that sit on its edge in
    exact arithmetic from dropping out through rounding.
    """
    reach = v["speed"] * t_la
    if reach <= 0:
        return 0.0
    c = v["width"] / 4.0
    d = v["steering"]
    h = v["heading"]
    if abs(d) < delta_min:
        dx, dy = px - v["x"], py - v["y"]
        s = dx * math.cos(h) + dy * math.sin(h)
        lat = -dx * math.sin(h) + dy * math.cos(h)
        inner = lat > 0
        lat = abs(lat)
    else:
        R = v["wheelbase"] / abs(math.tan(d))
        side = 1.0 if d > 0 else -1.0
        cx = v["x"] + side * R * math.cos(h + math.pi / 2)
        cy = v["y"] + side * R * math.sin(h + math.pi / 2)
        a_vehicle = math.atan2(v["y"] - cy, v["x"] - cx)
        a_point = math.atan2(py - cy, px - cx)
        swept = (a_point - a_vehicle) * side
        swept %= 2 * math.pi
        s = R * swept
        r = math.hypot(px - cx, py - cy)
        inner = r < R
        lat = abs(r - R)
    if s < -edge_tol or s > reach:
        return 0.0
    s = max(s, 0.0)
    sigma = (m + (k_in if inner else k_out) * abs(d)) * s + c
    if lat > cutoff * sigma * (1 + edge_tol):
        return 0.0
    return p * (s - reach) ** 2 * math.exp(-lat * lat / (2 * sigma * sigma))


def inside_rect(v, px, py):
    dx, dy = px - v["x"], py - v["y"]
    c, s = math.cos(v["heading"]), math.sin(v["heading"])
    return abs(dx * c + dy * s) <= v["length"] / 2 and abs(-dx * s + dy * c) <= v["width"] / 2


def grid_cells(ego, ahead, behind, half_width, h):
    """Cell centers of an ego-aligned grid, in row-major order."""
    nx = int(round((ahead + behind) / h))
    ny = int(round(2 * half_width / h))
    c, s = math.cos(ego["heading"]), math.sin(ego["heading"])
    ox = ego["x"] - behind * c + half_width * s
    oy = ego["y"] - behind * s - half_width * c
    for j in range(ny):
        for i in range(nx):
            u, w = (i + 0.5) * h, (j + 0.5) * h
            yield ox + u * c - w * s, oy + u * s + w * c


def naive_qpr(ego, neighbors, grid, drf, area=True):
    """(front, rear) by an explicit loop over every cell."""
    ahead, behind, half_width, h = grid
    scale = h * h if area else 1.0
    front = rear = 0.0
    behind_nbs = []
    for nb in neighbors:
        c, s = math.cos(ego["heading"]), math.sin(ego["heading"])
        if (nb["x"] - ego["x"]) * c + (nb["y"] - ego["y"]) * s < 0:
            behind_nbs.append(nb)
    ego_cost = COSTS.get(ego["cls"], 1.0)
    for px, py in grid_cells(ego, ahead, behind, half_width, h):
        cost = 0.0
        for nb in neighbors:
            if inside_rect(nb, px, py):
                cost = max(cost, COSTS.get(nb["cls"], 1.0))
        if cost > 0:
            front += cost * drf_point(ego, px, py, **drf)
        if inside_rect(ego, px, py):
            for nb in behind_nbs:
                rear += ego_cost * drf_point(nb, px, py, **drf)
    return front * scale, rear * scale


def random_vehicle(rng: random.Random, vid: int, near=None):
    cls = rng.choice(["Sedan", "Sedan", "Truck", "Motorcycle", "VRU", "Bus"])
    dims = {"Truck": (2.5, 12.0), "Bus": (2.5, 12.0), "Motorcycle": (0.8, 2.2), "VRU": (0.6, 0.6)}
    width, length = dims.get(cls, (1.8, 4.5))
    if near is None:
        x, y = rng.uniform(-50, 50), rng.uniform(-50, 50)
        heading = rng.uniform(-math.pi, math.pi)
    else:
        c, s = math.cos(near["heading"]), math.sin(near["heading"])
        lon, lat = rng.uniform(-18, 35), rng.uniform(-8, 8)
        x, y = near["x"] + lon * c - lat * s, near["y"] + lon * s + lat * c
        heading = near["heading"] + rng.uniform(-0.6, 0.6)
    steering = 0.0 if rng.random() < 0.3 else rng.uniform(-0.25, 0.25)
    return {
        "id": vid, "cls": cls, "x": x, "y": y, "heading": math.atan2(math.sin(heading), math.cos(heading)),
        "speed": rng.uniform(0, 12), "steering": steering, "width": width, "length": length,
        "wheelbase": 0.6 * length,
    }


def nearest_rank(values, percent):
    ordered = sorted(values)
    rank = math.ceil(Fraction(percent, 100) * len(ordered))
    return ordered[max(rank, 1) - 1]


def idm(v, s, dv, v0, T, a, b, s0, delta, b_max):
    star = s0 + v * T + (v * dv) / (2 * math.sqrt(a * b))
    acc = a * (1 - (v / v0) ** delta - (star / s) ** 2)
    return max(-b_max, min(a, acc))


def cosine_top(vectors, ids, q, n):
    """Full scan; ties by ascending id."""
    qn = math.sqrt(sum(x * x for x in q))
    scored = []
    for vec, rid in zip(vectors, ids):
        vn = math.sqrt(sum(x * x for x in vec))
        scored.append((-(sum(a * b for a, b in zip(vec, q)) / (vn * qn)), rid))
    scored.sort()
    return [(rid, -neg) for neg, rid in scored[:n]]


def label(track, horizon, frame_rate, turn=0.2, accel=0.3):
    """Next-action label for a list of per-frame dicts starting at the labeled frame."""
    first, last = track[0], track[horizon]
    h0 = first["heading"]
    if first["lane"] is not None:
        for row in track[: horizon + 1]:
            if row["lane"] is not None and row["lane"] != first["lane"]:
                lateral = -(row["x"] - first["x"]) * math.sin(h0) + (row["y"] - first["y"]) * math.cos(h0)
                return "lane_change_left" if lateral > 0 else "lane_change_right"
    dh = math.atan2(math.sin(last["heading"] - h0), math.cos(last["heading"] - h0))
    if dh > turn:
        return "turn_left"
    if dh < -turn:
        return "turn_right"
    rate = (math.hypot(last["vx"], last["vy"]) - math.hypot(first["vx"], first["vy"])) / (horizon / frame_rate)
    if rate > accel:
        return "accelerate"
    if rate < -accel:
        return "decelerate"
    return "idle"
