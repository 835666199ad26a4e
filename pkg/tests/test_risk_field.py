import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drfagent.risk_field import (
    Convention,
    CostTable,
    DrfParams,
    Grid,
    GridSpec,
    PathMode,
    ScalarField,
    VehicleClass,
    VehicleState,
    cost_map,
    drf_evaluate,
    drf_height,
    drf_values,
    drf_width,
    footprint_cells,
    is_behind,
    path_coordinates,
    predicted_arc,
    qpr_front,
    qpr_rear,
    qpr_total,
    read_field_pgm,
    write_field_csv,
    write_field_pgm,
)

import oracles

SMALL = GridSpec(ahead=45, behind=25, half_width=12, resolution=0.5)
ORACLE_DRF = dict(p=0.0064, t_la=5.0, m=0.05, k_in=0.2, k_out=1.14)


def car(vid=1, x=0.0, y=0.0, heading=0.0, speed=10.0, steering=0.0, cls="Sedan", width=1.8, length=4.5,
        wheelbase=2.7):
    return VehicleState(vid, cls, x, y, heading, speed, steering, width, length, wheelbase)


def from_dict(d):
    return car(d["id"], d["x"], d["y"], d["heading"], d["speed"], d["steering"], d["cls"], d["width"],
               d["length"], d["wheelbase"])


vehicles = st.builds(
    car,
    vid=st.integers(1, 99),
    x=st.floats(-30, 30),
    y=st.floats(-30, 30),
    heading=st.floats(-math.pi, math.pi),
    speed=st.floats(0, 30),
    steering=st.one_of(st.just(0.0), st.floats(-0.4, 0.4)),
    cls=st.sampled_from([c.value for c in VehicleClass]),
)


# -- geometry -------------------------------------------------------------


def test_arc_radius_at_45_degrees():
    arc = predicted_arc(car(steering=math.pi / 4), DrfParams())
    assert arc.mode is PathMode.ARC
    assert arc.radius == pytest.approx(2.7, rel=1e-12)


def test_zero_steering_is_straight():
    assert predicted_arc(car(steering=0.0), DrfParams()).mode is PathMode.STRAIGHT


def test_arc_radius_small_steering():
    assert predicted_arc(car(steering=0.1), DrfParams()).radius == pytest.approx(26.9099, abs=1e-4)


def test_arc_center_on_turn_side():
    left = predicted_arc(car(steering=0.2), DrfParams())
    right = predicted_arc(car(steering=-0.2), DrfParams())
    assert left.center_y > 0 and right.center_y < 0
    assert left.turn_sign == 1 and right.turn_sign == -1


def test_path_coordinates_at_vehicle_origin():
    state = car(steering=0.3)
    s, lat, _ = path_coordinates((0.0, 0.0), state, predicted_arc(state, DrfParams()))
    assert s == pytest.approx(0.0, abs=1e-12) and lat == pytest.approx(0.0, abs=1e-12)


def test_path_coordinates_straight_projection():
    state = car()
    s, lat, side = path_coordinates((10.0, 2.0), state, predicted_arc(state, DrfParams()))
    assert (s, lat, side) == (10.0, 2.0, "inner")


def test_path_coordinates_quarter_circle():
    # wheelbase chosen so that a 45 degree steer gives radius 10
    state = car(steering=math.pi / 4, wheelbase=10.0)
    arc = predicted_arc(state, DrfParams())
    s, lat, _ = path_coordinates((10.0, 10.0), state, arc)
    assert s == pytest.approx(10 * math.pi / 2, rel=1e-12)
    assert lat == pytest.approx(0.0, abs=1e-12)


def test_height_examples():
    params = DrfParams(p=0.0064, t_la=3.5)
    assert drf_height(35.0, 10.0, params) == 0.0
    assert drf_height(0.0, 10.0, params) == pytest.approx(7.84, rel=1e-12)
    assert drf_height(40.0, 10.0, params) == 0.0


def test_width_examples():
    params = DrfParams(m=0.05, k_inner=0.2)
    assert drf_width(0.0, 0.3, "inner", params, c=1.8 / 4) == pytest.approx(0.45)
    assert drf_width(10.0, 0.1, "inner", params, c=0.5) == pytest.approx(1.2, rel=1e-12)
    sym = DrfParams(k_inner=0.5, k_outer=0.5, c=0.4)
    s = np.linspace(0, 50, 11)
    assert np.array_equal(drf_width(s, 0.2, "inner", sym), drf_width(s, 0.2, "outer", sym))


# -- fields ---------------------------------------------------------------


def test_stationary_vehicle_has_empty_field():
    grid = SMALL.build(car(speed=0.0))
    assert not drf_evaluate(car(speed=0.0), DrfParams(), grid).values.any()


def test_on_path_value_equals_height():
    state = car(speed=10.0)
    params = DrfParams()
    for s in (0.5, 10.0, 30.0):
        assert drf_values(state, params, s, 0.0) == pytest.approx(drf_height(s, 10.0, params), rel=1e-14)


def test_field_matches_pointwise_oracle_on_arc():
    state = car(x=3.0, y=-2.0, heading=0.7, speed=9.0, steering=-0.15)
    grid = SMALL.build(state)
    field = drf_evaluate(state, DrfParams(), grid)
    xs, ys = grid.centers()
    d = {"x": 3.0, "y": -2.0, "heading": 0.7, "speed": 9.0, "steering": -0.15, "width": 1.8, "wheelbase": 2.7}
    rng = np.random.default_rng(3)
    for j, i in zip(rng.integers(0, grid.ny, 300), rng.integers(0, grid.nx, 300)):
        want = oracles.drf_point(d, xs[j, i], ys[j, i], **ORACLE_DRF)
        assert field.values[j, i] == pytest.approx(want, rel=1e-12, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(0.5, 30), st.floats(-50, 50), st.floats(-50, 50))
def test_straight_mode_mirror_symmetry(heading, speed, x, y):
    state = car(x=x, y=y, heading=heading, speed=speed)
    params = DrfParams(k_inner=0.7, k_outer=0.7)
    # heading-aligned grid: row j and row ny-1-j mirror each other across the heading line
    values = drf_evaluate(state, params, SMALL.build(state)).values
    assert np.abs(values - values[::-1]).max() <= 1e-12 * max(1.0, values.max())


def test_arc_approaches_straight_field(config):
    params = config.drf
    base = car(speed=20.0)
    grid = config.grid.build(base)
    straight = drf_evaluate(base, params, grid).values
    bent = drf_evaluate(car(speed=20.0, steering=2 * params.delta_straight), params, grid).values
    assert np.abs(bent - straight).max() <= config.continuity_rel_tol * straight.max()


@settings(max_examples=30, deadline=None)
@given(vehicles)
def test_fields_are_finite_and_non_negative(state):
    field = drf_evaluate(state, DrfParams(), GridSpec(60, 20, 15, 1.0).build(state))
    assert np.all(np.isfinite(field.values)) and np.all(field.values >= 0)


def test_scalar_field_rejects_negative_values():
    grid = Grid(0, 0, 2, 2, 1.0)
    with pytest.raises(ValueError):
        ScalarField(grid, np.array([[0.0, -1.0], [0.0, 0.0]]))


# -- cost maps ------------------------------------------------------------


def test_cost_map_empty():
    assert not cost_map([], CostTable(), Grid(-10, -10, 40, 40, 0.5)).values.any()


def test_axis_aligned_sedan_covers_32_cells():
    grid = Grid(-10.0, -10.0, 40, 40, 0.5)
    sedan = car(x=0.0, y=0.0, length=4.0, width=2.0)
    jj, ii = footprint_cells(sedan, grid)
    assert len(jj) == 32
    assert np.count_nonzero(cost_map([sedan], CostTable(), grid).values == 1.0) == 32


def test_truck_cells_carry_larger_cost():
    grid = Grid(-20.0, -10.0, 80, 40, 0.5)
    truck = car(1, x=-5.0, cls="Truck", length=12.0, width=2.5)
    sedan = car(2, x=2.0, y=0.0)
    values = cost_map([sedan, truck], CostTable(), grid).values
    assert values.max() == 2.0
    overlap = np.intersect1d(*(np.ravel_multi_index(footprint_cells(v, grid), grid.shape) for v in (truck, sedan)))
    assert overlap.size and np.all(values.reshape(-1)[overlap] == 2.0)


def test_cost_map_excludes_id():
    grid = Grid(-10.0, -10.0, 40, 40, 0.5)
    assert not cost_map([car(5)], CostTable(), grid, exclude=5).values.any()


# -- QPR ------------------------------------------------------------------


def test_no_neighbors_gives_zero():
    ego = car()
    rep = qpr_total(ego, [], DrfParams(), CostTable(), SMALL.build(ego))
    assert (rep.total, rep.front, rep.rear) == (0.0, 0.0, 0.0)


def test_front_only_scene():
    ego = car(speed=15.0)
    lead = car(2, x=20.0, speed=15.0)
    rep = qpr_total(ego, [lead], DrfParams(), CostTable(), SMALL.build(ego))
    assert rep.rear == 0.0 and rep.total == rep.front > 0


def test_stationary_rear_vehicle_contributes_nothing():
    ego = car(speed=15.0)
    value, shares = qpr_rear(ego, [car(2, x=-8.0, speed=0.0)], DrfParams(), CostTable(), SMALL.build(ego))
    assert value == 0.0 and shares == {2: 0.0}


def test_rear_closing_vehicle_matches_oracle():
    ego = car(speed=10.0)
    rear = car(2, x=-12.0, speed=20.0)
    value, _ = qpr_rear(ego, [rear], DrfParams(), CostTable(), SMALL.build(ego))
    d = lambda v: {**v.to_dict(), "cls": v.cls.value}  # noqa: E731
    _, want = oracles.naive_qpr(d(ego), [d(rear)], (45, 25, 12, 0.5), ORACLE_DRF)
    assert value > 0 and value == pytest.approx(want, rel=1e-9)


def test_single_neighbor_front_matches_oracle():
    ego = car(speed=12.0, steering=0.05)
    lead = car(2, x=18.0, y=1.0, speed=8.0, cls="Truck", length=12.0, width=2.5)
    value, shares = qpr_front(ego, [lead], DrfParams(), CostTable(), SMALL.build(ego))
    d = lambda v: {**v.to_dict(), "cls": v.cls.value}  # noqa: E731
    want, _ = oracles.naive_qpr(d(ego), [d(lead)], (45, 25, 12, 0.5), ORACLE_DRF)
    assert value == pytest.approx(want, rel=1e-9) and shares[2] == value


def test_three_vehicle_scene_matches_oracle():
    rng = random.Random(11)
    ego = oracles.random_vehicle(rng, 0)
    ego["speed"] = 11.0
    nbs = [oracles.random_vehicle(rng, k, near=ego) for k in (1, 2, 3)]
    rep = qpr_total(from_dict(ego), [from_dict(n) for n in nbs], DrfParams(), CostTable(),
                    SMALL.build(from_dict(ego)))
    front, rear = oracles.naive_qpr(ego, nbs, (45, 25, 12, 0.5), ORACLE_DRF)
    assert rep.front == pytest.approx(front, rel=1e-9, abs=1e-300)
    assert rep.rear == pytest.approx(rear, rel=1e-9, abs=1e-300)


def test_grid_sum_convention_differs_by_cell_area():
    ego = car(speed=15.0)
    nbs = [car(2, x=15.0, y=1.0)]
    grid = SMALL.build(ego)
    area = qpr_total(ego, nbs, DrfParams(), CostTable(), grid, Convention.AREA_INTEGRAL)
    raw = qpr_total(ego, nbs, DrfParams(), CostTable(), grid, Convention.GRID_SUM)
    assert area.total == pytest.approx(raw.total * 0.25, rel=1e-12)


def test_ego_in_neighbors_rejected():
    ego = car()
    with pytest.raises(ValueError):
        qpr_total(ego, [ego], DrfParams(), CostTable(), SMALL.build(ego))


def test_behind_classification():
    ego = car(heading=math.pi / 2)
    assert is_behind(ego, car(2, x=0.0, y=-5.0))
    assert not is_behind(ego, car(2, x=0.0, y=5.0))


def _scene(rng, n):
    ego = oracles.random_vehicle(rng, 0)
    ego["speed"] = rng.uniform(5, 15)
    return from_dict(ego), [from_dict(oracles.random_vehicle(rng, k + 1, near=ego)) for k in range(n)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 4))
def test_report_consistency(seed, n):
    ego, nbs = _scene(random.Random(seed), n)
    rep = qpr_total(ego, nbs, DrfParams(), CostTable(), SMALL.build(ego))
    assert rep.total == rep.front + rep.rear
    assert min(rep.total, rep.front, rep.rear) >= 0
    f = sum(v[0] for v in rep.per_vehicle.values())
    r = sum(v[1] for v in rep.per_vehicle.values())
    assert f == pytest.approx(rep.front, rel=1e-9, abs=1e-12)
    assert r == pytest.approx(rep.rear, rel=1e-9, abs=1e-12)
    assert set(rep.per_vehicle) == {nb.id for nb in nbs}


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.25, 0.5, 2.0, 8.0]))
def test_power_of_two_cost_scaling_is_exact(seed, lam):
    ego, nbs = _scene(random.Random(seed), 3)
    grid = SMALL.build(ego)
    a = qpr_total(ego, nbs, DrfParams(), CostTable(), grid)
    b = qpr_total(ego, nbs, DrfParams(), CostTable().scaled(lam), grid)
    assert (b.front, b.rear, b.total) == (lam * a.front, lam * a.rear, lam * a.total)
    for k in a.per_vehicle:
        assert b.per_vehicle[k] == (lam * a.per_vehicle[k][0], lam * a.per_vehicle[k][1])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 10))
def test_general_cost_scaling(seed, lam):
    ego, nbs = _scene(random.Random(seed), 3)
    grid = SMALL.build(ego)
    a = qpr_total(ego, nbs, DrfParams(), CostTable(), grid)
    b = qpr_total(ego, nbs, DrfParams(), CostTable().scaled(lam), grid)
    assert b.total == pytest.approx(lam * a.total, rel=1e-12, abs=1e-300)


def test_rigid_motion_invariance():
    rng = random.Random(5)
    ego, nbs = _scene(rng, 3)
    grid = SMALL.build(ego)
    base = qpr_total(ego, nbs, DrfParams(), CostTable(), grid)
    theta, tx, ty = 0.9, 120.0, -45.0
    c, s = math.cos(theta), math.sin(theta)

    def move(v):
        d = v.to_dict()
        d["x"], d["y"] = c * v.x - s * v.y + tx, s * v.x + c * v.y + ty
        d["heading"] = v.heading + theta
        return VehicleState.from_dict(d)

    moved_ego = move(ego)
    moved = qpr_total(moved_ego, [move(n) for n in nbs], DrfParams(), CostTable(), SMALL.build(moved_ego))
    for a, b in ((base.front, moved.front), (base.rear, moved.rear), (base.total, moved.total)):
        assert b == pytest.approx(a, rel=1e-6, abs=1e-12)


def test_resolution_stability():
    # footprint edges sit on cell boundaries at both resolutions, so only the
    # field quadrature changes between the two grids
    ego = car(speed=15.0, length=5.0, width=2.0)
    nbs = [car(2, x=22.0, y=1.0, speed=10.0, length=5.0, width=2.0),
           car(3, x=-15.0, y=0.5, speed=20.0, length=5.0, width=2.0)]
    coarse = qpr_total(ego, nbs, DrfParams(), CostTable(), GridSpec(60, 30, 15, 0.5).build(ego))
    fine = qpr_total(ego, nbs, DrfParams(), CostTable(), GridSpec(60, 30, 15, 0.25).build(ego))
    assert abs(coarse.total - fine.total) < 0.02 * fine.total


def test_overlapping_footprints_rescale_shares():
    ego = car(speed=15.0)
    a = car(2, x=15.0, y=0.0)
    b = car(3, x=16.0, y=0.3, cls="Truck")
    front, shares = qpr_front(ego, [a, b], DrfParams(), CostTable(), SMALL.build(ego))
    d = lambda v: {**v.to_dict(), "cls": v.cls.value}  # noqa: E731
    want, _ = oracles.naive_qpr(d(ego), [d(a), d(b)], (45, 25, 12, 0.5), ORACLE_DRF)
    assert front == pytest.approx(want, rel=1e-9)
    assert sum(shares.values()) == pytest.approx(front, rel=1e-12)


# -- export ---------------------------------------------------------------


def test_csv_export(tmp_path):
    grid = Grid(0.0, 0.0, 3, 2, 1.0)
    field = ScalarField(grid, np.arange(6.0).reshape(2, 3))
    write_field_csv(field, tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,y,value"
    assert [tuple(map(float, ln.split(","))) for ln in lines[1:3]] == [(0.5, 0.5, 0.0), (1.5, 0.5, 1.0)]
    assert len(lines) == 7


def test_pgm_round_trip(tmp_path):
    grid = Grid(0.0, 0.0, 4, 3, 1.0)
    vals = np.array([[0.0, 1.0, 2.0, 3.0], [4.0, 5.0, 6.0, 7.0], [8.0, 9.0, 10.0, 11.0]])
    side = write_field_pgm(ScalarField(grid, vals), tmp_path / "f.pgm")
    assert side["min"] == 0.0 and side["max"] == 11.0
    assert json.loads((tmp_path / "f.pgm.json").read_text())["maxval"] == 65535
    back, meta = read_field_pgm(tmp_path / "f.pgm")
    assert np.allclose(back, vals, atol=11.0 / 65535)
    assert (tmp_path / "f.pgm").read_bytes().startswith(b"P5")
