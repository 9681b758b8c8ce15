import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safelane.core import (
    Action,
    Geometry,
    KinematicState,
    Limits,
    WorldState,
    collision,
    step_kinematics,
)


def euler_substep(s, a, dt, n_sub):
    """Independent oracle: brute-force Euler integration with velocity clamp."""
    px, py, vx, vy = s.px, s.py, s.vx, s.vy
    h = dt / n_sub
    for _ in range(n_sub):
        px += vx * h
        py += vy * h
        vx = max(0.0, vx + a.ax * h)
        vy += a.ay * h
    return px, py, vx, vy


def test_step_constant_velocity():
    s = step_kinematics(KinematicState(0, 0, 10, 0), Action(0, 0), 0.1)
    assert s == KinematicState(1.0, 0.0, 10.0, 0.0)


def test_step_clamped_stop_uses_exact_stop_time():
    s = step_kinematics(KinematicState(0, 0, 0.3, 0), Action(-6, 0), 0.1)
    assert s.vx == 0.0
    assert s.px == pytest.approx(0.0075, abs=1e-12)  # v^2 / (2 a)


def test_step_general_against_substepped_oracle():
    s0 = KinematicState(0, 1, 20, 0.5)
    a = Action(2, -2.5)
    s = step_kinematics(s0, a, 0.1)
    assert (s.px, s.py, s.vx, s.vy) == pytest.approx((2.01, 1.0375, 20.2, 0.25), abs=1e-12)
    oracle = euler_substep(s0, a, 0.1, 10_000)
    assert (s.px, s.py, s.vx, s.vy) == pytest.approx(oracle, abs=1e-4)


def test_step_rejects_bad_inputs():
    with pytest.raises(ValueError):
        step_kinematics(KinematicState(0, 0, 1, 0), Action(0, 0), 0.0)
    with pytest.raises(ValueError):
        KinematicState(float("nan"), 0, 1, 0)
    with pytest.raises(ValueError):
        KinematicState(0, 0, -1.0, 0)
    with pytest.raises(ValueError):
        Action(float("inf"), 0)


finite = st.floats(-50, 50, allow_nan=False)
speed = st.floats(0, 45, allow_nan=False)
accel_x = st.floats(-6, 4, allow_nan=False)
accel_y = st.floats(-2.5, 2.5, allow_nan=False)


@settings(deadline=None, max_examples=150)
@given(px=finite, py=finite, vx=speed, vy=finite, ax=accel_x, ay=accel_y,
       n=st.integers(2, 12))
def test_step_group_property_without_clamp(px, py, vx, vy, ax, ay, n):
    """n steps of dt equal one step of n*dt when the velocity clamp stays inactive."""
    dt = 0.05
    if vx + ax * n * dt < 0.0:
        ax = 0.0  # keep the clamp inactive
    s = KinematicState(px, py, vx, vy)
    a = Action(ax, ay)
    many = s
    for _ in range(n):
        many = step_kinematics(many, a, dt)
    once = step_kinematics(s, a, n * dt)
    assert many.px == pytest.approx(once.px, abs=1e-9)
    assert many.py == pytest.approx(once.py, abs=1e-9)
    assert many.vx == pytest.approx(once.vx, abs=1e-9)
    assert many.vy == pytest.approx(once.vy, abs=1e-9)


@settings(deadline=None, max_examples=150)
@given(vx=speed, ax=st.floats(-10, 4, allow_nan=False), dt=st.floats(0.001, 1.0))
def test_step_velocity_never_negative(vx, ax, dt):
    s = step_kinematics(KinematicState(0, 0, vx, 0), Action(ax, 0), dt)
    assert s.vx >= 0.0


def test_collision_examples():
    g = Geometry()
    a = KinematicState(0, 0, 10, 0)
    assert collision(a, KinematicState(4.9, 0, 10, 0), g) is True
    assert collision(a, KinematicState(0, 2.0, 10, 0), g) is False  # exact touch
    assert collision(a, KinematicState(5.0, 0, 10, 0), g) is False


@settings(deadline=None, max_examples=100)
@given(dx=st.floats(-10, 10), dy=st.floats(-4, 4))
def test_collision_symmetric(dx, dy):
    g = Geometry()
    a = KinematicState(0, 0, 1, 0)
    b = KinematicState(dx, dy, 1, 0)
    assert collision(a, b, g) == collision(b, a, g)


def test_geometry_and_limits_validation():
    with pytest.raises(ValueError):
        Geometry(w_l=2.0, w_v=2.5)
    with pytest.raises(ValueError):
        Limits(dt=0.0)
    g = Geometry()
    assert g.y_safe == pytest.approx(0.75)
    assert g.y_crossed == pytest.approx(2.75)


def test_world_state_ordering():
    e = KinematicState(0, 0, 30, 0)
    with pytest.raises(ValueError):
        WorldState(e, KinematicState(-5, 3.5, 30, 0), KinematicState(5, 3.5, 30, 0))
