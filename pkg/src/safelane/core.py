"""Shared domain types, discrete point-mass kinematics, and collision tests.

All positions are vehicle *center* coordinates: ``px`` longitudinal (m),
``py`` lateral (m), with ``py = 0`` the center of the original lane and
``py = w_l`` the center of the target lane. Every type here is an immutable
value and every operation is a pure function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ._accel import njit

__all__ = [
    "KinematicState",
    "Action",
    "Geometry",
    "Limits",
    "WorldState",
    "step_kinematics",
    "collision",
]


@njit(cache=True)
def step_state(px, py, vx, vy, ax, ay, dt):
    """Advance one point-mass state by dt under constant acceleration.

    Longitudinal velocity is clamped at zero; when the vehicle would stop
    mid-step the position uses the exact stopping time so braking distances
    are never optimistic. The lateral axis is unclamped.
    """
    nvx = vx + ax * dt
    if nvx < 0.0:
        t_stop = -vx / ax
        npx = px + vx * t_stop + 0.5 * ax * t_stop * t_stop
        nvx = 0.0
    else:
        npx = px + vx * dt + 0.5 * ax * dt * dt
    npy = py + vy * dt + 0.5 * ay * dt * dt
    nvy = vy + ay * dt
    return npx, npy, nvx, nvy


@njit(cache=True)
def rects_collide(dpx, dpy, l_v, w_v):
    """Axis-aligned overlap of two identical vehicle rectangles (centers dpx, dpy apart)."""
    return abs(dpx) < l_v and abs(dpy) < w_v


@dataclass(frozen=True)
class KinematicState:
    """Planar state of one vehicle: positions in m, velocities in m/s."""

    px: float
    py: float
    vx: float
    vy: float

    def __post_init__(self):
        for name in ("px", "py", "vx", "vy"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"non-finite {name}: {v!r}")
        if self.vx < 0.0:
            raise ValueError(f"vehicles never reverse: vx={self.vx}")


@dataclass(frozen=True)
class Action:
    """Commanded longitudinal/lateral acceleration (m/s^2) for one control step."""

    ax: float
    ay: float

    def __post_init__(self):
        if not (math.isfinite(self.ax) and math.isfinite(self.ay)):
            raise ValueError(f"non-finite action ({self.ax}, {self.ay})")


@dataclass(frozen=True)
class Geometry:
    """Lane width, vehicle width, and vehicle length (m)."""

    w_l: float = 3.5
    w_v: float = 2.0
    l_v: float = 5.0

    def __post_init__(self):
        if not (0.0 < self.w_v < self.w_l):
            raise ValueError(f"need 0 < w_v < w_l, got w_v={self.w_v}, w_l={self.w_l}")
        if self.l_v <= 0.0:
            raise ValueError(f"l_v must be positive, got {self.l_v}")

    @property
    def y_safe(self) -> float:
        """Lateral position at/below which the ego is completely in the original lane."""
        return 0.5 * (self.w_l - self.w_v)

    @property
    def y_crossed(self) -> float:
        """Lateral position at/above which the ego is completely in the target lane."""
        return 0.5 * (self.w_l + self.w_v)


@dataclass(frozen=True)
class Limits:
    """Acceleration bounds, minimum safe gap, and control step, shared by all vehicles.

    p_m is a center-to-center gap, so it absorbs the vehicle length
    (l_v plus a 1 m margin with the defaults).
    """

    a_xa: float = 4.0
    a_xd: float = 6.0
    a_ym: float = 2.5
    p_m: float = 6.0
    dt: float = 0.1

    def __post_init__(self):
        for name in ("a_xa", "a_xd", "a_ym", "p_m", "dt"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be strictly positive, got {v!r}")

    def clamp_action(self, ax: float, ay: float) -> Action:
        ax = min(max(ax, -self.a_xd), self.a_xa)
        ay = min(max(ay, -self.a_ym), self.a_ym)
        return Action(ax, ay)


@dataclass(frozen=True)
class WorldState:
    """Ego, leader, and follower states at one instant (leader downstream of follower)."""

    ego: KinematicState
    leader: KinematicState
    follower: KinematicState
    t: float = 0.0

    def __post_init__(self):
        if not self.leader.px > self.follower.px:
            raise ValueError(
                f"leader must be downstream of follower: "
                f"leader.px={self.leader.px}, follower.px={self.follower.px}"
            )
        if not math.isfinite(self.t):
            raise ValueError(f"non-finite time {self.t!r}")


def step_kinematics(s: KinematicState, a: Action, dt: float) -> KinematicState:
    """One discrete double-integrator step; see :func:`step_state` for clamping rules."""
    if not (math.isfinite(dt) and dt > 0.0):
        raise ValueError(f"dt must be positive and finite, got {dt!r}")
    px, py, vx, vy = step_state(s.px, s.py, s.vx, s.vy, a.ax, a.ay, dt)
    return KinematicState(px, py, vx, vy)


def collision(a: KinematicState, b: KinematicState, g: Geometry) -> bool:
    """True iff two identical vehicle rectangles overlap (strict inequalities: touch is safe)."""
    return bool(rects_collide(a.px - b.px, a.py - b.py, g.l_v, g.w_v))
