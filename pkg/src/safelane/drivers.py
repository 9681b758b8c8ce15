"""Interacting-vehicle behavior: IDM car following for the follower and
scripted constant-acceleration profiles for the leader.

The follower's predecessor depends on its mode: cautious drivers yield and
follow the ego, aggressive drivers close the gap and follow the leader. All
gaps are center-to-center, consistent with the rest of the package.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ._accel import njit
from .core import WorldState
from .safety import FollowerMode

__all__ = ["IdmParams", "LeaderProfile", "idm_accel", "follower_accel", "leader_step"]

_MIN_V_DES = 0.1


@dataclass(frozen=True)
class IdmParams:
    """IDM parameters. ``v_des`` is used directly as the desired speed by
    :func:`idm_accel`; :func:`follower_accel` treats it as the sampled surplus
    above the live predecessor's speed (desired speed relative to the stream).
    """

    v_des: float
    h_s: float
    t_g: float
    a_max: float = 4.0
    a_dec: float = 6.0

    def __post_init__(self):
        for name in ("v_des", "h_s", "t_g", "a_max", "a_dec"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0, got {v!r}")


@dataclass(frozen=True)
class LeaderProfile:
    """Constant-acceleration leader schedule with a speed floor of 0 and a design cap."""

    a_xl: float
    v_cap: float = 40.0
    v_floor: float = 0.0


@njit(cache=True)
def idm_accel_k(v, gap, dv, v_des, h_s, t_g, a_max, a_dec):
    if gap <= 0.0:
        return -a_dec
    if v_des < _MIN_V_DES:
        v_des = _MIN_V_DES
    s_star = h_s
    dyn = v * t_g + v * dv / (2.0 * math.sqrt(a_max * a_dec))
    if dyn > 0.0:
        s_star = h_s + dyn
    r = v / v_des
    r2 = r * r
    ratio = s_star / gap
    a = a_max * (1.0 - r2 * r2 - ratio * ratio)
    if a < -a_dec:
        return -a_dec
    if a > a_max:
        return a_max
    return a


@njit(cache=True)
def follower_accel_k(f_px, f_vx, e_px, e_vx, l_px, l_vx, aggressive, v_sur, h_s, t_g, a_max, a_dec):
    if aggressive:
        gap = l_px - f_px
        dv = f_vx - l_vx
        v_des = l_vx + v_sur
    else:
        gap = e_px - f_px
        dv = f_vx - e_vx
        v_des = e_vx + v_sur
    return idm_accel_k(f_vx, gap, dv, v_des, h_s, t_g, a_max, a_dec)


@njit(cache=True)
def leader_accel_k(v, a_xl, v_cap, dt):
    if a_xl > 0.0 and v + a_xl * dt > v_cap:
        return 0.0
    if a_xl < 0.0 and v <= 0.0:
        return 0.0
    return a_xl


def idm_accel(v: float, gap: float, dv: float, p: IdmParams) -> float:
    """IDM acceleration from speed, (center) gap, and closing speed dv = v - v_pred.

    The desired-gap term is clamped at the jam spacing h_s, the output at
    [-a_dec, a_max]; a non-positive gap degenerates to maximal braking.
    """
    return float(idm_accel_k(v, gap, dv, p.v_des, p.h_s, p.t_g, p.a_max, p.a_dec))


def follower_accel(w: WorldState, mode: FollowerMode, p: IdmParams) -> float:
    """Follower IDM acceleration with the mode-dependent predecessor.

    The effective desired speed is the predecessor's current speed plus the
    sampled surplus stored in ``p.v_des``.
    """
    return float(
        follower_accel_k(
            w.follower.px,
            w.follower.vx,
            w.ego.px,
            w.ego.vx,
            w.leader.px,
            w.leader.vx,
            mode == FollowerMode.AGGRESSIVE,
            p.v_des,
            p.h_s,
            p.t_g,
            p.a_max,
            p.a_dec,
        )
    )


def leader_step(v: float, prof: LeaderProfile, dt: float = 0.1) -> float:
    """Leader acceleration for one step: the scheduled value, overridden to 0
    when it would push the speed above v_cap or below 0."""
    return float(leader_accel_k(v, prof.a_xl, prof.v_cap, dt))
