"""Closed-form worst-case evasion analysis.

Decides whether the ego, from a given world state, still has a safe abort
trajectory back to the original lane, assuming the leader brakes as hard as
possible while the follower simultaneously takes its worst action for the
assessed behavior mode. The abort is a bang-bang lateral return combined
with an accelerate-then-brake longitudinal profile; all margins are exact
piecewise-quadratic minima, not sampled rollouts.

Worst-case conventions: the leader brakes at a_xd until standstill; an
aggressive follower accelerates at a_xa for the whole lateral window; a
cautious follower decelerates at a_xd, clamped at standstill.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np

from ._accel import njit
from .core import Action, Geometry, Limits, WorldState

__all__ = [
    "EvasionProfile",
    "FollowerMode",
    "lateral_evasion_times",
    "headway_C1",
    "headway_C2",
    "max_accel_duration_t2",
    "follower_safe",
    "safe_evasion_exists",
    "evasion_action",
]

# Lateral slack used only to release the abort latch and judge "settled";
# the analytic targets below are exact.
LATERAL_SETTLE_EPS = 0.05
VY_SETTLE_EPS = 0.05

_T2_BISECT_TOL = 1e-4
_GRID_EPS = 1e-9


class FollowerMode(IntEnum):
    """Behavior hypothesis for the target-lane follower."""

    CAUTIOUS = 0
    AGGRESSIVE = 1


@dataclass(frozen=True)
class EvasionProfile:
    """Verified worst-case escape trajectory parameters (all in seconds).

    t1: lateral switch time (brake lateral motion until t1, then reverse);
    t_yf: lateral completion time (ego fully back in the original lane);
    t2: longitudinal acceleration duration (a_xa until t2, then -a_xd);
    created_at: world time at which the profile clock starts.
    """

    t1: float
    t_yf: float
    t2: float
    created_at: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.t1 <= self.t_yf + 1e-12):
            raise ValueError(f"need 0 <= t1 <= t_yf, got t1={self.t1}, t_yf={self.t_yf}")
        if not (0.0 <= self.t2 <= self.t_yf + 1e-12):
            raise ValueError(f"need 0 <= t2 <= t_yf, got t2={self.t2}, t_yf={self.t_yf}")


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def lateral_times_k(py0, vy0, a_ym, y_safe):
    """Solve the minimum-time bang-bang return to py = y_safe with vy = 0.

    Profile: ay = -a_ym on [0, t1], then +a_ym on [t1, t_yf]. Degenerate
    states that are already inside the original lane (or dropping into it
    faster than the profile could) reduce to a single velocity-damping phase.
    Returns (t1, t_yf).
    """
    if py0 <= y_safe and vy0 <= 0.0:
        return 0.0, 0.0 - vy0 / a_ym + 0.0
    disc = 0.5 * vy0 * vy0 + a_ym * (py0 - y_safe)
    if disc <= 0.0:
        # outward motion whose braked apex stays inside the lane: damp it out
        t1 = vy0 / a_ym
        return t1, t1
    t1 = (vy0 + math.sqrt(disc)) / a_ym
    if t1 < 0.0:
        # inbound too fast to stop exactly on the boundary; it overshoots
        # deeper into the original lane, so damping bounds the exposure
        return 0.0, 0.0 - vy0 / a_ym + 0.0
    return t1, 2.0 * t1 - vy0 / a_ym


@njit(cache=True)
def _brake_dist(v0, a_dec, t):
    # distance covered braking at a_dec > 0, held at standstill
    t_stop = v0 / a_dec
    if t >= t_stop:
        return 0.5 * v0 * t_stop
    return v0 * t - 0.5 * a_dec * t * t


@njit(cache=True)
def _const_acc_dist(v0, a, t, clamp_stop):
    if clamp_stop and a < 0.0:
        return _brake_dist(v0, -a, t)
    return v0 * t + 0.5 * a * t * t


@njit(cache=True)
def _const_acc_vel(v0, a, t, clamp_stop):
    v = v0 + a * t
    if clamp_stop and v < 0.0:
        return 0.0
    return v


@njit(cache=True)
def _ego_dist(v0, t2, a_acc, a_dec, t):
    # accelerate at a_acc on [0, t2], brake at a_dec after, hold at standstill
    if t <= t2:
        return v0 * t + 0.5 * a_acc * t * t
    d2 = v0 * t2 + 0.5 * a_acc * t2 * t2
    return d2 + _brake_dist(v0 + a_acc * t2, a_dec, t - t2)


@njit(cache=True)
def _ego_vel(v0, t2, a_acc, a_dec, t):
    if t <= t2:
        return v0 + a_acc * t
    return _const_acc_vel(v0 + a_acc * t2, -a_dec, t - t2, True)


@njit(cache=True)
def _gap_at(gap0, v0, t2, a_acc, a_dec, v_oth, a_oth, clamp_oth, ahead, t):
    de = _ego_dist(v0, t2, a_acc, a_dec, t)
    do = _const_acc_dist(v_oth, a_oth, t, clamp_oth)
    if ahead:
        return gap0 + do - de
    return gap0 + de - do


@njit(cache=True)
def min_gap_k(gap0, v0, t2, a_acc, a_dec, v_oth, a_oth, clamp_oth, ahead, T):
    """Exact minimum center gap over [0, T] between the ego evasion profile
    and one other vehicle under constant acceleration (optionally clamped at
    standstill). ahead=True measures leader gap, False measures rear gap.

    Both positions are piecewise quadratics, so the minimum sits on a phase
    boundary or at an interior stationary point of one segment.
    """
    if T <= 0.0:
        return gap0
    v2 = v0 + a_acc * t2
    ts_ego = t2 + v2 / a_dec
    if clamp_oth and a_oth < 0.0:
        ts_oth = v_oth / (-a_oth)
    else:
        ts_oth = T + 1.0

    bps = np.empty(5)
    bps[0] = 0.0
    bps[1] = T
    nb = 2
    if 0.0 < t2 < T:
        bps[nb] = t2
        nb += 1
    if 0.0 < ts_ego < T:
        bps[nb] = ts_ego
        nb += 1
    if 0.0 < ts_oth < T:
        bps[nb] = ts_oth
        nb += 1
    bps[:nb] = np.sort(bps[:nb])

    best = _gap_at(gap0, v0, t2, a_acc, a_dec, v_oth, a_oth, clamp_oth, ahead, 0.0)
    for i in range(1, nb):
        g = _gap_at(gap0, v0, t2, a_acc, a_dec, v_oth, a_oth, clamp_oth, ahead, bps[i])
        if g < best:
            best = g
    for i in range(nb - 1):
        ta = bps[i]
        tb = bps[i + 1]
        tm = 0.5 * (ta + tb)
        if tm < t2:
            ae = a_acc
        elif tm < ts_ego:
            ae = -a_dec
        else:
            ae = 0.0
        ao = a_oth
        if clamp_oth and (tm >= ts_oth or (v_oth <= 0.0 and a_oth < 0.0)):
            ao = 0.0
        ve = _ego_vel(v0, t2, a_acc, a_dec, ta)
        vo = _const_acc_vel(v_oth, a_oth, ta, clamp_oth)
        if ahead:
            g1 = vo - ve
            g2 = ao - ae
        else:
            g1 = ve - vo
            g2 = ae - ao
        if g2 != 0.0:
            t_star = ta - g1 / g2
            if ta < t_star < tb:
                g = _gap_at(gap0, v0, t2, a_acc, a_dec, v_oth, a_oth, clamp_oth, ahead, t_star)
                if g < best:
                    best = g
    return best


@njit(cache=True)
def headway_c1_k(p0_minus_pl, v0, vl, t_yf, a_xd, a_xld, p_m):
    # leader stops before the lateral window ends vs. still braking at t_yf
    if vl / a_xld < t_yf:
        return p0_minus_pl + v0 * t_yf - 0.5 * a_xd * t_yf * t_yf - vl * vl / (2.0 * a_xld) + p_m
    return p0_minus_pl + (v0 - vl) * t_yf - 0.5 * (a_xd - a_xld) * t_yf * t_yf + p_m


@njit(cache=True)
def headway_c2_k(p0_minus_pl, v0, vl, a_xd, a_xld, p_m):
    return p0_minus_pl + v0 * v0 / (2.0 * a_xd) - vl * vl / (2.0 * a_xld) + p_m


@njit(cache=True)
def max_accel_time_k(gap_lead, v0, vl, t_yf, a_acc, a_dec, a_xld, p_m):
    """Largest t2 in [0, t_yf] keeping the worst-case leader gap >= p_m.

    The gap window runs to min(t_yf, ego stop time): once the ego stands
    still behind a braking leader the gap can only grow. Larger t2 shifts
    the whole ego position curve forward, so feasibility is monotone and
    bisection applies. Returns (t2, feasible_even_at_zero).
    """
    T0 = t_yf
    t_stop0 = v0 / a_dec
    if t_stop0 < T0:
        T0 = t_stop0
    g0 = min_gap_k(gap_lead, v0, 0.0, a_acc, a_dec, vl, -a_xld, True, True, T0)
    if g0 < p_m:
        return 0.0, False
    gf = min_gap_k(gap_lead, v0, t_yf, a_acc, a_dec, vl, -a_xld, True, True, t_yf)
    if gf >= p_m:
        return t_yf, True
    lo = 0.0
    hi = t_yf
    while hi - lo > _T2_BISECT_TOL:
        mid = 0.5 * (lo + hi)
        Tm = t_yf
        t_stop = mid + (v0 + a_acc * mid) / a_dec
        if t_stop < Tm:
            Tm = t_stop
        g = min_gap_k(gap_lead, v0, mid, a_acc, a_dec, vl, -a_xld, True, True, Tm)
        if g >= p_m:
            lo = mid
        else:
            hi = mid
    return lo, True


@njit(cache=True)
def follower_min_gap_k(gap_follow, v0, vf, t2, t_yf, aggressive, a_acc, a_dec, p_m):
    """Minimum rear center gap over the lateral window [0, t_yf].

    At t = t_yf this reduces to the printed two-branch closing-gap expression
    (ego stops before t_yf or not); the interior is covered too because a
    cautious follower braking while the ego accelerates can dip the gap
    between the endpoints.
    """
    if aggressive:
        return min_gap_k(gap_follow, v0, t2, a_acc, a_dec, vf, a_acc, False, False, t_yf)
    return min_gap_k(gap_follow, v0, t2, a_acc, a_dec, vf, -a_dec, True, False, t_yf)


@njit(cache=True)
def evasion_exists_k(py, vy, v0, gap_lead, vl, gap_follow, vf, aggressive,
                     a_acc, a_dec, a_ym, p_m, y_safe, dt):
    """Full safe-evasion verification. Returns (ok, t1, t_yf, t2).

    t2 is floored to the control grid so the executed profile switches exactly
    where the verified one does; flooring only shortens the acceleration phase,
    which is the conservative side for the leader gap, and the follower margin
    is evaluated at the floored value directly.
    """
    t1, t_yf = lateral_times_k(py, vy, a_ym, y_safe)
    if t_yf <= 0.0:
        return True, 0.0, 0.0, 0.0
    if vl < v0:
        t_xf = v0 / a_dec
        if t_xf >= t_yf:
            if headway_c1_k(-gap_lead, v0, vl, t_yf, a_dec, a_dec, p_m) >= 0.0:
                return False, t1, t_yf, 0.0
        else:
            if headway_c2_k(-gap_lead, v0, vl, a_dec, a_dec, p_m) >= 0.0:
                return False, t1, t_yf, 0.0
    t2, ok0 = max_accel_time_k(gap_lead, v0, vl, t_yf, a_acc, a_dec, a_dec, p_m)
    if not ok0:
        return False, t1, t_yf, 0.0
    t2q = math.floor(t2 / dt + _GRID_EPS) * dt
    if t2q > t_yf:
        t2q = t_yf
    if t2q < 0.0:
        t2q = 0.0
    if follower_min_gap_k(gap_follow, v0, vf, t2q, t_yf, aggressive, a_acc, a_dec, p_m) > p_m:
        return True, t1, t_yf, t2q
    if t2q > 0.0 and follower_min_gap_k(gap_follow, v0, vf, 0.0, t_yf, aggressive, a_acc, a_dec, p_m) > p_m:
        return True, t1, t_yf, 0.0
    return False, t1, t_yf, 0.0


@njit(cache=True)
def evasion_accels_k(t1, t_yf, t2, elapsed, vy, vx, rear_gap, a_acc, a_dec, a_ym, p_m, dt):
    """Piecewise-constant action of an evasion profile at a given elapsed time.

    Past t_yf the profile holds the lane: lateral velocity is damped out and
    the ego keeps braking until the follower margin clears.
    """
    if elapsed < t1 - _GRID_EPS:
        ay = -a_ym
    elif elapsed < t_yf - _GRID_EPS:
        ay = a_ym
    else:
        ay = -vy / dt
        if ay < -a_ym:
            ay = -a_ym
        elif ay > a_ym:
            ay = a_ym
    if elapsed < t2 - _GRID_EPS:
        ax = a_acc
    elif elapsed < t_yf - _GRID_EPS:
        ax = -a_dec
    else:
        if rear_gap <= p_m and vx > 0.0:
            ax = -a_dec
        else:
            ax = 0.0
    return ax, ay


# ---------------------------------------------------------------------------
# wrappers
# ---------------------------------------------------------------------------


def lateral_evasion_times(py0: float, vy0: float, lim: Limits, g: Geometry) -> tuple[float, float]:
    """Times (t1, t_yf) of the fastest bang-bang lateral return to the original lane."""
    t1, t_yf = lateral_times_k(py0, vy0, lim.a_ym, g.y_safe)
    if not (math.isfinite(t1) and math.isfinite(t_yf)) or t1 < 0.0 or t_yf < t1 - 1e-12:
        raise RuntimeError(
            f"inconsistent lateral evasion solution for py0={py0}, vy0={vy0}: ({t1}, {t_yf})"
        )
    return t1, t_yf


def headway_C1(w: WorldState, t_yf: float, lim: Limits) -> float:
    """Braking-headway margin while the ego is still in the target lane (negative is safe)."""
    return headway_c1_k(
        w.ego.px - w.leader.px, w.ego.vx, w.leader.vx, t_yf, lim.a_xd, lim.a_xd, lim.p_m
    )


def headway_C2(w: WorldState, lim: Limits) -> float:
    """Stopped-distance headway margin when the ego halts inside the window (negative is safe)."""
    return headway_c2_k(w.ego.px - w.leader.px, w.ego.vx, w.leader.vx, lim.a_xd, lim.a_xd, lim.p_m)


def max_accel_duration_t2(w: WorldState, t_yf: float, lim: Limits) -> float:
    """Largest acceleration duration that keeps >= p_m to the braking leader."""
    if t_yf <= 0.0:
        raise ValueError(f"t_yf must be positive, got {t_yf}")
    t2, _ = max_accel_time_k(
        w.leader.px - w.ego.px, w.ego.vx, w.leader.vx, t_yf, lim.a_xa, lim.a_xd, lim.a_xd, lim.p_m
    )
    return float(t2)


def follower_safe(w: WorldState, t_yf: float, t2: float, mode: FollowerMode, lim: Limits) -> bool:
    """True iff the rear gap to the mode's worst-case follower stays above p_m through t_yf."""
    if not (0.0 <= t2 <= t_yf + 1e-12):
        raise ValueError(f"need 0 <= t2 <= t_yf, got t2={t2}, t_yf={t_yf}")
    g = follower_min_gap_k(
        w.ego.px - w.follower.px,
        w.ego.vx,
        w.follower.vx,
        t2,
        t_yf,
        mode == FollowerMode.AGGRESSIVE,
        lim.a_xa,
        lim.a_xd,
        lim.p_m,
    )
    return bool(g > lim.p_m)


def safe_evasion_exists(
    w: WorldState, mode: FollowerMode, lim: Limits, g: Geometry
) -> Optional[EvasionProfile]:
    """Verify a worst-case abort from ``w``; None means no safe evasion exists."""
    ok, t1, t_yf, t2 = evasion_exists_k(
        w.ego.py,
        w.ego.vy,
        w.ego.vx,
        w.leader.px - w.ego.px,
        w.leader.vx,
        w.ego.px - w.follower.px,
        w.follower.vx,
        mode == FollowerMode.AGGRESSIVE,
        lim.a_xa,
        lim.a_xd,
        lim.a_ym,
        lim.p_m,
        g.y_safe,
        lim.dt,
    )
    if not ok:
        return None
    return EvasionProfile(t1=float(t1), t_yf=float(t_yf), t2=float(t2), created_at=w.t)


def evasion_action(profile: EvasionProfile, elapsed: float, w: WorldState, lim: Limits) -> Action:
    """Action commanded by an evasion profile at ``elapsed`` seconds into it."""
    if elapsed < 0.0:
        raise ValueError(f"elapsed must be >= 0, got {elapsed}")
    ax, ay = evasion_accels_k(
        profile.t1,
        profile.t_yf,
        profile.t2,
        elapsed,
        w.ego.vy,
        w.ego.vx,
        w.ego.px - w.follower.px,
        lim.a_xa,
        lim.a_xd,
        lim.a_ym,
        lim.p_m,
        lim.dt,
    )
    return Action(ax, ay)
