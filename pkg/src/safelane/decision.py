"""Safety-driven behavior adjustment: choose Proceed / Hesitate / Abort each
control step by one-step lookahead against worst-case others plus safe-evasion
verification of the resulting state.

An abort executes the evasion profile verified at the previous step and is
latched until the ego is fully back in the original lane with its lateral
velocity damped out; mode changes during the latch are ignored because the
stored profile was verified under the mode current at verification time.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Callable, Optional

from ._accel import njit
from .core import Action, Geometry, Limits, WorldState, step_state
from .safety import (
    LATERAL_SETTLE_EPS,
    VY_SETTLE_EPS,
    EvasionProfile,
    FollowerMode,
    evasion_accels_k,
    evasion_exists_k,
)

__all__ = ["Strategy", "DecisionState", "hesitate_lateral", "decide", "initial_decision_state"]


class Strategy(IntEnum):
    """Per-step strategy, in decreasing order of preference."""

    PROCEED = 0
    HESITATE = 1
    ABORT = 2


@dataclass(frozen=True)
class DecisionState:
    """Episode-local decision memory: the last verified evasion profile and the
    abort latch."""

    last_profile: EvasionProfile
    aborting: bool = False
    abort_started_at: Optional[float] = None


def initial_decision_state() -> DecisionState:
    """Trivial profile for an ego starting centered in the original lane."""
    return DecisionState(last_profile=EvasionProfile(0.0, 0.0, 0.0, created_at=0.0))


@njit(cache=True)
def hesitate_lateral_k(vy, dt, a_ym):
    ay = -vy / dt
    if ay < -a_ym:
        return -a_ym
    if ay > a_ym:
        return a_ym
    return ay


def hesitate_lateral(vy: float, dt: float, a_ym: float) -> float:
    """Lateral acceleration that damps vy toward zero within one step, clamped."""
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return float(hesitate_lateral_k(vy, dt, a_ym))


@njit(cache=False)  # calls kernels from other modules; disk cache unsafe
def lookahead_state_k(e_px, e_py, e_vx, e_vy, l_px, l_vx, f_px, f_vx,
                      ax, ay, aggressive, a_acc, a_dec, dt):
    """One control step with the ego under (ax, ay) and worst-case others:
    leader braking, follower at its mode's worst action."""
    ne = step_state(e_px, e_py, e_vx, e_vy, ax, ay, dt)
    nl = step_state(l_px, 0.0, l_vx, 0.0, -a_dec, 0.0, dt)
    if aggressive:
        nf = step_state(f_px, 0.0, f_vx, 0.0, a_acc, 0.0, dt)
    else:
        nf = step_state(f_px, 0.0, f_vx, 0.0, -a_dec, 0.0, dt)
    return ne[0], ne[1], ne[2], ne[3], nl[0], nl[2], nf[0], nf[2]


@njit(cache=False)  # calls kernels from other modules; disk cache unsafe
def decide_k(e_px, e_py, e_vx, e_vy, l_px, l_vx, f_px, f_vx, t,
             p_t1, p_tyf, p_t2, p_created, aborting,
             nn_ax, nn_ay, aggressive,
             a_acc, a_dec, a_ym, p_m, y_safe, dt):
    """Returns (strategy, ax, ay, t1, t_yf, t2, created_at, aborting)."""
    if aborting:
        if e_py <= y_safe + LATERAL_SETTLE_EPS and abs(e_vy) <= VY_SETTLE_EPS:
            aborting = False
        else:
            el = t - p_created
            ax, ay = evasion_accels_k(p_t1, p_tyf, p_t2, el, e_vy, e_vx,
                                      e_px - f_px, a_acc, a_dec, a_ym, p_m, dt)
            return 2, ax, ay, p_t1, p_tyf, p_t2, p_created, True

    # proceed: the planner action verbatim
    npx, npy, nvx, nvy, nlp, nlv, nfp, nfv = lookahead_state_k(
        e_px, e_py, e_vx, e_vy, l_px, l_vx, f_px, f_vx,
        nn_ax, nn_ay, aggressive, a_acc, a_dec, dt)
    ok, t1, tyf, t2 = evasion_exists_k(
        npy, nvy, nvx, nlp - npx, nlv, npx - nfp, nfv, aggressive,
        a_acc, a_dec, a_ym, p_m, y_safe, dt)
    if ok:
        return 0, nn_ax, nn_ay, t1, tyf, t2, t + dt, False

    # hesitate: keep the longitudinal command, damp lateral velocity
    h_ay = hesitate_lateral_k(e_vy, dt, a_ym)
    npx, npy, nvx, nvy, nlp, nlv, nfp, nfv = lookahead_state_k(
        e_px, e_py, e_vx, e_vy, l_px, l_vx, f_px, f_vx,
        nn_ax, h_ay, aggressive, a_acc, a_dec, dt)
    ok, t1, tyf, t2 = evasion_exists_k(
        npy, nvy, nvx, nlp - npx, nlv, npx - nfp, nfv, aggressive,
        a_acc, a_dec, a_ym, p_m, y_safe, dt)
    if ok:
        return 1, nn_ax, h_ay, t1, tyf, t2, t + dt, False

    # abort: execute the profile verified at the previous step
    el = t - p_created
    ax, ay = evasion_accels_k(p_t1, p_tyf, p_t2, el, e_vy, e_vx,
                              e_px - f_px, a_acc, a_dec, a_ym, p_m, dt)
    return 2, ax, ay, p_t1, p_tyf, p_t2, p_created, True


def decide(
    w: WorldState,
    ds: DecisionState,
    nn_action: Action,
    mode: FollowerMode,
    lim: Limits,
    g: Geometry,
    evasion_check: Optional[Callable[[WorldState], Optional[EvasionProfile]]] = None,
) -> tuple[Strategy, Action, DecisionState]:
    """One strategy decision. ``evasion_check`` injects a replacement for the
    safe-evasion verifier (test hook); None uses the analytic one, identically
    to the compiled episode path.
    """
    if evasion_check is None:
        strat, ax, ay, t1, tyf, t2, created, aborting = decide_k(
            w.ego.px, w.ego.py, w.ego.vx, w.ego.vy,
            w.leader.px, w.leader.vx, w.follower.px, w.follower.vx, w.t,
            ds.last_profile.t1, ds.last_profile.t_yf, ds.last_profile.t2,
            ds.last_profile.created_at, ds.aborting,
            nn_action.ax, nn_action.ay, mode == FollowerMode.AGGRESSIVE,
            lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.y_safe, lim.dt,
        )
        strategy = Strategy(strat)
        if strategy == Strategy.ABORT:
            started = ds.abort_started_at if ds.aborting else w.t
            new_ds = DecisionState(ds.last_profile, aborting=True, abort_started_at=started)
        else:
            new_ds = DecisionState(EvasionProfile(float(t1), float(tyf), float(t2), float(created)))
        return strategy, Action(float(ax), float(ay)), new_ds

    # injected-check path mirrors the kernel's control flow in plain Python
    from .safety import evasion_action  # local import to avoid cycle at module load

    def lookahead(action: Action) -> WorldState:
        vals = lookahead_state_k(
            w.ego.px, w.ego.py, w.ego.vx, w.ego.vy,
            w.leader.px, w.leader.vx, w.follower.px, w.follower.vx,
            action.ax, action.ay, mode == FollowerMode.AGGRESSIVE,
            lim.a_xa, lim.a_xd, lim.dt,
        )
        from .core import KinematicState

        return WorldState(
            ego=KinematicState(vals[0], vals[1], vals[2], vals[3]),
            leader=KinematicState(vals[4], g.w_l, vals[5], 0.0),
            follower=KinematicState(vals[6], g.w_l, vals[7], 0.0),
            t=w.t + lim.dt,
        )

    if ds.aborting and not (
        w.ego.py <= g.y_safe + LATERAL_SETTLE_EPS and abs(w.ego.vy) <= VY_SETTLE_EPS
    ):
        act = evasion_action(ds.last_profile, w.t - ds.last_profile.created_at, w, lim)
        return Strategy.ABORT, act, replace(ds, aborting=True)

    prof = evasion_check(lookahead(nn_action))
    if prof is not None:
        return Strategy.PROCEED, nn_action, DecisionState(replace(prof, created_at=w.t + lim.dt))
    hes = Action(nn_action.ax, hesitate_lateral(w.ego.vy, lim.dt, lim.a_ym))
    prof = evasion_check(lookahead(hes))
    if prof is not None:
        return Strategy.HESITATE, hes, DecisionState(replace(prof, created_at=w.t + lim.dt))
    act = evasion_action(ds.last_profile, w.t - ds.last_profile.created_at, w, lim)
    started = ds.abort_started_at if ds.aborting else w.t
    return Strategy.ABORT, act, DecisionState(ds.last_profile, True, started)
