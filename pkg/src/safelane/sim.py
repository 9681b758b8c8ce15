"""Closed-loop episode engine and metrics.

Three vehicles step synchronously at 0.1 s over a 10 s horizon. The ego is
driven by one of three planners (MPC baseline, raw neural planner, or the
safety-wrapped neural planner); the follower runs IDM under its ground-truth
mode (or a scripted gap-closing policy), the leader follows its constant
acceleration schedule. Episodes are deterministic functions of their scenario,
so batches parallelize over a worker pool without affecting results.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ._accel import njit, prange
from .core import Geometry, KinematicState, Limits, WorldState, rects_collide, step_state
from .decision import decide_k
from .drivers import IdmParams, LeaderProfile, follower_accel_k, leader_accel_k
from .mlp import MlpModel, mlp_eval_k
from .planners import clip_gap, mpc_plan_k, sample_synth_scenarios, MpcConfig
from .assessor import classify_k, predict_accels_k
from .safety import EvasionProfile, FollowerMode, evasion_accels_k

__all__ = [
    "Scenario",
    "EpisodeResult",
    "Metrics",
    "MetricsAccumulator",
    "ExperimentClass",
    "EXPERIMENT_CLASSES",
    "PLANNER_CODES",
    "ASSESS_CODES",
    "TRAJ_COLUMNS",
    "sample_scenarios",
    "run_episode",
    "run_batch",
    "aggregate",
    "aggregate_rows",
    "worst_case_rollout_safe",
    "illustrating_scenario",
]

PLANNER_CODES = {"mpc": 0, "nn": 1, "safenn": 2}
ASSESS_CODES = {"learned": 0, "oracle": 1, "always-aggressive": 2}

TRAJ_COLUMNS = (
    "t",
    "ego_px", "ego_py", "ego_vx", "ego_vy",
    "leader_px", "leader_py", "leader_vx", "leader_vy",
    "follower_px", "follower_py", "follower_vx", "follower_vy",
    "ax", "ay",
    "strategy", "assessed_mode", "true_mode",
)

_N_OUT = 9  # per-episode outcome columns from the kernel


# ---------------------------------------------------------------------------
# episode kernel
# ---------------------------------------------------------------------------


@njit(cache=False)  # calls kernels from other modules; disk cache unsafe
def run_episode_k(e_vx0, l_px0, l_vx0, f_px0, f_vx0,
                  a_xl, v_cap, h_s, t_g, v_sur, true_aggressive,
                  fol_policy, scr_t_go, scr_a, scr_gap,
                  planner, th_ax, th_ay, th_as, a_th, assess_mode,
                  switch_times, ax_grid, horizon,
                  w_ex, w_ey, w_prog, w_time, comfort,
                  a_acc, a_dec, a_ym, p_m, w_l, w_v, l_v, dt,
                  n_steps, traj, record):
    """One full episode. Returns (collided, collision_t, crossed, crossing_t,
    final_py, abort_steps, first_abort_t, hesitate_steps, end_t)."""
    y_crossed = 0.5 * (w_l + w_v)
    y_safe = 0.5 * (w_l - w_v)

    e_px = 0.0
    e_py = 0.0
    e_vx = e_vx0
    e_vy = 0.0
    l_px = l_px0
    l_vx = l_vx0
    f_px = f_px0
    f_vx = f_vx0

    prof_t1 = 0.0
    prof_tyf = 0.0
    prof_t2 = 0.0
    prof_created = 0.0
    aborting = False

    collided = 0.0
    col_t = -1.0
    crossed = 0.0
    cross_t = -1.0
    abort_steps = 0.0
    first_abort = -1.0
    hes_steps = 0.0
    end_t = 0.0

    prev_f_vx = f_vx0
    scr_latched = False

    x7 = np.empty(7)
    x5 = np.empty(5)
    out1 = np.empty(1)
    out2 = np.empty(2)

    for k in range(n_steps):
        t = k * dt
        strategy = -1.0
        assessed = -1.0

        if planner == 0:
            ax, ay, _ = mpc_plan_k(
                e_py, e_vx, e_vy, l_px - e_px, l_vx, e_px - f_px, f_vx,
                switch_times, ax_grid, horizon, dt,
                w_ex, w_ey, w_prog, w_time, comfort,
                a_acc, a_dec, a_ym, p_m, w_l, y_crossed)
        else:
            x7[0] = e_py
            x7[1] = e_vx
            x7[2] = e_vy
            x7[3] = clip_gap(l_px - e_px)
            x7[4] = l_vx
            x7[5] = clip_gap(e_px - f_px)
            x7[6] = f_vx
            mlp_eval_k(th_ax, 7, 1, x7, out1)
            ax = out1[0]
            if ax < -a_dec:
                ax = -a_dec
            elif ax > a_acc:
                ax = a_acc
            mlp_eval_k(th_ay, 7, 1, x7, out1)
            ay = out1[0]
            if ay < -a_ym:
                ay = -a_ym
            elif ay > a_ym:
                ay = a_ym

            if planner == 2:
                if assess_mode == 2:
                    aggressive = True
                elif assess_mode == 1:
                    aggressive = true_aggressive
                else:
                    if k == 0:
                        aggressive = True  # no observation yet: conservative default
                    else:
                        a_obs = (f_vx - prev_f_vx) / dt
                        x5[0] = e_vx
                        x5[1] = clip_gap(l_px - e_px)
                        x5[2] = l_vx
                        x5[3] = clip_gap(e_px - f_px)
                        x5[4] = f_vx
                        predict_accels_k(th_as, x5, out2)
                        aggressive = classify_k(a_obs, out2[0], out2[1], a_th) != 0
                assessed = 1.0 if aggressive else 0.0

                s, ax, ay, prof_t1, prof_tyf, prof_t2, prof_created, aborting = decide_k(
                    e_px, e_py, e_vx, e_vy, l_px, l_vx, f_px, f_vx, t,
                    prof_t1, prof_tyf, prof_t2, prof_created, aborting,
                    ax, ay, aggressive,
                    a_acc, a_dec, a_ym, p_m, y_safe, dt)
                strategy = float(s)
                if s == 2:
                    abort_steps += 1.0
                    if first_abort < 0.0:
                        first_abort = t
                elif s == 1:
                    hes_steps += 1.0

        # true behavior of the surrounding vehicles
        if fol_policy == 0:
            fa = follower_accel_k(f_px, f_vx, e_px, e_vx, l_px, l_vx,
                                  true_aggressive, v_sur, h_s, t_g, a_acc, a_dec)
        else:
            if t < scr_t_go - 1e-9:
                fa = 0.0
            else:
                gap_l = l_px - f_px
                if (not scr_latched) and gap_l > scr_gap:
                    fa = scr_a
                else:
                    # loose gap-holding once the target headway is reached
                    scr_latched = True
                    fa = 0.2 * (gap_l - scr_gap) + 0.6 * (l_vx - f_vx)
                    if fa < -a_dec:
                        fa = -a_dec
                    elif fa > a_acc:
                        fa = a_acc
        la = leader_accel_k(l_vx, a_xl, v_cap, dt)

        if record:
            traj[k, 0] = t
            traj[k, 1] = e_px
            traj[k, 2] = e_py
            traj[k, 3] = e_vx
            traj[k, 4] = e_vy
            traj[k, 5] = l_px
            traj[k, 6] = w_l
            traj[k, 7] = l_vx
            traj[k, 8] = 0.0
            traj[k, 9] = f_px
            traj[k, 10] = w_l
            traj[k, 11] = f_vx
            traj[k, 12] = 0.0
            traj[k, 13] = ax
            traj[k, 14] = ay
            traj[k, 15] = strategy
            traj[k, 16] = assessed
            traj[k, 17] = 1.0 if true_aggressive else 0.0

        prev_f_vx = f_vx
        e_px, e_py, e_vx, e_vy = step_state(e_px, e_py, e_vx, e_vy, ax, ay, dt)
        l_px, _, l_vx, _ = step_state(l_px, 0.0, l_vx, 0.0, la, 0.0, dt)
        f_px, _, f_vx, _ = step_state(f_px, 0.0, f_vx, 0.0, fa, 0.0, dt)
        end_t = (k + 1) * dt

        if rects_collide(e_px - l_px, e_py - w_l, l_v, w_v) or \
           rects_collide(e_px - f_px, e_py - w_l, l_v, w_v):
            collided = 1.0
            col_t = end_t
            break
        if crossed == 0.0 and e_py >= y_crossed:
            crossed = 1.0
            cross_t = end_t

    if record:
        kf = int(round(end_t / dt))
        traj[kf, 0] = end_t
        traj[kf, 1] = e_px
        traj[kf, 2] = e_py
        traj[kf, 3] = e_vx
        traj[kf, 4] = e_vy
        traj[kf, 5] = l_px
        traj[kf, 6] = w_l
        traj[kf, 7] = l_vx
        traj[kf, 8] = 0.0
        traj[kf, 9] = f_px
        traj[kf, 10] = w_l
        traj[kf, 11] = f_vx
        traj[kf, 12] = 0.0
        traj[kf, 13] = 0.0
        traj[kf, 14] = 0.0
        traj[kf, 15] = -1.0
        traj[kf, 16] = -1.0
        traj[kf, 17] = 1.0 if true_aggressive else 0.0

    return (collided, col_t, crossed, cross_t, e_py,
            abort_steps, first_abort, hes_steps, end_t)


@njit(cache=False, parallel=True)  # calls kernels from other modules; disk cache unsafe
def run_batch_k(scen, planner, th_ax, th_ay, th_as, a_th, assess_mode,
                switch_times, ax_grid, horizon,
                w_ex, w_ey, w_prog, w_time, comfort,
                a_acc, a_dec, a_ym, p_m, w_l, w_v, l_v, v_cap, dt,
                n_steps, out):
    """Independent episodes over a worker pool; each writes only its own row."""
    n = scen.shape[0]
    for i in prange(n):
        dummy = np.zeros((1, 18))
        c0, c1, c2, c3, c4, c5, c6, c7, c8 = run_episode_k(
            scen[i, 0], scen[i, 1], scen[i, 2], scen[i, 3], scen[i, 4],
            scen[i, 5], v_cap, scen[i, 6], scen[i, 7], scen[i, 8], scen[i, 9] > 0.5,
            0, 0.0, 0.0, 0.0,
            planner, th_ax, th_ay, th_as, a_th, assess_mode,
            switch_times, ax_grid, horizon,
            w_ex, w_ey, w_prog, w_time, comfort,
            a_acc, a_dec, a_ym, p_m, w_l, w_v, l_v, dt,
            n_steps, dummy, False)
        out[i, 0] = c0
        out[i, 1] = c1
        out[i, 2] = c2
        out[i, 3] = c3
        out[i, 4] = c4
        out[i, 5] = c5
        out[i, 6] = c6
        out[i, 7] = c7
        out[i, 8] = c8


@njit(cache=False)  # calls kernels from other modules; disk cache unsafe
def rollout_evasion_k(e_px, e_py, e_vx, e_vy, l_px, l_vx, f_px, f_vx,
                      t1, t_yf, t2, aggressive, dt_fine,
                      a_acc, a_dec, a_ym, p_m, w_l, w_v, l_v, dt_ctrl):
    """Brute-force check of one evasion profile against worst-case others.

    Integration is exact: the dt_fine grid is split at the profile breakpoints
    and every sub-segment has constant accelerations, so positions carry no
    discretization error. True iff no rectangle collision occurs and the ego
    is fully back in the original lane by t_yf + dt_fine.
    """
    y_safe = 0.5 * (w_l - w_v)
    if rects_collide(e_px - l_px, e_py - w_l, l_v, w_v):
        return False
    if rects_collide(e_px - f_px, e_py - w_l, l_v, w_v):
        return False
    completed = e_py <= y_safe + 1e-9
    end = t_yf + 2.0 * dt_fine
    t = 0.0
    while t < end - 1e-12:
        tn = t + dt_fine
        if tn > end:
            tn = end
        if t + 1e-12 < t1 < tn - 1e-12:
            tn = t1
        if t + 1e-12 < t2 < tn - 1e-12:
            tn = t2
        if t + 1e-12 < t_yf < tn - 1e-12:
            tn = t_yf
        h = tn - t
        ax, ay = evasion_accels_k(t1, t_yf, t2, t, e_vy, e_vx, e_px - f_px,
                                  a_acc, a_dec, a_ym, p_m, dt_ctrl)
        e_px, e_py, e_vx, e_vy = step_state(e_px, e_py, e_vx, e_vy, ax, ay, h)
        l_px, _, l_vx, _ = step_state(l_px, 0.0, l_vx, 0.0, -a_dec, 0.0, h)
        if aggressive:
            f_px, _, f_vx, _ = step_state(f_px, 0.0, f_vx, 0.0, a_acc, 0.0, h)
        else:
            f_px, _, f_vx, _ = step_state(f_px, 0.0, f_vx, 0.0, -a_dec, 0.0, h)
        t = tn
        if rects_collide(e_px - l_px, e_py - w_l, l_v, w_v):
            return False
        if rects_collide(e_px - f_px, e_py - w_l, l_v, w_v):
            return False
        if (not completed) and t <= t_yf + dt_fine + 1e-12 and e_py <= y_safe + 1e-9:
            completed = True
    return completed


# ---------------------------------------------------------------------------
# python layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """Initial condition plus ground-truth behavior for one episode."""

    initial: WorldState
    mode: FollowerMode
    idm: IdmParams
    leader: LeaderProfile
    seed: int = 0
    follower_policy: str = "idm"  # "idm" | "scripted"
    scripted_t_go: float = 2.0
    scripted_accel: float = 4.0
    scripted_gap: float = 17.0

    def __post_init__(self):
        if self.initial.ego.py != 0.0 or self.initial.ego.vy != 0.0:
            raise ValueError("episodes start centered in the original lane with no lateral speed")
        if self.follower_policy not in ("idm", "scripted"):
            raise ValueError(f"unknown follower policy {self.follower_policy!r}")


@dataclass(frozen=True)
class EpisodeResult:
    collided: bool
    collision_time: Optional[float]
    success: bool
    crossing_time: Optional[float]
    final_py: float
    end_time: float
    abort_steps: int = 0
    first_abort_time: Optional[float] = None
    hesitate_steps: int = 0
    trajectory: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ExperimentClass:
    """One Table-style experiment setting: sampling ranges and defaults."""

    a_xl_range: tuple[float, float]
    delta_p_range: tuple[float, float]
    episodes: int = 20000
    seed: int = 0


EXPERIMENT_CLASSES = {
    1: ExperimentClass((-6.0, 4.0), (7.0, 37.0)),
    2: ExperimentClass((-6.0, 0.0), (7.0, 37.0)),
    3: ExperimentClass((-6.0, 4.0), (7.0, 17.0)),
    4: ExperimentClass((-6.0, 0.0), (7.0, 17.0)),
}


def sample_scenarios(n: int, seed: int, klass: ExperimentClass) -> np.ndarray:
    """Scenario rows for one experiment class (see planners.sample_synth_scenarios)."""
    return sample_synth_scenarios(
        n, seed, a_xl_range=klass.a_xl_range, dp_range=klass.delta_p_range
    )


def _scenario_to_scalars(sc: Scenario):
    w = sc.initial
    return (
        w.ego.vx, w.leader.px, w.leader.vx, w.follower.px, w.follower.vx,
        sc.leader.a_xl, sc.leader.v_cap,
        sc.idm.h_s, sc.idm.t_g, sc.idm.v_des,
        sc.mode == FollowerMode.AGGRESSIVE,
        0 if sc.follower_policy == "idm" else 1,
        sc.scripted_t_go, sc.scripted_accel, sc.scripted_gap,
    )


def _theta_or_dummy(models: Optional[dict], key: str) -> np.ndarray:
    if models is not None and models.get(key) is not None:
        return models[key].pack()
    return np.zeros(1)


def _mpc_arrays(cfg: MpcConfig):
    return (
        np.asarray(cfg.switch_times, dtype=np.float64),
        np.asarray(cfg.ax_candidates, dtype=np.float64),
        cfg.horizon,
        cfg.w_effort_x, cfg.w_effort_y, cfg.w_progress, cfg.w_time, cfg.comfort_max_delta,
    )


def run_episode(
    sc: Scenario,
    planner: str = "safenn",
    assess_mode: str = "always-aggressive",
    models: Optional[dict] = None,
    a_th: float = 0.5,
    lim: Limits | None = None,
    g: Geometry | None = None,
    cfg: MpcConfig | None = None,
    n_steps: int = 100,
    record: bool = True,
) -> EpisodeResult:
    """Run one episode and collect its outcome (and trajectory when recording).

    planner: "mpc" | "nn" | "safenn"; assess_mode: "learned" | "oracle" |
    "always-aggressive". NN-based planners need models {"ax", "ay"}; learned
    assessment additionally needs models["assessor"].
    """
    lim = lim or Limits()
    g = g or Geometry()
    cfg = cfg or MpcConfig()
    if planner not in PLANNER_CODES:
        raise ValueError(f"unknown planner {planner!r}")
    if assess_mode not in ASSESS_CODES:
        raise ValueError(f"unknown assess mode {assess_mode!r}")
    if planner in ("nn", "safenn"):
        if models is None or models.get("ax") is None or models.get("ay") is None:
            raise ValueError(f"planner {planner!r} requires trained 'ax' and 'ay' models")
        if planner == "safenn" and assess_mode == "learned" and models.get("assessor") is None:
            raise ValueError("learned assessment requires a trained 'assessor' model")
    (e_vx0, l_px0, l_vx0, f_px0, f_vx0, a_xl, v_cap, h_s, t_g, v_sur,
     aggressive, policy, t_go, s_a, s_gap) = _scenario_to_scalars(sc)
    sw, axg, horizon, w_ex, w_ey, w_prog, w_time, comfort = _mpc_arrays(cfg)
    traj = np.zeros((n_steps + 1, len(TRAJ_COLUMNS)))
    vals = run_episode_k(
        e_vx0, l_px0, l_vx0, f_px0, f_vx0,
        a_xl, v_cap, h_s, t_g, v_sur, aggressive,
        policy, t_go, s_a, s_gap,
        PLANNER_CODES[planner],
        _theta_or_dummy(models, "ax"), _theta_or_dummy(models, "ay"),
        _theta_or_dummy(models, "assessor"),
        a_th, ASSESS_CODES[assess_mode],
        sw, axg, horizon, w_ex, w_ey, w_prog, w_time, comfort,
        lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.w_l, g.w_v, g.l_v, lim.dt,
        n_steps, traj, record,
    )
    return _result_from_row(vals, traj if record else None, lim.dt)


def _result_from_row(vals, traj, dt) -> EpisodeResult:
    collided, col_t, crossed, cross_t, final_py, aborts, first_abort, hes, end_t = (
        float(v) for v in vals
    )
    rows = int(round(end_t / dt)) + 1
    return EpisodeResult(
        collided=collided > 0.5,
        collision_time=col_t if col_t >= 0.0 else None,
        success=(crossed > 0.5) and not (collided > 0.5),
        crossing_time=cross_t if cross_t >= 0.0 else None,
        final_py=final_py,
        end_time=end_t,
        abort_steps=int(aborts),
        first_abort_time=first_abort if first_abort >= 0.0 else None,
        hesitate_steps=int(hes),
        trajectory=traj[:rows].copy() if traj is not None else None,
    )


def run_batch(
    scen: np.ndarray,
    planner: str,
    assess_mode: str = "always-aggressive",
    models: Optional[dict] = None,
    a_th: float = 0.5,
    lim: Limits | None = None,
    g: Geometry | None = None,
    cfg: MpcConfig | None = None,
    n_steps: int = 100,
    v_cap: float = 40.0,
) -> np.ndarray:
    """Run scenario rows in parallel. Returns the (n, 9) outcome array with
    columns (collided, collision_t, crossed, crossing_t, final_py,
    abort_steps, first_abort_t, hesitate_steps, end_t)."""
    lim = lim or Limits()
    g = g or Geometry()
    cfg = cfg or MpcConfig()
    if planner not in PLANNER_CODES:
        raise ValueError(f"unknown planner {planner!r}")
    if assess_mode not in ASSESS_CODES:
        raise ValueError(f"unknown assess mode {assess_mode!r}")
    sw, axg, horizon, w_ex, w_ey, w_prog, w_time, comfort = _mpc_arrays(cfg)
    out = np.zeros((scen.shape[0], _N_OUT))
    run_batch_k(
        np.ascontiguousarray(scen, dtype=np.float64),
        PLANNER_CODES[planner],
        _theta_or_dummy(models, "ax"), _theta_or_dummy(models, "ay"),
        _theta_or_dummy(models, "assessor"),
        a_th, ASSESS_CODES[assess_mode],
        sw, axg, horizon, w_ex, w_ey, w_prog, w_time, comfort,
        lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.w_l, g.w_v, g.l_v, v_cap, lim.dt,
        n_steps, out,
    )
    return out


def worst_case_rollout_safe(
    state: WorldState,
    profile: EvasionProfile,
    mode: FollowerMode,
    dt_fine: float = 0.01,
    lim: Limits | None = None,
    g: Geometry | None = None,
) -> bool:
    """Brute-force oracle for the analytic evasion check (see rollout_evasion_k)."""
    if dt_fine > 0.01:
        raise ValueError(f"dt_fine must be <= 0.01, got {dt_fine}")
    lim = lim or Limits()
    g = g or Geometry()
    return bool(
        rollout_evasion_k(
            state.ego.px, state.ego.py, state.ego.vx, state.ego.vy,
            state.leader.px, state.leader.vx, state.follower.px, state.follower.vx,
            profile.t1, profile.t_yf, profile.t2,
            mode == FollowerMode.AGGRESSIVE, dt_fine,
            lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.w_l, g.w_v, g.l_v, lim.dt,
        )
    )


def illustrating_scenario(
    delta_p: float = 10.0,
    speed: float = 30.0,
    lf_gap: float = 20.0,
    g: Geometry | None = None,
) -> Scenario:
    """The scripted interaction study: equal speeds, the follower starts
    closing at +4 m/s^2 at t = 2 s until its leader gap drops to 17 m, then
    holds that distance."""
    g = g or Geometry()
    ego = KinematicState(0.0, 0.0, speed, 0.0)
    leader = KinematicState(delta_p, g.w_l, speed, 0.0)
    follower = KinematicState(delta_p - lf_gap, g.w_l, speed, 0.0)
    return Scenario(
        initial=WorldState(ego, leader, follower),
        mode=FollowerMode.AGGRESSIVE,
        idm=IdmParams(v_des=2.0, h_s=6.0, t_g=1.5),
        leader=LeaderProfile(a_xl=0.0),
        follower_policy="scripted",
    )


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


class _ExactSum:
    """Shewchuk exact streaming accumulation; finalizing matches batch fsum
    bit for bit, so streaming and batch aggregation agree exactly."""

    __slots__ = ("_partials",)

    def __init__(self):
        self._partials: list[float] = []

    def add(self, x: float) -> None:
        ps = self._partials
        i = 0
        for y in ps:
            if abs(x) < abs(y):
                x, y = y, x
            hi = x + y
            lo = y - (hi - x)
            if lo != 0.0:
                ps[i] = lo
                i += 1
            x = hi
        ps[i:] = [x]

    def value(self) -> float:
        return math.fsum(self._partials)


@dataclass(frozen=True)
class Metrics:
    episodes: int
    successes: int
    collisions: int
    success_rate: Optional[float]
    collision_rate: Optional[float]
    timeout_safe_rate: Optional[float]
    mean_crossing_time: Optional[float]
    mean_final_py: Optional[float]


class MetricsAccumulator:
    """Streaming metrics with order-independent exactness (within permutations
    of the same multiset of values the final float is identical)."""

    def __init__(self):
        self.n = 0
        self.successes = 0
        self.collisions = 0
        self._cross = _ExactSum()
        self._final_py = _ExactSum()

    def add(self, collided: bool, success: bool, crossing_time: Optional[float],
            final_py: float) -> None:
        self.n += 1
        if collided:
            self.collisions += 1
        else:
            self._final_py.add(final_py)
        if success:
            self.successes += 1
            if crossing_time is None:
                raise ValueError("successful episodes must carry a crossing time")
            self._cross.add(crossing_time)

    def add_result(self, r: EpisodeResult) -> None:
        self.add(r.collided, r.success, r.crossing_time, r.final_py)

    def finalize(self) -> Metrics:
        if self.n == 0:
            return Metrics(0, 0, 0, None, None, None, None, None)
        safe = self.n - self.collisions
        return Metrics(
            episodes=self.n,
            successes=self.successes,
            collisions=self.collisions,
            success_rate=self.successes / self.n,
            collision_rate=self.collisions / self.n,
            timeout_safe_rate=(self.n - self.successes - self.collisions) / self.n,
            mean_crossing_time=(self._cross.value() / self.successes) if self.successes else None,
            mean_final_py=(self._final_py.value() / safe) if safe else None,
        )


def aggregate(results: Iterable[EpisodeResult]) -> Metrics:
    """Success/collision rates over all episodes, mean crossing time over the
    successful ones, mean final lateral position over the non-collided ones."""
    acc = MetricsAccumulator()
    for r in results:
        acc.add_result(r)
    return acc.finalize()


def aggregate_rows(out: np.ndarray) -> Metrics:
    """Same aggregation directly over a run_batch outcome array."""
    acc = MetricsAccumulator()
    for i in range(out.shape[0]):
        collided = out[i, 0] > 0.5
        crossed = out[i, 2] > 0.5
        success = crossed and not collided
        cross_t = out[i, 3] if out[i, 3] >= 0.0 else None
        acc.add(collided, success, cross_t, out[i, 4])
    return acc.finalize()
