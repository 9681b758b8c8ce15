"""Replay of externally recorded surrounding-vehicle trajectories.

A trace provides time-stamped longitudinal positions and velocities for the
leader and the follower; both are resampled to the 0.1 s control grid by
linear interpolation and the ego planner is driven against them. Replaying a
trace extracted from a simulated episode reproduces that episode exactly,
because the planner only sees world states.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Geometry, Limits, rects_collide, step_state
from .decision import decide_k
from .mlp import mlp_eval_k
from .planners import MpcConfig, clip_gap, mpc_plan_k
from .assessor import classify_k, predict_accels_k
from .sim import ASSESS_CODES, PLANNER_CODES, EpisodeResult, TRAJ_COLUMNS

__all__ = ["ReplayTrace", "load_trace", "save_trace", "trace_from_trajectory", "run_replay"]

TRACE_COLUMNS = ("t", "actor", "px", "vx")
ACTORS = ("leader", "follower")


@dataclass(frozen=True)
class ReplayTrace:
    """Resampled leader/follower motion on the control grid."""

    times: np.ndarray
    leader_px: np.ndarray
    leader_vx: np.ndarray
    follower_px: np.ndarray
    follower_vx: np.ndarray

    def __post_init__(self):
        n = len(self.times)
        for name in ("leader_px", "leader_vx", "follower_px", "follower_vx"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trace column {name} has wrong length")
        if n < 2:
            raise ValueError("trace needs at least two samples")

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1


def _resample(t_raw, v_raw, grid):
    return np.interp(grid, t_raw, v_raw)


def load_trace(path, dt: float = 0.1) -> ReplayTrace:
    """Parse a trace CSV (t, actor, px, vx) and resample it to the dt grid.

    Timestamps must be strictly increasing per actor; malformed lines raise
    with the offending line number.
    """
    rows = {"leader": [], "follower": []}
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header.split(",") != list(TRACE_COLUMNS):
            raise ValueError(f"{path}:1: expected header {','.join(TRACE_COLUMNS)!r}, got {header!r}")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            actor = parts[1]
            if actor not in ACTORS:
                raise ValueError(f"{path}:{lineno}: unknown actor {actor!r}")
            try:
                t, px, vx = float(parts[0]), float(parts[2]), float(parts[3])
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: non-numeric field ({e})") from e
            rows[actor].append((t, px, vx))
    for actor in ACTORS:
        if len(rows[actor]) < 2:
            raise ValueError(f"{path}: actor {actor!r} needs at least two samples")
        ts = [r[0] for r in rows[actor]]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"{path}: timestamps for {actor!r} must be strictly increasing")
    t_end = min(rows["leader"][-1][0], rows["follower"][-1][0])
    t_start = max(rows["leader"][0][0], rows["follower"][0][0])
    n = int(np.floor((t_end - t_start) / dt + 1e-9))
    grid = t_start + dt * np.arange(n + 1)
    cols = {}
    for actor in ACTORS:
        arr = np.asarray(rows[actor])
        cols[actor + "_px"] = _resample(arr[:, 0], arr[:, 1], grid)
        cols[actor + "_vx"] = _resample(arr[:, 0], arr[:, 2], grid)
    return ReplayTrace(times=grid - t_start, leader_px=cols["leader_px"],
                       leader_vx=cols["leader_vx"], follower_px=cols["follower_px"],
                       follower_vx=cols["follower_vx"])


def save_trace(path, times, leader_px, leader_vx, follower_px, follower_vx) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for actor, px, vx in (("leader", leader_px, leader_vx),
                              ("follower", follower_px, follower_vx)):
            for i in range(len(times)):
                fh.write(f"{float(times[i])!r},{actor},{float(px[i])!r},{float(vx[i])!r}\n")


def trace_from_trajectory(traj: np.ndarray):
    """Extract (times, leader/follower px, vx) from an episode trajectory log."""
    c = {name: i for i, name in enumerate(TRAJ_COLUMNS)}
    return (traj[:, c["t"]], traj[:, c["leader_px"]], traj[:, c["leader_vx"]],
            traj[:, c["follower_px"]], traj[:, c["follower_vx"]])


def run_replay(
    trace: ReplayTrace,
    planner: str = "safenn",
    assess_mode: str = "always-aggressive",
    models: Optional[dict] = None,
    a_th: float = 0.5,
    ego_vx0: Optional[float] = None,
    lim: Limits | None = None,
    g: Geometry | None = None,
    cfg: MpcConfig | None = None,
) -> EpisodeResult:
    """Drive the ego planner against recorded surrounding traffic.

    The ego starts centered in the original lane at px = 0; its initial speed
    defaults to the leader's recorded speed at t = 0. The follower's observed
    acceleration (for learned assessment) comes from the recorded velocities.
    """
    lim = lim or Limits()
    g = g or Geometry()
    cfg = cfg or MpcConfig()
    if planner not in PLANNER_CODES:
        raise ValueError(f"unknown planner {planner!r}")
    if assess_mode not in ASSESS_CODES:
        raise ValueError(f"unknown assess mode {assess_mode!r}")
    if assess_mode == "oracle":
        raise ValueError("replay has no ground-truth mode; use learned or always-aggressive")
    if planner in ("nn", "safenn") and (
        models is None or models.get("ax") is None or models.get("ay") is None
    ):
        raise ValueError(f"planner {planner!r} requires trained 'ax' and 'ay' models")
    if planner == "safenn" and assess_mode == "learned" and (
        models is None or models.get("assessor") is None
    ):
        raise ValueError("learned assessment requires a trained 'assessor' model")

    code = PLANNER_CODES[planner]
    th_ax = models["ax"].pack() if code != 0 else np.zeros(1)
    th_ay = models["ay"].pack() if code != 0 else np.zeros(1)
    th_as = models["assessor"].pack() if (models and models.get("assessor")) else np.zeros(1)
    sw = np.asarray(cfg.switch_times, dtype=np.float64)
    axg = np.asarray(cfg.ax_candidates, dtype=np.float64)

    dt = lim.dt
    n_steps = trace.n_steps
    e_px, e_py = 0.0, 0.0
    e_vx = float(ego_vx0) if ego_vx0 is not None else float(trace.leader_vx[0])
    e_vy = 0.0
    prof = (0.0, 0.0, 0.0, 0.0)
    aborting = False

    y_crossed = g.y_crossed
    traj = np.zeros((n_steps + 1, len(TRAJ_COLUMNS)))
    collided = False
    col_t = None
    crossed = False
    cross_t = None
    abort_steps = 0
    first_abort = None
    hes_steps = 0
    out1 = np.empty(1)
    out2 = np.empty(2)
    end_t = 0.0

    for k in range(n_steps):
        t = k * dt
        l_px, l_vx = float(trace.leader_px[k]), float(trace.leader_vx[k])
        f_px, f_vx = float(trace.follower_px[k]), float(trace.follower_vx[k])
        strategy = -1.0
        assessed = -1.0
        if code == 0:
            ax, ay, _ = mpc_plan_k(
                e_py, e_vx, e_vy, l_px - e_px, l_vx, e_px - f_px, f_vx,
                sw, axg, cfg.horizon, dt,
                cfg.w_effort_x, cfg.w_effort_y, cfg.w_progress, cfg.w_time,
                cfg.comfort_max_delta,
                lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.w_l, y_crossed)
        else:
            x7 = np.array([e_py, e_vx, e_vy, clip_gap(l_px - e_px), l_vx,
                           clip_gap(e_px - f_px), f_vx])
            mlp_eval_k(th_ax, 7, 1, x7, out1)
            ax = min(max(out1[0], -lim.a_xd), lim.a_xa)
            mlp_eval_k(th_ay, 7, 1, x7, out1)
            ay = min(max(out1[0], -lim.a_ym), lim.a_ym)
            if code == 2:
                if ASSESS_CODES[assess_mode] == 2 or k == 0:
                    aggressive = True
                else:
                    a_obs = (f_vx - float(trace.follower_vx[k - 1])) / dt
                    x5 = np.array([e_vx, clip_gap(l_px - e_px), l_vx,
                                   clip_gap(e_px - f_px), f_vx])
                    predict_accels_k(th_as, x5, out2)
                    aggressive = classify_k(a_obs, out2[0], out2[1], a_th) != 0
                assessed = 1.0 if aggressive else 0.0
                s, ax, ay, p1, pyf, p2, pc, aborting = decide_k(
                    e_px, e_py, e_vx, e_vy, l_px, l_vx, f_px, f_vx, t,
                    prof[0], prof[1], prof[2], prof[3], aborting,
                    ax, ay, aggressive,
                    lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.y_safe, dt)
                prof = (p1, pyf, p2, pc)
                strategy = float(s)
                if s == 2:
                    abort_steps += 1
                    if first_abort is None:
                        first_abort = t
                elif s == 1:
                    hes_steps += 1
        traj[k] = (t, e_px, e_py, e_vx, e_vy, l_px, g.w_l, l_vx, 0.0,
                   f_px, g.w_l, f_vx, 0.0, ax, ay, strategy, assessed, -1.0)
        e_px, e_py, e_vx, e_vy = step_state(e_px, e_py, e_vx, e_vy, ax, ay, dt)
        end_t = (k + 1) * dt
        nl_px = float(trace.leader_px[k + 1])
        nf_px = float(trace.follower_px[k + 1])
        if rects_collide(e_px - nl_px, e_py - g.w_l, g.l_v, g.w_v) or \
           rects_collide(e_px - nf_px, e_py - g.w_l, g.l_v, g.w_v):
            collided = True
            col_t = end_t
            break
        if not crossed and e_py >= y_crossed:
            crossed = True
            cross_t = end_t

    kf = int(round(end_t / dt))
    traj[kf] = (end_t, e_px, e_py, e_vx, e_vy,
                float(trace.leader_px[kf]), g.w_l, float(trace.leader_vx[kf]), 0.0,
                float(trace.follower_px[kf]), g.w_l, float(trace.follower_vx[kf]), 0.0,
                0.0, 0.0, -1.0, -1.0, -1.0)
    return EpisodeResult(
        collided=collided,
        collision_time=col_t,
        success=crossed and not collided,
        crossing_time=cross_t,
        final_py=e_py,
        end_time=end_t,
        abort_steps=abort_steps,
        first_abort_time=first_abort,
        hesitate_steps=hes_steps,
        trajectory=traj[: kf + 1].copy(),
    )
