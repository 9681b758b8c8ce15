"""Trajectory planners: a sampling-based MPC baseline (also the training-label
generator) and the pair of feed-forward neural planners.

Both planners see the same 7 relative-coordinate features; the MPC enumerates
bang-bang lateral profiles crossed with constant longitudinal accelerations,
rolls them out against constant-velocity predictions of the other vehicles,
filters on action bounds and the leading p_m gap, and picks the cheapest
candidate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit, prange
from .core import Action, Geometry, Limits, WorldState
from .core import step_state
from .drivers import follower_accel_k, leader_accel_k
from .mlp import MlpModel, mlp_eval_k, train_mlp

__all__ = [
    "PLANNER_FEATURES",
    "SENSING_RANGE",
    "PlannerInput",
    "MpcConfig",
    "encode_input",
    "plan_mpc",
    "plan_nn",
    "synth_dataset",
    "save_dataset",
    "load_dataset",
    "train_mlp",
]

# feature column order, also the dataset file header
PLANNER_FEATURES = ("py", "vx", "vy", "gap_lead", "v_xl", "gap_follow", "v_xf")
PLANNER_LABELS = ("ax", "ay")

# gap features saturate at the sensing range so distant traffic looks like
# free road to the networks instead of an out-of-distribution input
SENSING_RANGE = 200.0


@dataclass(frozen=True)
class MpcConfig:
    """Enumeration grids, cost weights, and comfort bound for the sampling MPC."""

    horizon: int = 30
    switch_times: np.ndarray = field(
        default_factory=lambda: np.round(np.arange(0.0, 3.0 + 1e-9, 0.1), 10)
    )
    ax_candidates: np.ndarray = field(
        default_factory=lambda: np.round(np.arange(-6.0, 4.0 + 1e-9, 0.5), 10)
    )
    w_effort_x: float = 1.0
    w_effort_y: float = 1.0
    w_progress: float = 2.0
    w_time: float = 0.0
    comfort_max_delta: float = 6.0

    def __post_init__(self):
        if self.horizon <= 0 or len(self.switch_times) == 0 or len(self.ax_candidates) == 0:
            raise ValueError("MPC grids must be non-empty and horizon positive")
        if min(self.w_effort_x, self.w_effort_y, self.w_progress, self.w_time) < 0.0:
            raise ValueError("cost weights must be >= 0")


@njit(cache=True)
def clip_gap(gap):
    if gap > SENSING_RANGE:
        return SENSING_RANGE
    if gap < -SENSING_RANGE:
        return -SENSING_RANGE
    return gap


@dataclass(frozen=True)
class PlannerInput:
    """The 7 shared planner features (relative longitudinal coordinates)."""

    py: float
    vx: float
    vy: float
    gap_lead: float
    v_xl: float
    gap_follow: float
    v_xf: float

    @classmethod
    def from_world(cls, w: WorldState) -> "PlannerInput":
        return cls(*(float(v) for v in encode_input(w)))

    def as_array(self) -> np.ndarray:
        return np.array([self.py, self.vx, self.vy, self.gap_lead, self.v_xl,
                         self.gap_follow, self.v_xf])


def encode_input(w: WorldState) -> np.ndarray:
    """7 planner features in relative coordinates (translation invariant in px;
    gaps clipped to the sensing range)."""
    return np.array(
        [
            w.ego.py,
            w.ego.vx,
            w.ego.vy,
            clip_gap(w.leader.px - w.ego.px),
            w.leader.vx,
            clip_gap(w.ego.px - w.follower.px),
            w.follower.vx,
        ],
        dtype=np.float64,
    )


@njit(cache=True)
def _damp(vy, dt, a_ym):
    ay = -vy / dt
    if ay < -a_ym:
        return -a_ym
    if ay > a_ym:
        return a_ym
    return ay


@njit(cache=False)  # calls kernels from other modules; disk cache unsafe
def mpc_plan_k(e_py, e_vx, e_vy, gap_lead, l_vx, gap_follow, f_vx,
               switch_times, ax_grid, horizon, dt,
               w_ex, w_ey, w_prog, w_time, comfort,
               a_xa, a_xd, a_ym, p_m, w_l, y_crossed):
    """Enumerate (lateral switch time x constant ax) candidates and return the
    first action of the cheapest feasible one, or hard braking with lateral
    damping when nothing is feasible. Other vehicles are predicted at constant
    velocity; the p_m feasibility filter applies to the leading gap (the ego
    cannot enforce its rear gap against the follower's choices, so this
    baseline leaves the follower interaction to whoever wraps it). Works in
    ego-relative longitudinal coordinates.
    """
    best_cost = np.inf
    best_ax = -a_xd
    best_ay = _damp(e_vy, dt, a_ym)
    found = False
    lateral_flip = 2.0 * a_ym

    for si in range(len(switch_times)):
        t_s = switch_times[si]
        if lateral_flip > comfort and t_s > 0.0:
            continue
        for ai in range(len(ax_grid)):
            ax_c = ax_grid[ai]
            if ax_c < -a_xd or ax_c > a_xa:
                continue
            px = 0.0
            py = e_py
            vx = e_vx
            vy = e_vy
            lp = gap_lead
            cost = 0.0
            feasible = True
            first_ay = 0.0
            for k in range(horizon):
                tk = k * dt
                if tk < t_s - 1e-9:
                    ay = a_ym
                else:
                    ay = _damp(vy, dt, a_ym)
                if k == 0:
                    first_ay = ay
                px, py, vx, vy = step_state(px, py, vx, vy, ax_c, ay, dt)
                lp += l_vx * dt
                if lp - px < p_m:
                    feasible = False
                    break
                cost += w_ex * ax_c * ax_c + w_ey * ay * ay + w_prog * (py - w_l) * (py - w_l)
                if w_time > 0.0 and py < y_crossed:
                    cost += w_time
            if feasible and cost < best_cost:
                best_cost = cost
                best_ax = ax_c
                best_ay = first_ay
                found = True
    return best_ax, best_ay, found


def plan_mpc(w: WorldState, cfg: MpcConfig, lim: Limits | None = None, g: Geometry | None = None) -> Action:
    """Sampling-based MPC action for one control step."""
    lim = lim or Limits()
    g = g or Geometry()
    ax, ay, _ = mpc_plan_k(
        w.ego.py, w.ego.vx, w.ego.vy,
        w.leader.px - w.ego.px, w.leader.vx,
        w.ego.px - w.follower.px, w.follower.vx,
        np.asarray(cfg.switch_times, dtype=np.float64),
        np.asarray(cfg.ax_candidates, dtype=np.float64),
        cfg.horizon, lim.dt,
        cfg.w_effort_x, cfg.w_effort_y, cfg.w_progress, cfg.w_time, cfg.comfort_max_delta,
        lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.w_l, g.y_crossed,
    )
    return Action(float(ax), float(ay))


def plan_nn(w: WorldState, m_long: MlpModel, m_lat: MlpModel, lim: Limits | None = None) -> Action:
    """Neural planner action: forward both nets on the shared features and clamp."""
    lim = lim or Limits()
    x = encode_input(w)
    out = np.empty(1)
    mlp_eval_k(m_long.pack(), 7, 1, x, out)
    ax = out[0]
    mlp_eval_k(m_lat.pack(), 7, 1, x, out)
    ay = out[0]
    return lim.clamp_action(ax, ay)


@njit(cache=False, parallel=True)  # calls kernels from other modules; disk cache unsafe
def _synth_batch_k(scen, switch_times, ax_grid, horizon, n_steps,
                   w_ex, w_ey, w_prog, w_time, comfort,
                   a_xa, a_xd, a_ym, p_m, w_l, w_v, l_v, v_cap, dt,
                   records, counts):
    """Roll each scenario under the MPC and emit one (features, ax, ay) record
    per step until collision or the horizon; post-completion lane keeping is
    part of the label distribution."""
    y_crossed = 0.5 * (w_l + w_v)
    n = scen.shape[0]
    for i in prange(n):
        e_px = 0.0
        e_py = 0.0
        e_vx = scen[i, 0]
        e_vy = 0.0
        l_px = scen[i, 1]
        l_vx = scen[i, 2]
        f_px = scen[i, 3]
        f_vx = scen[i, 4]
        a_xl = scen[i, 5]
        h_s = scen[i, 6]
        t_g = scen[i, 7]
        v_sur = scen[i, 8]
        aggressive = scen[i, 9] > 0.5
        cnt = 0
        for k in range(n_steps):
            ax, ay, _ = mpc_plan_k(
                e_py, e_vx, e_vy, l_px - e_px, l_vx, e_px - f_px, f_vx,
                switch_times, ax_grid, horizon, dt,
                w_ex, w_ey, w_prog, w_time, comfort,
                a_xa, a_xd, a_ym, p_m, w_l, y_crossed,
            )
            records[i, cnt, 0] = e_py
            records[i, cnt, 1] = e_vx
            records[i, cnt, 2] = e_vy
            records[i, cnt, 3] = clip_gap(l_px - e_px)
            records[i, cnt, 4] = l_vx
            records[i, cnt, 5] = clip_gap(e_px - f_px)
            records[i, cnt, 6] = f_vx
            records[i, cnt, 7] = ax
            records[i, cnt, 8] = ay
            cnt += 1
            fa = follower_accel_k(f_px, f_vx, e_px, e_vx, l_px, l_vx,
                                  aggressive, v_sur, h_s, t_g, a_xa, a_xd)
            la = leader_accel_k(l_vx, a_xl, v_cap, dt)
            e_px, e_py, e_vx, e_vy = step_state(e_px, e_py, e_vx, e_vy, ax, ay, dt)
            l_px, _, l_vx, _ = step_state(l_px, 0.0, l_vx, 0.0, la, 0.0, dt)
            f_px, _, f_vx, _ = step_state(f_px, 0.0, f_vx, 0.0, fa, 0.0, dt)
            if abs(e_px - l_px) < l_v and abs(e_py - w_l) < w_v:
                break
            if abs(e_px - f_px) < l_v and abs(e_py - w_l) < w_v:
                break
        counts[i] = cnt


def sample_synth_scenarios(n: int, seed: int,
                           a_xl_range=(-6.0, 4.0), dp_range=(7.0, 37.0),
                           stream_v_range=(22.0, 30.0), v_jitter=2.5,
                           rear_gap_range=(4.0, 23.0)) -> np.ndarray:
    """Randomized scenario array shared by dataset synthesis and experiments.

    Speeds are a shared stream speed plus a per-vehicle jitter, so relative
    speeds stay within everyday car-following bounds. The follower starts
    behind the ego (the insertion slot sits ahead of it), so the implied
    leader-follower gap is delta_p plus the sampled rear gap.
    Columns: e_vx0, l_px0, l_vx0, f_px0, f_vx0, a_xl, h_s, t_g, v_sur, aggressive.
    """
    rng = np.random.default_rng(seed)
    out = np.empty((n, 10))
    stream = rng.uniform(stream_v_range[0], stream_v_range[1], n)
    out[:, 0] = stream + rng.uniform(-v_jitter, v_jitter, n)      # ego speed
    dp = rng.uniform(dp_range[0], dp_range[1], n)
    out[:, 1] = dp                                                # leader position
    out[:, 2] = stream + rng.uniform(-v_jitter, v_jitter, n)      # leader speed
    rear = rng.uniform(rear_gap_range[0], rear_gap_range[1], n)
    out[:, 3] = -rear                                             # follower position
    out[:, 4] = stream + rng.uniform(-v_jitter, v_jitter, n)      # follower speed
    out[:, 5] = rng.uniform(a_xl_range[0], a_xl_range[1], n)      # leader accel
    out[:, 6] = rng.uniform(5.0, 8.0, n)                          # IDM jam spacing
    out[:, 7] = rng.uniform(1.0, 2.0, n)                          # IDM time gap
    out[:, 8] = rng.uniform(0.0, 5.0, n)                          # desired-speed surplus
    out[:, 9] = rng.integers(0, 2, n).astype(np.float64)          # aggressive flag
    return out


def synth_dataset(n_scenarios: int, seed: int, cfg: MpcConfig | None = None,
                  lim: Limits | None = None, g: Geometry | None = None,
                  n_steps: int = 100, v_cap: float = 40.0):
    """Label generator: MPC-driven episodes over randomized easy-class scenarios.

    Returns (X, Y): X is (n, 7) features, Y is (n, 2) accelerations, one row
    per executed control step, deterministic for a given seed.
    """
    if n_scenarios <= 0:
        raise ValueError("n_scenarios must be positive")
    cfg = cfg or MpcConfig()
    lim = lim or Limits()
    g = g or Geometry()
    scen = sample_synth_scenarios(n_scenarios, seed)
    records = np.zeros((n_scenarios, n_steps, 9))
    counts = np.zeros(n_scenarios, dtype=np.int64)
    _synth_batch_k(
        scen,
        np.asarray(cfg.switch_times, dtype=np.float64),
        np.asarray(cfg.ax_candidates, dtype=np.float64),
        cfg.horizon, n_steps,
        cfg.w_effort_x, cfg.w_effort_y, cfg.w_progress, cfg.w_time, cfg.comfort_max_delta,
        lim.a_xa, lim.a_xd, lim.a_ym, lim.p_m, g.w_l, g.w_v, g.l_v, v_cap, lim.dt,
        records, counts,
    )
    rows = [records[i, : counts[i]] for i in range(n_scenarios)]
    data = np.concatenate(rows, axis=0)
    return data[:, :7], data[:, 7:9]


def save_dataset(path, x: np.ndarray, y: np.ndarray, feature_names=None, label_names=None) -> None:
    """Line-delimited numeric records with one header line; repr floats so the
    bytes are reproducible."""
    feature_names = feature_names or PLANNER_FEATURES
    label_names = label_names or PLANNER_LABELS
    if x.shape[1] != len(feature_names) or y.shape[1] != len(label_names):
        raise ValueError("column count does not match header names")
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(list(feature_names) + list(label_names)) + "\n")
        for i in range(x.shape[0]):
            vals = [repr(float(v)) for v in x[i]] + [repr(float(v)) for v in y[i]]
            fh.write(",".join(vals) + "\n")


def load_dataset(path, n_features: int | None = None):
    """Read a dataset file back into (X, Y, header). Raises with the offending
    line number on malformed input."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError(f"{path}: empty file, expected a header line")
        names = header.split(",")
        width = len(names)
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: non-numeric field ({e})") from e
    data = np.asarray(rows, dtype=np.float64)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    if n_features is None:
        n_features = width - 2 if width > 2 else width - 1
    return data[:, :n_features], data[:, n_features:], names
