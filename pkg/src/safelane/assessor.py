"""Follower aggressiveness assessment.

One network with two output heads predicts the follower's acceleration under
both behavior hypotheses (a1: follows the ego, a0: follows the leader); the
observed acceleration is compared against the two predictions with a dead-band
threshold, and anything uncertain is treated as aggressive for safety.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ._accel import njit
from .core import WorldState
from .drivers import idm_accel_k
from .mlp import MlpModel, mlp_eval_k
from .safety import FollowerMode

__all__ = [
    "ASSESSOR_FEATURES",
    "BehaviorLabel",
    "AssessorInput",
    "encode_assessor_input",
    "predict_accels",
    "synth_assessor_dataset",
    "classify",
    "assess",
]

ASSESSOR_FEATURES = ("vx", "gap_lead", "v_xl", "gap_follow", "v_xf")
ASSESSOR_LABELS = ("a1", "a0")

ACCEL_LO = -6.0
ACCEL_HI = 4.0


class BehaviorLabel(IntEnum):
    CAUTIOUS = 0
    AGGRESSIVE = 1
    UNCERTAIN = 2


@dataclass(frozen=True)
class AssessorInput:
    """5 relative-coordinate features; lateral ego state is irrelevant to the follower."""

    vx: float
    gap_lead: float
    v_xl: float
    gap_follow: float
    v_xf: float

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.gap_lead, self.v_xl, self.gap_follow, self.v_xf])


def encode_assessor_input(w: WorldState) -> np.ndarray:
    from .planners import clip_gap

    return np.array(
        [
            w.ego.vx,
            clip_gap(w.leader.px - w.ego.px),
            w.leader.vx,
            clip_gap(w.ego.px - w.follower.px),
            w.follower.vx,
        ],
        dtype=np.float64,
    )


@njit(cache=True)
def classify_k(a_obs, a1, a0, a_th):
    d1 = abs(a_obs - a1)
    d0 = abs(a_obs - a0)
    if d1 < d0 - a_th:
        return 0  # cautious
    if d0 < d1 - a_th:
        return 1  # aggressive
    return 2  # uncertain


@njit(cache=True)
def predict_accels_k(theta, x, out):
    mlp_eval_k(theta, 5, 2, x, out)
    for i in range(2):
        if out[i] < ACCEL_LO:
            out[i] = ACCEL_LO
        elif out[i] > ACCEL_HI:
            out[i] = ACCEL_HI


def predict_accels(w: WorldState, m: MlpModel) -> tuple[float, float]:
    """Predicted follower accelerations (a1 if cautious, a0 if aggressive), clamped."""
    out = np.empty(2)
    predict_accels_k(m.pack(), encode_assessor_input(w), out)
    return float(out[0]), float(out[1])


def classify(a_obs: float, a1: float, a0: float, a_th: float) -> BehaviorLabel:
    """Dead-band nearest-prediction rule; ties within a_th are Uncertain."""
    if a_th < 0.0:
        raise ValueError(f"a_th must be >= 0, got {a_th}")
    return BehaviorLabel(classify_k(a_obs, a1, a0, a_th))


def assess(w: WorldState, a_obs: float, m: MlpModel, a_th: float = 0.5) -> FollowerMode:
    """Predict both hypotheses, classify, and map Uncertain to Aggressive."""
    a1, a0 = predict_accels(w, m)
    label = classify(a_obs, a1, a0, a_th)
    if label == BehaviorLabel.CAUTIOUS:
        return FollowerMode.CAUTIOUS
    return FollowerMode.AGGRESSIVE


def synth_assessor_dataset(n: int, seed: int,
                           v_range=(8.0, 36.0), gap_lead_range=(4.0, 70.0),
                           gap_follow_range=(-30.0, 50.0)):
    """Random three-vehicle states labeled with IDM accelerations under both
    predecessor hypotheses. Returns (X (n,5), Y (n,2)); deterministic per seed.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    vx = rng.uniform(*v_range, n)
    gap_lead = rng.uniform(*gap_lead_range, n)
    v_xl = rng.uniform(*v_range, n)
    gap_follow = rng.uniform(*gap_follow_range, n)
    v_xf = rng.uniform(*v_range, n)
    h_s = rng.uniform(5.0, 8.0, n)
    t_g = rng.uniform(1.0, 2.0, n)
    v_sur = rng.uniform(0.0, 5.0, n)

    x = np.stack([vx, gap_lead, v_xl, gap_follow, v_xf], axis=1)
    y = np.empty((n, 2))
    for i in range(n):
        # cautious: predecessor is the ego
        y[i, 0] = idm_accel_k(v_xf[i], gap_follow[i], v_xf[i] - vx[i],
                              vx[i] + v_sur[i], h_s[i], t_g[i], 4.0, 6.0)
        # aggressive: predecessor is the leader
        y[i, 1] = idm_accel_k(v_xf[i], gap_lead[i] + gap_follow[i], v_xf[i] - v_xl[i],
                              v_xl[i] + v_sur[i], h_s[i], t_g[i], 4.0, 6.0)
    return x, y
