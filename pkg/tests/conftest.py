"""Shared fixtures: real trained models (cached on disk, deterministic seeds)
and world-state builders used across the suite."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from safelane.assessor import synth_assessor_dataset
from safelane.core import Geometry, KinematicState, Limits, WorldState
from safelane.mlp import MlpModel, load_model, save_model, train_mlp
from safelane.planners import synth_dataset

ARTIFACTS = Path(__file__).parent / "_artifacts"
RECIPE_TAG = "recipe-v7"

PLANNER_SYNTH = dict(n_scenarios=3000, seed=11)
PLANNER_SPLIT_SEED = 99
ASSESSOR_SYNTH = dict(n=150_000, seed=13)
ASSESSOR_SPLIT_SEED = 98

PLANNER_SCHEDULE = ((60, 1.5e-3), (30, 3e-4), (15, 1e-4))
ASSESSOR_SCHEDULE = ((40, 1e-3), (15, 2e-4))


def _split(x, y, seed, frac=0.9):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(x.shape[0])
    n_tr = int(frac * x.shape[0])
    tr, te = perm[:n_tr], perm[n_tr:]
    return x[tr], y[tr], x[te], y[te]


def _train_head(x, y, n_in, init_seed, train_seed, schedule):
    m = MlpModel.init(n_in, y.shape[1], seed=init_seed)
    m.set_normalization(x, y)
    for i, (epochs, lr) in enumerate(schedule):
        m = train_mlp(x, y, m, epochs=epochs, lr=lr, batch=256, seed=train_seed + i)
    return m


def _build_bundle() -> dict:
    x, y = synth_dataset(**PLANNER_SYNTH)
    xtr, ytr, xte, yte = _split(x, y, PLANNER_SPLIT_SEED)
    m_ax = _train_head(xtr, ytr[:, 0:1], 7, 1, 2, PLANNER_SCHEDULE)
    m_ay = _train_head(xtr, ytr[:, 1:2], 7, 4, 5, PLANNER_SCHEDULE)
    xa, ya = synth_assessor_dataset(**ASSESSOR_SYNTH)
    xatr, yatr, xate, yate = _split(xa, ya, ASSESSOR_SPLIT_SEED)
    m_as = _train_head(xatr, yatr, 5, 7, 8, ASSESSOR_SCHEDULE)
    return {
        "ax": m_ax, "ay": m_ay, "assessor": m_as,
        "planner_holdout": (xte, yte),
        "assessor_holdout": (xate, yate),
    }


@pytest.fixture(scope="session")
def models() -> dict:
    """Trained planner/assessor models plus held-out evaluation slices.

    Training is deterministic, so the artifacts are cached under
    tests/_artifacts and rebuilt only when the recipe tag changes.
    """
    ARTIFACTS.mkdir(exist_ok=True)
    stamp = ARTIFACTS / "stamp.json"
    paths = {k: ARTIFACTS / f"{k}.json" for k in ("ax", "ay", "assessor")}
    holdouts = ARTIFACTS / "holdouts.npz"
    if stamp.exists() and holdouts.exists() and all(p.exists() for p in paths.values()):
        if json.loads(stamp.read_text()).get("tag") == RECIPE_TAG:
            data = np.load(holdouts)
            return {
                **{k: load_model(p) for k, p in paths.items()},
                "planner_holdout": (data["px"], data["py_"]),
                "assessor_holdout": (data["ax_"], data["ay_"]),
            }
    bundle = _build_bundle()
    for k in ("ax", "ay", "assessor"):
        save_model(bundle[k], paths[k])
    np.savez(
        holdouts,
        px=bundle["planner_holdout"][0], py_=bundle["planner_holdout"][1],
        ax_=bundle["assessor_holdout"][0], ay_=bundle["assessor_holdout"][1],
    )
    stamp.write_text(json.dumps({"tag": RECIPE_TAG}))
    return bundle


@pytest.fixture(scope="session")
def lim() -> Limits:
    return Limits()


@pytest.fixture(scope="session")
def geom() -> Geometry:
    return Geometry()


def make_world(ego, leader, follower, t=0.0, w_l=3.5) -> WorldState:
    """(px, py, vx, vy) for ego; (px, vx) for leader/follower in the target lane."""
    return WorldState(
        ego=KinematicState(*ego),
        leader=KinematicState(leader[0], w_l, leader[1], 0.0),
        follower=KinematicState(follower[0], w_l, follower[1], 0.0),
        t=t,
    )


def sample_world_states(n: int, seed: int, w_l: float = 3.5):
    """Broad random world states (both follower modes), including states that
    are already in collision or have the follower ahead of the ego."""
    rng = np.random.default_rng(seed)
    py = rng.uniform(0.0, 3.2, n)
    vy = rng.uniform(-2.0, 2.5, n)
    vx = rng.uniform(0.0, 38.0, n)
    gap_lead = rng.uniform(2.0, 80.0, n)
    vl = rng.uniform(0.0, 38.0, n)
    gap_follow = rng.uniform(-(gap_lead - 1.0), 80.0)
    vf = rng.uniform(0.0, 38.0, n)
    aggressive = rng.integers(0, 2, n).astype(bool)
    states = []
    for i in range(n):
        states.append((
            make_world(
                (0.0, py[i], vx[i], vy[i]),
                (gap_lead[i], vl[i]),
                (-gap_follow[i], vf[i]),
                w_l=w_l,
            ),
            bool(aggressive[i]),
        ))
    return states
