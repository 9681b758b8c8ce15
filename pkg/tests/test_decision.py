import numpy as np
import pytest

from safelane.core import Action, Geometry, KinematicState, Limits, WorldState, step_kinematics
from safelane.decision import (
    DecisionState,
    Strategy,
    decide,
    hesitate_lateral,
    initial_decision_state,
)
from safelane.safety import EvasionProfile, FollowerMode, evasion_action, safe_evasion_exists
from safelane.core import collision

from conftest import make_world, sample_world_states

LIM = Limits()
GEO = Geometry()


def test_hesitate_lateral_examples():
    assert hesitate_lateral(0.1, 0.1, 2.5) == pytest.approx(-1.0)
    assert hesitate_lateral(-0.5, 0.1, 2.5) == 2.5  # clamped from +5
    assert hesitate_lateral(0.0, 0.1, 2.5) == 0.0
    with pytest.raises(ValueError):
        hesitate_lateral(0.0, 0.0, 2.5)


def _mid_change_world():
    return make_world((0, 1.2, 30, 0.8), (25, 29), (-14, 31), t=1.0)


def test_decide_stub_proceed():
    w = _mid_change_world()
    ds = initial_decision_state()
    nn = Action(1.5, 2.0)
    prof = EvasionProfile(0.1, 0.3, 0.2)
    strat, act, ds2 = decide(w, ds, nn, FollowerMode.AGGRESSIVE, LIM, GEO,
                             evasion_check=lambda _w: prof)
    assert strat == Strategy.PROCEED
    assert act == nn  # planner action verbatim
    assert ds2.last_profile.t1 == prof.t1 and ds2.last_profile.created_at == w.t + LIM.dt
    assert not ds2.aborting


def test_decide_stub_hesitate():
    w = _mid_change_world()
    ds = initial_decision_state()
    nn = Action(1.5, 2.0)
    prof = EvasionProfile(0.1, 0.3, 0.2)
    calls = []

    def check(_w):
        calls.append(1)
        return None if len(calls) == 1 else prof

    strat, act, ds2 = decide(w, ds, nn, FollowerMode.AGGRESSIVE, LIM, GEO, evasion_check=check)
    assert strat == Strategy.HESITATE
    assert act.ax == nn.ax
    assert act.ay == hesitate_lateral(w.ego.vy, LIM.dt, LIM.a_ym)
    assert len(calls) == 2


def test_decide_stub_abort_executes_stored_profile():
    w = _mid_change_world()
    stored = EvasionProfile(0.4, 0.9, 0.2, created_at=w.t)
    ds = DecisionState(stored)
    strat, act, ds2 = decide(w, ds, Action(0, 0), FollowerMode.AGGRESSIVE, LIM, GEO,
                             evasion_check=lambda _w: None)
    assert strat == Strategy.ABORT
    expected = evasion_action(stored, 0.0, w, LIM)
    assert act == expected
    assert ds2.aborting and ds2.abort_started_at == w.t
    assert ds2.last_profile == stored


def test_abort_latch_holds_until_centered():
    # ego mid-change and aborting: even a would-be-safe proceed is ignored
    w = _mid_change_world()
    ds = DecisionState(EvasionProfile(0.4, 0.9, 0.2, created_at=w.t - 0.1), aborting=True,
                       abort_started_at=w.t - 0.1)
    prof = EvasionProfile(0.1, 0.3, 0.0)
    strat, act, ds2 = decide(w, ds, Action(0, 0), FollowerMode.AGGRESSIVE, LIM, GEO,
                             evasion_check=lambda _w: prof)
    assert strat == Strategy.ABORT
    assert ds2.aborting
    # once settled back in the original lane, the latch releases
    w2 = make_world((0, GEO.y_safe - 0.1, 30, 0.0), (40, 30), (-40, 30), t=2.0)
    strat, act, ds3 = decide(w2, ds2, Action(0.5, 0.1), FollowerMode.AGGRESSIVE, LIM, GEO,
                             evasion_check=lambda _w: prof)
    assert strat == Strategy.PROCEED
    assert not ds3.aborting


def _lookahead_keeps_ordering(w):
    """The injected-check path materializes the worst-case lookahead as a
    WorldState; skip samples where the hypothetical follower would cross the
    braking leader within one step (the compiled path has no such constraint)."""
    leader = step_kinematics(w.leader, Action(-LIM.a_xd, 0.0), LIM.dt)
    follower = step_kinematics(w.follower, Action(LIM.a_xa, 0.0), LIM.dt)
    return leader.px > follower.px


def test_decide_kernel_matches_python_mirror():
    """The documented mirror path (injected verifier) reproduces the compiled path."""
    for w, aggressive in sample_world_states(120, seed=301):
        if not _lookahead_keeps_ordering(w):
            continue
        mode = FollowerMode.AGGRESSIVE if aggressive else FollowerMode.CAUTIOUS
        ds = initial_decision_state()
        nn = Action(1.0, 1.5)
        kq = decide(w, ds, nn, mode, LIM, GEO)
        py = decide(w, ds, nn, mode, LIM, GEO,
                    evasion_check=lambda ww: safe_evasion_exists(ww, mode, LIM, GEO))
        assert kq[0] == py[0]
        assert kq[1].ax == pytest.approx(py[1].ax, abs=1e-12)
        assert kq[1].ay == pytest.approx(py[1].ay, abs=1e-12)
        if kq[0] != Strategy.ABORT:
            for f in ("t1", "t_yf", "t2", "created_at"):
                assert getattr(kq[2].last_profile, f) == pytest.approx(
                    getattr(py[2].last_profile, f), abs=1e-12)


def test_decide_is_deterministic():
    w = _mid_change_world()
    ds = initial_decision_state()
    nn = Action(0.5, 1.0)
    out1 = decide(w, ds, nn, FollowerMode.AGGRESSIVE, LIM, GEO)
    out2 = decide(w, ds, nn, FollowerMode.AGGRESSIVE, LIM, GEO)
    assert out1 == out2


def test_returned_profile_verified_from_post_action_state():
    """Proceed/Hesitate must hand back a profile that re-verifies from the
    worst-case one-step lookahead state."""
    checked = 0
    for w, aggressive in sample_world_states(300, seed=302):
        if not _lookahead_keeps_ordering(w):
            continue
        mode = FollowerMode.AGGRESSIVE if aggressive else FollowerMode.CAUTIOUS
        nn = Action(0.8, 1.2)
        strat, act, ds = decide(w, initial_decision_state(), nn, mode, LIM, GEO)
        if strat == Strategy.ABORT:
            continue
        ego = step_kinematics(w.ego, act, LIM.dt)
        leader = step_kinematics(w.leader, Action(-LIM.a_xd, 0.0), LIM.dt)
        worst_f = LIM.a_xa if mode == FollowerMode.AGGRESSIVE else -LIM.a_xd
        follower = step_kinematics(w.follower, Action(worst_f, 0.0), LIM.dt)
        post = WorldState(ego, leader, follower, w.t + LIM.dt)
        prof = safe_evasion_exists(post, mode, LIM, GEO)
        assert prof is not None
        assert prof.t1 == pytest.approx(ds.last_profile.t1, abs=1e-12)
        assert prof.t_yf == pytest.approx(ds.last_profile.t_yf, abs=1e-12)
        assert prof.t2 == pytest.approx(ds.last_profile.t2, abs=1e-12)
        checked += 1
    assert checked > 50


def test_closed_loop_decide_never_collides_under_worst_case_others():
    """Drive the decision layer with a deliberately reckless planner against
    others that actually execute their worst-case bounds."""
    for seed in range(8):
        rng = np.random.default_rng(400 + seed)
        gap_l = rng.uniform(7, 30)
        gap_f = rng.uniform(7, 30)
        v = rng.uniform(20, 32)
        w = make_world((0, 0, v, 0), (gap_l, v), (-gap_f, v))
        ds = initial_decision_state()
        mode = FollowerMode.AGGRESSIVE
        for k in range(100):
            nn = Action(LIM.a_xa, LIM.a_ym)  # always push into the other lane
            strat, act, ds = decide(w, ds, nn, mode, LIM, GEO)
            ego = step_kinematics(w.ego, act, LIM.dt)
            leader = step_kinematics(w.leader, Action(-LIM.a_xd, 0.0), LIM.dt)
            follower = step_kinematics(w.follower, Action(LIM.a_xa, 0.0), LIM.dt)
            if leader.px - follower.px <= 1.0:
                break  # the adversarial pair collided with each other; scenario over
            w = WorldState(ego, leader, follower, w.t + LIM.dt)
            assert not collision(w.ego, w.leader, GEO), f"leader hit at step {k}"
            assert not collision(w.ego, w.follower, GEO), f"follower hit at step {k}"
