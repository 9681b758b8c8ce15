"""Acceptance suite: one test per criterion, each printing a PASS line with
its measured numbers (run pytest with -s to watch them stream).

The heavyweight Monte Carlo criteria use the compiled batch runner; the whole
module runs in a few minutes on a desktop CPU.
"""
import time

import numpy as np
import pytest

from safelane.cli import assess_sweep_table, main as cli_main
from safelane.core import Geometry, Limits
from safelane.mlp import held_out_mse, mse_loss_and_grads, MlpModel
from safelane.safety import (
    EvasionProfile,
    FollowerMode,
    lateral_evasion_times,
    safe_evasion_exists,
)
from safelane.sim import (
    EXPERIMENT_CLASSES,
    aggregate_rows,
    illustrating_scenario,
    run_batch,
    run_episode,
    sample_scenarios,
    worst_case_rollout_safe,
)

from conftest import make_world, sample_world_states
from test_safety import eq3_residuals, lateral_rollout

LIM = Limits()
GEO = Geometry()


def report(criterion: int, msg: str) -> None:
    print(f"\n[criterion {criterion}] PASS: {msg}")


# ---------------------------------------------------------------------------
# 1. safety-layer soundness: zero collisions across every class under
#    always-aggressive and oracle assessment
# ---------------------------------------------------------------------------


def test_criterion_1_safety_layer_zero_collisions(models):
    episodes = 20_000
    lines = []
    for klass_id, klass in EXPERIMENT_CLASSES.items():
        scen = sample_scenarios(episodes, 1000 + klass_id, klass)
        t0 = time.perf_counter()
        for assess in ("always-aggressive", "oracle"):
            out = run_batch(scen, "safenn", assess, models)
            m = aggregate_rows(out)
            assert m.episodes == episodes
            assert m.collisions == 0, (
                f"class {klass_id} assess={assess}: {m.collisions} collisions"
            )
            lines.append(f"class {klass_id}/{assess}: 0/{episodes} collisions, "
                         f"success {100 * m.success_rate:.1f}%")
        wall = time.perf_counter() - t0
        assert wall < 900.0, f"class {klass_id} took {wall:.0f}s (> 15 min)"
        lines.append(f"class {klass_id} wall: {wall:.0f}s for both assess modes")
    report(1, "; ".join(lines))


# ---------------------------------------------------------------------------
# 2. baseline contrast in the hardest class
# ---------------------------------------------------------------------------


def test_criterion_2_baseline_contrast_hardest_class(models):
    n = 3000
    scen = sample_scenarios(n, 2040, EXPERIMENT_CLASSES[4])
    mpc = aggregate_rows(run_batch(scen, "mpc", "always-aggressive", models))
    nn = aggregate_rows(run_batch(scen, "nn", "always-aggressive", models))
    safenn = aggregate_rows(run_batch(scen, "safenn", "learned", models))
    assert mpc.collision_rate >= 0.05
    assert nn.collision_rate >= 0.05
    assert safenn.collision_rate == 0.0
    assert safenn.success_rate < nn.success_rate
    report(2, f"hard class over {n} episodes: MPC collision "
              f"{100 * mpc.collision_rate:.1f}%, NN collision {100 * nn.collision_rate:.1f}% "
              f"(both >= 5%); SafIn success {100 * safenn.success_rate:.1f}% < "
              f"NN success {100 * nn.success_rate:.1f}%")


# ---------------------------------------------------------------------------
# 3. analytic vs brute-force rollout equivalence
# ---------------------------------------------------------------------------


def test_criterion_3_analytic_vs_rollout_soundness():
    n = 10_000
    unsound = 0
    verified = 0
    conservative = 0
    absent = 0
    for w, aggressive in sample_world_states(n, seed=3001):
        mode = FollowerMode.AGGRESSIVE if aggressive else FollowerMode.CAUTIOUS
        p = safe_evasion_exists(w, mode, LIM, GEO)
        if p is not None:
            verified += 1
            if not worst_case_rollout_safe(w, p, mode, 0.01, LIM, GEO):
                unsound += 1
        else:
            absent += 1
            t1, t_yf = lateral_evasion_times(w.ego.py, w.ego.vy, LIM, GEO)
            fallback = EvasionProfile(t1, t_yf, 0.0, created_at=w.t)
            if worst_case_rollout_safe(w, fallback, mode, 0.01, LIM, GEO):
                conservative += 1
    assert verified > 1000, "sampler must exercise the verifier"
    assert unsound == 0
    frac = conservative / n
    report(3, f"{n} random states: {verified} verified profiles, 0 rollout "
              f"collisions; conservative disagreements {conservative} "
              f"({100 * frac:.1f}% of all states; no bound asserted)")


# ---------------------------------------------------------------------------
# 4. lateral evasion times satisfy their defining equations
# ---------------------------------------------------------------------------


def test_criterion_4_lateral_time_equations():
    rng = np.random.default_rng(4001)
    checked = 0
    max_r = 0.0
    max_err = 0.0
    while checked < 1000:
        py0 = float(rng.uniform(0.0, 3.5))
        vy0 = float(rng.uniform(-2.0, 2.5))
        t1, t_yf = lateral_evasion_times(py0, vy0, LIM, GEO)
        if t1 <= 0.0 or t_yf <= t1 + 1e-12:
            continue  # degenerate damping branches have no two-phase system
        r1, r2 = eq3_residuals(py0, vy0, t1, t_yf)
        assert abs(r1) <= 1e-6 and abs(r2) <= 1e-6
        py_end, vy_end = lateral_rollout(py0, vy0, t1, t_yf, dt=1e-4)
        assert abs(py_end - GEO.y_safe) <= 1e-3
        assert abs(vy_end) <= 1e-3
        max_r = max(max_r, abs(r1), abs(r2))
        max_err = max(max_err, abs(py_end - GEO.y_safe))
        checked += 1
    report(4, f"1000 random lateral states: max equation residual {max_r:.2e} "
              f"(tol 1e-6), max integrated endpoint error {max_err:.2e} m (tol 1e-3)")


# ---------------------------------------------------------------------------
# 5. assessment sensitivity trends
# ---------------------------------------------------------------------------


def test_criterion_5_assessment_threshold_trends(models):
    a_ths = [0.0, 0.15, 0.25, 0.5, 1.0]
    rows = assess_sweep_table(models["assessor"], n=50_000, seed=5001, a_th_values=a_ths)
    byd = {}
    for r in rows:
        byd.setdefault(r["difficulty"], []).append(r)
    assert set(byd) == {"easy", "medium", "hard"}
    lines = []
    for diff, rs in byd.items():
        rs = sorted(rs, key=lambda r: r["a_th"])
        unc = [r["uncertain_rate"] for r in rs]
        err = [r["error_rate"] for r in rs]
        assert rs[0]["a_th"] == 0.0
        assert unc[0] == 0.0, f"{diff}: uncertain rate at a_th=0 must be exactly 0"
        assert all(b >= a for a, b in zip(unc, unc[1:])), f"{diff}: uncertain not monotone"
        assert all(b <= a for a, b in zip(err, err[1:])), f"{diff}: error not monotone"
        lines.append(f"{diff}: uncertain {','.join(f'{100 * u:.1f}' for u in unc)}% "
                     f"error {','.join(f'{100 * e:.1f}' for e in err)}%")
    report(5, " | ".join(lines))


# ---------------------------------------------------------------------------
# 6. training sanity
# ---------------------------------------------------------------------------


def test_criterion_6_training_sanity(models):
    xte, yte = models["planner_holdout"]
    mse_ax = held_out_mse(models["ax"], xte, yte[:, 0:1])
    mse_ay = held_out_mse(models["ay"], xte, yte[:, 1:2])
    assert mse_ax <= 0.25
    assert mse_ay <= 0.25

    rng = np.random.default_rng(6001)
    x = rng.normal(size=(32, 7))
    y = rng.normal(size=(32, 1))
    m = MlpModel.init(7, 1, seed=60)
    m.set_normalization(x, y)
    _, grads = mse_loss_and_grads(m, x, y)
    eps = 1e-6
    fields = ("w1", "b1", "w2", "b2", "w3", "b3")
    checked = 0
    worst = 0.0
    while checked < 100:
        f = fields[rng.integers(len(fields))]
        arr = getattr(m, f)
        idx = tuple(rng.integers(s) for s in arr.shape)
        orig = arr[idx]
        arr[idx] = orig + eps
        lp, _ = mse_loss_and_grads(m, x, y)
        arr[idx] = orig - eps
        lm, _ = mse_loss_and_grads(m, x, y)
        arr[idx] = orig
        fd = (lp - lm) / (2 * eps)
        an = grads[f][idx]
        if abs(fd) < 1e-8 and abs(an) < 1e-8:
            continue
        rel = abs(an - fd) / max(abs(fd), abs(an))
        assert rel <= 1e-4, f"{f}{idx}: analytic {an} vs fd {fd}"
        worst = max(worst, rel)
        checked += 1
    report(6, f"held-out MSE ax {mse_ax:.3f}, ay {mse_ay:.3f} (<= 0.25); "
              f"gradient check worst relative error {worst:.1e} over 100 pairs (tol 1e-4)")


# ---------------------------------------------------------------------------
# 7. the scripted interaction study
# ---------------------------------------------------------------------------


def test_criterion_7_illustrating_example(models):
    sc = illustrating_scenario()
    nn = run_episode(sc, "nn", "always-aggressive", models)
    assert nn.collided
    assert 4.0 <= nn.collision_time <= 6.0  # reported event at t = 5, +/- 1 s

    safenn = run_episode(sc, "safenn", "learned", models)
    assert not safenn.collided
    assert safenn.abort_steps > 0
    assert 2.0 <= safenn.first_abort_time <= 4.0  # reported abort near t = 3
    strategies = safenn.trajectory[:-1, 15].astype(int)
    abort_idx = np.where(strategies == 2)[0]
    hes_after_abort = np.where((strategies == 1) &
                               (np.arange(len(strategies)) > abort_idx[-1]))[0]
    assert len(hes_after_abort) > 0, "abort must be followed by hesitation"
    report(7, f"NN-only collides at t={nn.collision_time:.1f}s (within 5±1); SafIn "
              f"aborts at t={safenn.first_abort_time:.1f}s (within 3±1), then hesitates "
              f"{safenn.hesitate_steps} steps with no collision "
              f"(final lateral {safenn.final_py:.2f} m)")


# ---------------------------------------------------------------------------
# 8. byte-level determinism of command outputs
# ---------------------------------------------------------------------------


def test_criterion_8_command_determinism(models, tmp_path):
    from safelane.mlp import save_model

    mdir = tmp_path / "models"
    mdir.mkdir()
    save_model(models["ax"], mdir / "planner_ax.json")
    save_model(models["ay"], mdir / "planner_ay.json")
    save_model(models["assessor"], mdir / "assessor.json")

    args = ["experiment", "--class", "4", "--planner", "safenn", "--assess", "learned",
            "--n", "400", "--seed", "8", "--models-dir", str(mdir)]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli_main(args + ["--out", str(a)]) == 0
    assert cli_main(args + ["--out", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()

    c, d = tmp_path / "c.csv", tmp_path / "d.csv"
    for path in (c, d):
        assert cli_main(["synth", "--kind", "planner", "--n", "40", "--seed", "8",
                         "--out", str(path)]) == 0
    assert c.read_bytes() == d.read_bytes()

    e, f = tmp_path / "e.csv", tmp_path / "f.csv"
    for path in (e, f):
        assert cli_main(["assess-sweep", "--n", "5000", "--seed", "8",
                         "--models-dir", str(mdir), "--a-th", "0,0.5",
                         "--out", str(path)]) == 0
    assert e.read_bytes() == f.read_bytes()
    report(8, "experiment (across worker counts), synth, and assess-sweep outputs "
              "are byte-identical on re-run")
