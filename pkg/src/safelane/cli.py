"""Command-line harness.

Subcommands compose through files: ``synth`` writes datasets, ``train`` turns
them into model files, ``run``/``experiment``/``assess-sweep``/``replay``
consume the models. Every command is reproducible from (config, seed):
re-running writes byte-identical outputs. A flat INI config file can supply
defaults per command section; explicit flags override it.
"""
from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from ._accel import set_worker_threads
from .assessor import (
    ASSESSOR_FEATURES,
    ASSESSOR_LABELS,
    synth_assessor_dataset,
)
from .core import Geometry, KinematicState, Limits, WorldState
from .drivers import IdmParams, LeaderProfile
from .mlp import MlpModel, load_model, save_model, train_mlp
from .planners import (
    PLANNER_FEATURES,
    PLANNER_LABELS,
    MpcConfig,
    load_dataset,
    save_dataset,
    synth_dataset,
)
from .replay import load_trace, run_replay
from .safety import FollowerMode
from .sim import (
    ASSESS_CODES,
    EXPERIMENT_CLASSES,
    PLANNER_CODES,
    TRAJ_COLUMNS,
    EpisodeResult,
    Scenario,
    aggregate_rows,
    illustrating_scenario,
    run_batch,
    run_episode,
    sample_scenarios,
)

MODEL_FILES = {"ax": "planner_ax.json", "ay": "planner_ay.json", "assessor": "assessor.json"}

_STRATEGY_NAMES = {-1: "-", 0: "proceed", 1: "hesitate", 2: "abort"}
_MODE_NAMES = {-1: "-", 0: "cautious", 1: "aggressive"}

METRIC_COLUMNS = (
    "class", "planner", "assess", "episodes", "seed",
    "success_rate", "collision_rate", "timeout_safe_rate",
    "mean_crossing_time_s", "mean_final_py_m",
)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics_csv(path, rows) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(METRIC_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row[c]) for c in METRIC_COLUMNS) + "\n")


def write_trajectory_csv(path, traj) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(TRAJ_COLUMNS) + "\n")
        for row in traj:
            vals = [repr(float(v)) for v in row[:15]]
            vals.append(_STRATEGY_NAMES[int(row[15])])
            vals.append(_MODE_NAMES[int(row[16])])
            vals.append(_MODE_NAMES[int(row[17])])
            fh.write(",".join(vals) + "\n")


def load_models(models_dir, need_assessor: bool) -> dict:
    d = Path(models_dir)
    models = {}
    for key in ("ax", "ay"):
        path = d / MODEL_FILES[key]
        if not path.exists():
            raise FileNotFoundError(
                f"missing model file {path}; train it with "
                f"'safelane train --target {key} ...'"
            )
        models[key] = load_model(path)
    path = d / MODEL_FILES["assessor"]
    if path.exists():
        models["assessor"] = load_model(path)
    elif need_assessor:
        raise FileNotFoundError(
            f"missing model file {path}; train it with 'safelane train --target assessor ...'"
        )
    return models


def _print_result(r: EpisodeResult) -> None:
    print(f"collided:        {r.collided}" + (f" (t={r.collision_time:.1f} s)" if r.collided else ""))
    print(f"success:         {r.success}" + (
        f" (crossed at t={r.crossing_time:.1f} s)" if r.success else ""))
    print(f"final lateral:   {r.final_py:.3f} m")
    if r.abort_steps:
        print(f"abort steps:     {r.abort_steps} (first at t={r.first_abort_time:.1f} s)")
    if r.hesitate_steps:
        print(f"hesitate steps:  {r.hesitate_steps}")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.kind == "planner":
        x, y = synth_dataset(args.n, args.seed)
        save_dataset(args.out, x, y, PLANNER_FEATURES, PLANNER_LABELS)
    else:
        x, y = synth_assessor_dataset(args.n, args.seed)
        save_dataset(args.out, x, y, ASSESSOR_FEATURES, ASSESSOR_LABELS)
    print(f"wrote {x.shape[0]} records to {args.out}")
    return 0


def cmd_train(args) -> int:
    n_features = 5 if args.target == "assessor" else 7
    x, y, _names = load_dataset(args.data, n_features=n_features)
    if args.target == "ax":
        y = y[:, 0:1]
    elif args.target == "ay":
        y = y[:, 1:2]
    n_out = y.shape[1]
    model = MlpModel.init(n_features, n_out, seed=args.seed)
    model.set_normalization(x, y)
    model = train_mlp(x, y, model, epochs=args.epochs, lr=args.lr, batch=args.batch,
                      seed=args.seed + 1)
    if args.finetune_epochs > 0:
        model = train_mlp(x, y, model, epochs=args.finetune_epochs, lr=args.finetune_lr,
                          batch=args.batch, seed=args.seed + 2)
    save_model(model, args.out)
    print(f"trained {args.target} on {x.shape[0]} records -> {args.out}")
    return 0


def _build_scenario(args, g: Geometry) -> Scenario:
    if args.scenario == "illustrating":
        return illustrating_scenario(delta_p=args.delta_p, g=g)
    klass = EXPERIMENT_CLASSES[args.klass]
    row = sample_scenarios(1, args.seed, klass)[0]
    ego = KinematicState(0.0, 0.0, row[0], 0.0)
    leader = KinematicState(row[1], g.w_l, row[2], 0.0)
    follower = KinematicState(row[3], g.w_l, row[4], 0.0)
    return Scenario(
        initial=WorldState(ego, leader, follower),
        mode=FollowerMode.AGGRESSIVE if row[9] > 0.5 else FollowerMode.CAUTIOUS,
        idm=IdmParams(v_des=row[8], h_s=row[6], t_g=row[7]),
        leader=LeaderProfile(a_xl=row[5]),
        seed=args.seed,
    )


def cmd_run(args) -> int:
    need_models = args.planner in ("nn", "safenn")
    models = None
    if need_models:
        models = load_models(args.models_dir, args.planner == "safenn" and args.assess == "learned")
    sc = _build_scenario(args, Geometry())
    r = run_episode(sc, planner=args.planner, assess_mode=args.assess, models=models,
                    a_th=args.a_th)
    print(f"planner={args.planner} assess={args.assess} scenario={args.scenario}")
    _print_result(r)
    if args.traj_out:
        write_trajectory_csv(args.traj_out, r.trajectory)
        print(f"trajectory -> {args.traj_out}")
    return 0


def _class_label(k) -> str:
    return (f"a_xl in [{k.a_xl_range[0]:g},{k.a_xl_range[1]:g}], "
            f"dp in [{k.delta_p_range[0]:g},{k.delta_p_range[1]:g}]")


def _parse_range(text, name):
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ValueError(f"{name} must be 'LO,HI', got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    if hi < lo:
        raise ValueError(f"{name}: need LO <= HI, got {text!r}")
    return lo, hi


def cmd_experiment(args) -> int:
    if args.klass == "custom":
        if not args.a_xl_range or not args.dp_range:
            raise ValueError("--class custom requires --a-xl-range and --dp-range")
        from .sim import ExperimentClass

        custom = ExperimentClass(
            _parse_range(args.a_xl_range, "--a-xl-range"),
            _parse_range(args.dp_range, "--dp-range"),
        )
        classes = {"custom": custom}
    elif args.klass == "all":
        classes = dict(EXPERIMENT_CLASSES)
    else:
        classes = {int(args.klass): EXPERIMENT_CLASSES[int(args.klass)]}
    planners = list(PLANNER_CODES) if args.planner == "all" else [args.planner]
    need_nn = any(p in ("nn", "safenn") for p in planners)
    models = None
    if need_nn:
        models = load_models(args.models_dir, "safenn" in planners and args.assess == "learned")
    if args.workers:
        set_worker_threads(args.workers)
    rows = []
    for klass_id, klass in classes.items():
        seed_offset = klass_id if isinstance(klass_id, int) else 0
        scen = sample_scenarios(args.n, args.seed + seed_offset, klass)
        for planner in planners:
            out = run_batch(scen, planner, args.assess, models, a_th=args.a_th)
            m = aggregate_rows(out)
            rows.append({
                "class": klass_id, "planner": planner, "assess": args.assess,
                "episodes": m.episodes, "seed": args.seed,
                "success_rate": m.success_rate, "collision_rate": m.collision_rate,
                "timeout_safe_rate": m.timeout_safe_rate,
                "mean_crossing_time_s": m.mean_crossing_time,
                "mean_final_py_m": m.mean_final_py,
            })
    if args.out:
        write_metrics_csv(args.out, rows)
    hdr = f"{'class':>5}  {'planner':<7} {'lane-change time':>16} {'final lateral pos':>18} {'success rate':>13} {'collision rate':>15}"
    print(hdr)
    print("-" * len(hdr))
    for row in rows:
        tc = f"{row['mean_crossing_time_s']:.2f} s" if row["mean_crossing_time_s"] is not None else "-"
        fp = f"{row['mean_final_py_m']:.2f} m" if row["mean_final_py_m"] is not None else "-"
        print(f"{str(row['class']):>6}  {row['planner']:<7} {tc:>16} {fp:>18} "
              f"{100 * row['success_rate']:>12.2f}% {100 * row['collision_rate']:>14.2f}%")
    for klass_id, klass in classes.items():
        print(f"class {klass_id}: {_class_label(klass)}")
    if args.out:
        print(f"metrics -> {args.out}")
    return 0


def assess_sweep_table(model: MlpModel, n: int, seed: int, a_th_values) -> list[dict]:
    """Uncertain/error rates per (difficulty, a_th) on a fresh IDM-labeled set.

    Difficulty partitions on the label separation |a1* - a0*|: easy > 0.5,
    medium in (0.25, 0.5], hard <= 0.25. The observed acceleration is the
    true-mode label (mode sampled 50/50); errors are definite-but-wrong
    classifications counted over all records of the partition.
    """
    x, y = synth_assessor_dataset(n, seed)
    rng = np.random.default_rng(seed + 1)
    true_aggressive = rng.integers(0, 2, n).astype(bool)
    a_obs = np.where(true_aggressive, y[:, 1], y[:, 0])
    # raw head outputs: clamping can tie the two hypotheses exactly, which
    # would smear the zero-threshold column into spurious uncertainty
    pred = model.forward(x)
    a1, a0 = pred[:, 0], pred[:, 1]
    delta = np.abs(y[:, 0] - y[:, 1])
    parts = {
        "easy": delta > 0.5,
        "medium": (delta > 0.25) & (delta <= 0.5),
        "hard": delta <= 0.25,
    }
    d1 = np.abs(a_obs - a1)
    d0 = np.abs(a_obs - a0)
    rows = []
    for name, mask in parts.items():
        total = int(mask.sum())
        for a_th in a_th_values:
            cautious = d1[mask] < d0[mask] - a_th
            aggressive = d0[mask] < d1[mask] - a_th
            uncertain = ~(cautious | aggressive)
            wrong = (cautious & true_aggressive[mask]) | (aggressive & ~true_aggressive[mask])
            rows.append({
                "difficulty": name,
                "a_th": a_th,
                "n": total,
                "uncertain_rate": float(uncertain.mean()) if total else None,
                "error_rate": float(wrong.mean()) if total else None,
            })
    return rows


def cmd_assess_sweep(args) -> int:
    model = load_models(args.models_dir, need_assessor=True)["assessor"]
    a_th_values = [float(v) for v in args.a_th.split(",")]
    if any(v < 0 for v in a_th_values):
        raise ValueError("a_th values must be >= 0")
    rows = assess_sweep_table(model, args.n, args.seed, a_th_values)
    if args.out:
        with open(args.out, "w", encoding="ascii") as fh:
            fh.write("difficulty,a_th,n,uncertain_rate,error_rate\n")
            for r in rows:
                fh.write(f"{r['difficulty']},{_fmt(r['a_th'])},{r['n']},"
                         f"{_fmt(r['uncertain_rate'])},{_fmt(r['error_rate'])}\n")
    print(f"{'difficulty':<10} {'a_th':>6} {'uncertain':>10} {'error':>8}")
    for r in rows:
        print(f"{r['difficulty']:<10} {r['a_th']:>6.2f} {100 * r['uncertain_rate']:>9.2f}% "
              f"{100 * r['error_rate']:>7.2f}%")
    if args.out:
        print(f"table -> {args.out}")
    return 0


def cmd_replay(args) -> int:
    need_models = args.planner in ("nn", "safenn")
    models = None
    if need_models:
        models = load_models(args.models_dir, args.planner == "safenn" and args.assess == "learned")
    trace = load_trace(args.trace)
    r = run_replay(trace, planner=args.planner, assess_mode=args.assess, models=models,
                   a_th=args.a_th, ego_vx0=args.ego_v0)
    print(f"replayed {args.trace} over {trace.n_steps} steps")
    _print_result(r)
    if args.out:
        write_trajectory_csv(args.out, r.trajectory)
        print(f"trajectory -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _add_common(p, *, models=False):
    p.add_argument("--config", default=None, help="INI config file; flags override its values")
    p.add_argument("--seed", type=int, default=None, help="random seed (default 0)")
    if models:
        p.add_argument("--models-dir", default=None,
                       help="directory holding planner_ax/planner_ay/assessor model files")


_DEFAULTS = {
    "synth": {"kind": "planner", "n": 1000, "seed": 0, "out": "dataset.csv"},
    "train": {"target": "ax", "epochs": 40, "lr": 1e-3, "batch": 256, "seed": 0,
              "finetune_epochs": 15, "finetune_lr": 2e-4, "out": "model.json",
              "data": "dataset.csv"},
    "run": {"planner": "safenn", "assess": "learned", "scenario": "random", "klass": 1,
            "seed": 0, "a_th": 0.5, "delta_p": 10.0, "models_dir": "models",
            "traj_out": None},
    "experiment": {"klass": "all", "planner": "all", "assess": "learned", "n": 20000,
                   "seed": 0, "a_th": 0.5, "workers": 0, "models_dir": "models",
                   "out": None, "a_xl_range": None, "dp_range": None},
    "assess_sweep": {"n": 50000, "seed": 0, "a_th": "0,0.15,0.25,0.5,1.0",
                     "models_dir": "models", "out": None},
    "replay": {"planner": "safenn", "assess": "always-aggressive", "a_th": 0.5,
               "ego_v0": None, "models_dir": "models", "out": None, "trace": None},
}


def _apply_config(args, command: str) -> None:
    """Resolution order: builtin default < config file < explicit flag."""
    section = command.replace("-", "_")
    file_vals = {}
    if args.config:
        cp = configparser.ConfigParser()
        read = cp.read(args.config)
        if not read:
            raise FileNotFoundError(f"config file not found: {args.config}")
        if cp.has_section(section):
            file_vals = dict(cp.items(section))
    for name, default in _DEFAULTS[section].items():
        if getattr(args, name, None) is not None:
            continue
        if name in file_vals:
            raw = file_vals[name]
            if isinstance(default, bool):
                val = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                val = int(raw)
            elif isinstance(default, float):
                val = float(raw)
            else:
                val = raw
            setattr(args, name, val)
        else:
            setattr(args, name, default)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="safelane",
        description="safety-verified lane-change planning: data synthesis, training, and evaluation",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="synthesize a labeled dataset file")
    _add_common(p)
    p.add_argument("--kind", choices=("planner", "assessor"), default=None)
    p.add_argument("--n", type=int, default=None,
                   help="planner: scenario count; assessor: record count")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a dataset file")
    _add_common(p)
    p.add_argument("--data", default=None)
    p.add_argument("--target", choices=("ax", "ay", "assessor"), default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch", type=int, default=None)
    p.add_argument("--finetune-epochs", type=int, default=None, dest="finetune_epochs")
    p.add_argument("--finetune-lr", type=float, default=None, dest="finetune_lr")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="run a single episode")
    _add_common(p, models=True)
    p.add_argument("--planner", choices=tuple(PLANNER_CODES), default=None)
    p.add_argument("--assess", choices=tuple(ASSESS_CODES), default=None)
    p.add_argument("--scenario", choices=("random", "illustrating"), default=None)
    p.add_argument("--class", dest="klass", type=int, choices=(1, 2, 3, 4), default=None)
    p.add_argument("--a-th", dest="a_th", type=float, default=None)
    p.add_argument("--delta-p", dest="delta_p", type=float, default=None,
                   help="ego-to-leader gap for the illustrating scenario")
    p.add_argument("--traj-out", dest="traj_out", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("experiment", help="batch Monte Carlo evaluation")
    _add_common(p, models=True)
    p.add_argument("--class", dest="klass", choices=("all", "1", "2", "3", "4", "custom"),
                   default=None, help="experiment class preset, or custom with explicit ranges")
    p.add_argument("--a-xl-range", dest="a_xl_range", default=None,
                   help="custom class leader-acceleration range 'LO,HI'")
    p.add_argument("--dp-range", dest="dp_range", default=None,
                   help="custom class initial leader-gap range 'LO,HI'")
    p.add_argument("--planner", choices=tuple(PLANNER_CODES) + ("all",), default=None)
    p.add_argument("--assess", choices=tuple(ASSESS_CODES), default=None)
    p.add_argument("--n", type=int, default=None, help="episodes per (class, planner)")
    p.add_argument("--a-th", dest="a_th", type=float, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None, help="metrics CSV path")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("assess-sweep", help="aggressiveness-assessment sensitivity table")
    _add_common(p, models=True)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--a-th", dest="a_th", default=None,
                   help="comma-separated threshold list")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_assess_sweep)

    p = sub.add_parser("replay", help="drive the ego planner against a recorded trace")
    _add_common(p, models=True)
    p.add_argument("--trace", default=None, required=False)
    p.add_argument("--planner", choices=tuple(PLANNER_CODES), default=None)
    p.add_argument("--assess", choices=("learned", "always-aggressive"), default=None)
    p.add_argument("--a-th", dest="a_th", type=float, default=None)
    p.add_argument("--ego-v0", dest="ego_v0", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_replay)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        _apply_config(args, args.command)
        if args.command == "replay" and not args.trace:
            raise ValueError("replay requires --trace (or a trace entry in the config file)")
        return args.func(args)
    except (ValueError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
