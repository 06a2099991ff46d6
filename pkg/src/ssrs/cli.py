"""Command-line entry point: config parsing, subcommand dispatch, seed
orchestration and output management.

Subcommands
-----------
train          run training for one or more seeds (one OS process per seed)
               and aggregate the best-score curves
eval           greedy evaluation of a trained run directory
gradcheck      verify analytic loss gradients against finite differences
augment-check  apply a named transform to a trajectory file, report entropies
rollout        dump one random-policy episode as a trajectory file
consensus      co-assignment matrix over repeated clusterings of a buffer
dist           shaped-reward histograms across buffer checkpoints
compare        mean/std of best scores across aggregated run directories

Shared flags: ``--config PATH``, ``--seed LIST``, ``--out DIR`` (default from
the ``SSRS_OUT`` environment variable, else the working directory),
``--force`` to overwrite existing outputs, and ``--set key=value``
(repeatable) for config overrides.  All CSV outputs use RFC-4180 quoting,
"\\n" line endings and 17-significant-digit decimal floats.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .analysis import best_score_series, reward_distribution, trajectory_consensus
from .augment import AugmentSpec, apply_augment, shannon_entropy
from .config import (ConfigError, RunConfig, apply_overrides, config_hash,
                     parse_config, serialize_config)
from .core import (RewardSet, load_buffer, load_trajectory, save_trajectory,
                   TrajectoryMatrix)
from .envs import make_env
from .estimator import EstimatorParams
from .losses import (LossBatch, finite_diff_gradient, loss_qv, loss_r, loss_s)
from .training import BackboneQ, evaluate, train, write_run_outputs

__all__ = ["main"]

GRADCHECK_BOUND = 1e-4


class CliError(Exception):
    """A user-facing failure: printed to stderr, exit status 1."""


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        config = parse_config(path.read_text())
    else:
        config = RunConfig()
    overrides = getattr(args, "set", None) or []
    try:
        apply_overrides(config, overrides)
    except ConfigError as exc:
        raise CliError(str(exc))
    return config


def _seed_list(args, default):
    raw = getattr(args, "seed", None)
    if raw is None:
        return [int(default)]
    parts = [p.strip() for p in str(raw).split(",") if p.strip()]
    if not parts:
        raise CliError("--seed must list at least one integer")
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise CliError(f"--seed expects comma-separated integers, got {raw!r}")


def _out_root(args) -> Path:
    out = getattr(args, "out", None) or os.environ.get("SSRS_OUT") or "."
    return Path(out)


def _guard_outputs(paths, force: bool):
    """Refuse to overwrite existing outputs unless --force was given."""
    if force:
        return
    existing = [str(p) for p in paths if Path(p).exists()]
    if existing:
        raise CliError("output already exists (pass --force to overwrite): "
                       + ", ".join(existing))


def _write_csv(path, header, rows, force: bool):
    _guard_outputs([path], force)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(_fmt(v) for v in row)


def _write_json(path, payload, force: bool):
    _guard_outputs([path], force)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_curve(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise CliError(f"missing curve file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    columns = {name: np.array([float(r[i]) for r in rows])
               for i, name in enumerate(header)}
    return columns


def _run_config_of(run_dir: Path) -> RunConfig:
    meta = Path(run_dir) / "run.json"
    if not meta.is_file():
        raise CliError(f"not a run directory (no run.json): {run_dir}")
    payload = json.loads(meta.read_text())
    if "error" in payload:
        raise CliError(f"run {run_dir} failed: {payload['error']}")
    return parse_config(payload["config"])


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _cmd_train(args) -> int:
    config = _load_config(args)
    if args.worker:
        return _train_worker(args, config)
    seeds = _seed_list(args, config.seed)
    if len(set(seeds)) != len(seeds):
        raise CliError("duplicate seeds in --seed list")
    root = _out_root(args)
    seed_dirs = [root / f"seed_{s}" for s in seeds]
    _guard_outputs([d / "curve.csv" for d in seed_dirs]
                   + [root / "aggregate.csv"], args.force)

    child_base = [sys.executable, "-m", "ssrs", "train", "--worker"]
    if args.config:
        child_base += ["--config", args.config]
    for item in (args.set or []):
        child_base += ["--set", item]

    failed = []
    for seed, seed_dir in zip(seeds, seed_dirs):
        seed_dir.mkdir(parents=True, exist_ok=True)
        cmd = child_base + ["--seed", str(seed), "--out", str(seed_dir),
                            "--force"]
        result = subprocess.run(cmd)
        if result.returncode != 0:
            failed.append(seed)
        else:
            print(f"seed {seed}: done -> {seed_dir}")

    _write_json(root / "run.json", {
        "config_hash": config_hash(config),
        "seeds": seeds,
        "failed": failed,
    }, force=True)

    finished = [d for s, d in zip(seeds, seed_dirs) if s not in failed]
    if finished:
        records = []
        for d in finished:
            curve = _read_curve(d / "curve.csv")
            records.append(SimpleNamespace(episodes=curve["episode"],
                                           best=curve["best"]))
        episodes, mean, std = best_score_series(records)
        _write_csv(root / "aggregate.csv", ("episode", "mean_best", "std_best"),
                   zip(episodes.astype(int), mean, std), force=True)
        print(f"aggregate over {len(finished)} seed(s) -> "
              f"{root / 'aggregate.csv'}")
    if failed:
        print(f"failed seeds: {', '.join(map(str, failed))}", file=sys.stderr)
        return 1
    return 0


def _train_worker(args, config: RunConfig) -> int:
    seeds = _seed_list(args, config.seed)
    if len(seeds) != 1:
        raise CliError("worker mode trains exactly one seed")
    config.seed = seeds[0]
    out_dir = _out_root(args)
    try:
        record, backbone, params, buffer = train(config, out_dir=out_dir)
        write_run_outputs(record, config, out_dir, backbone=backbone,
                          params=params, buffer=buffer)
    except Exception as exc:  # recorded for the orchestrating parent
        _write_json(out_dir / "run.json",
                    {"seed": config.seed, "error": str(exc)}, force=True)
        print(f"seed {config.seed}: {exc}", file=sys.stderr)
        return 1
    summary = record.summary()
    print(f"seed {config.seed}: best {summary['best_score']:.4f} "
          f"final {summary['final_score']:.4f}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _cmd_eval(args) -> int:
    run_dir = Path(args.run)
    config = _run_config_of(run_dir)
    table_path = run_dir / "backbone_q.npy"
    if not table_path.is_file():
        raise CliError(f"missing value table: {table_path}")
    table = np.load(table_path)
    env = make_env(config.env_spec())
    if table.shape != (env.n_states, env.n_actions):
        raise CliError(f"value table shape {table.shape} does not match "
                       f"environment ({env.n_states}, {env.n_actions})")
    backbone = BackboneQ(table=table, encoder=env.state_id_of)
    n = args.episodes if args.episodes is not None else config.eval_episodes
    mean_return, success = evaluate(env, backbone, n)
    print(f"episodes {n}")
    print(f"mean_return {_fmt(mean_return)}")
    print(f"success_rate {_fmt(success)}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def _toy_estimator(rng: np.random.Generator):
    """A deliberately tiny two-head estimator for finite-difference checks."""
    m1, m2, n_z = 4, 2, 3
    params = EstimatorParams.create(m1, m2, n_z, rng, hidden=(6,),
                                    dropout=0.0, input_scale=1.0)
    # Nonzero biases keep every relu preactivation away from its kink, where
    # central differences straddle the corner and disagree with the
    # (one-sided) analytic derivative regardless of step size.
    for net in (params.q_net, params.v_net):
        for i, bias in enumerate(net.biases):
            net.biases[i] = rng.normal(0.0, 0.1, size=bias.shape)
    zset = RewardSet(values=np.array([1.0, 2.0, 4.0]),
                     observed=(1.0, 2.0, 4.0))
    return params, zset, m1, m2


def _toy_batch(rng: np.random.Generator, m1: int, m2: int, n: int,
               nonzero: bool) -> LossBatch:
    states = rng.uniform(0.0, 1.0, size=(n, m1))
    next_states = rng.uniform(0.0, 1.0, size=(n, m1))
    actions = np.zeros((n, m2))
    actions[np.arange(n), rng.integers(0, m2, size=n)] = 1.0
    rewards = rng.choice([1.0, 2.0, 4.0], size=n) if nonzero else np.zeros(n)
    return LossBatch.from_arrays(states, actions, rewards, next_states)


def gradcheck_report(seed: int, step: float = 1e-5) -> dict:
    """Max relative backprop-vs-finite-difference error for each loss.

    Uses eval-mode toy estimators well under 200 parameters; the relative
    error is |g_bp - g_fd| / (|g_fd| + 1e-8), reduced with max over
    coordinates.
    """
    rng = np.random.default_rng(seed)
    params, zset, m1, m2 = _toy_estimator(rng)
    batch_nz = _toy_batch(rng, m1, m2, 4, nonzero=True)
    batch_z = _toy_batch(rng, m1, m2, 3, nonzero=False)
    pairing = (AugmentSpec("gaussian", {"sigma": 0.1}),
               AugmentSpec("double_entropy", {"n": 2}))
    threshold, mix = 0.5, 0.5
    aug_seed = seed + 1

    checks = {
        "L_r": (
            lambda p: loss_r(p, batch_nz, zset, threshold, mix,
                             temperature=0.5, mode="smooth")[0],
            lambda p: loss_r(p, batch_nz, zset, threshold, mix,
                             temperature=0.5, mode="smooth")[1],
        ),
        "L_QV": (
            lambda p: loss_qv(p, batch_nz)[0],
            lambda p: loss_qv(p, batch_nz)[1],
        ),
        "L_s": (
            lambda p: loss_s(p, batch_z, pairing, zset, threshold, mix,
                             mode="smooth", augment_seed=aug_seed)[0],
            lambda p: loss_s(p, batch_z, pairing, zset, threshold, mix,
                             mode="smooth", augment_seed=aug_seed)[1],
        ),
    }
    report = {}
    for name, (value_fn, grad_fn) in checks.items():
        g_bp = grad_fn(params).flat
        g_fd = finite_diff_gradient(value_fn, params, step=step).flat
        rel = np.abs(g_bp - g_fd) / (np.abs(g_fd) + 1e-8)
        report[name] = float(rel.max())
    return report


def _cmd_gradcheck(args) -> int:
    seeds = _seed_list(args, 0) if args.seed is not None else [0, 1, 2]
    worst = 0.0
    for seed in seeds:
        report = gradcheck_report(seed)
        for name in ("L_r", "L_QV", "L_s"):
            err = report[name]
            worst = max(worst, err)
            verdict = "PASS" if err <= GRADCHECK_BOUND else "FAIL"
            print(f"seed {seed}  {name:<4}  max_rel_err {err:.3e}  {verdict}")
    ok = worst <= GRADCHECK_BOUND
    print(f"gradcheck: {'PASS' if ok else 'FAIL'} "
          f"(worst {worst:.3e}, bound {GRADCHECK_BOUND:.0e})")
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# augment-check
# ---------------------------------------------------------------------------

def _cmd_augment_check(args) -> int:
    traj = load_trajectory(args.traj)
    params = {}
    if args.sigma is not None:
        params["sigma"] = args.sigma
    if args.n is not None:
        params["n"] = args.n
    if args.low is not None:
        params["low"] = args.low
    if args.high is not None:
        params["high"] = args.high
    try:
        spec = AugmentSpec(args.kind, params)
    except ValueError as exc:
        raise CliError(str(exc))
    seeds = _seed_list(args, 0)
    rng = np.random.default_rng(seeds[0])
    try:
        out = apply_augment(spec, traj, rng)
    except ValueError as exc:
        raise CliError(str(exc))

    m1 = traj.states.shape[1]
    n_parts = args.n if (args.n and args.kind == "double_entropy") else min(8, m1)
    width = m1 // n_parts
    entropies = []
    for i in range(n_parts):
        hi = m1 if i == n_parts - 1 else (i + 1) * width
        entropies.append(shannon_entropy(traj.states[:, i * width:hi]))

    root = _out_root(args)
    out_csv = root / "augmented.csv"
    out_json = root / "augment_report.json"
    _guard_outputs([out_csv, out_json], args.force)
    root.mkdir(parents=True, exist_ok=True)
    save_trajectory(out, out_csv)
    _write_json(out_json, {
        "kind": spec.kind,
        "params": spec.params,
        "entropy_per_partition": entropies,
        "shapes": {
            "states": list(out.states.shape),
            "actions": list(out.actions.shape),
            "rewards": list(out.rewards.shape),
        },
    }, force=True)
    print(f"augmented trajectory -> {out_csv}")
    print(f"report -> {out_json}")
    return 0


# ---------------------------------------------------------------------------
# rollout
# ---------------------------------------------------------------------------

def _cmd_rollout(args) -> int:
    config = _load_config(args)
    seeds = _seed_list(args, config.seed)
    env = make_env(config.env_spec())
    rng = np.random.default_rng(seeds[0])
    obs = env.reset()
    states, action_rows, rewards = [], [], []
    done = False
    while not done:
        action = int(rng.integers(0, env.n_actions))
        states.append(obs)
        action_rows.append(env.action_vector(action))
        obs, reward, done = env.step(action)
        rewards.append(reward)
    traj = TrajectoryMatrix(states=np.array(states),
                            actions=np.array(action_rows),
                            rewards=np.array(rewards))
    root = _out_root(args)
    out_csv = root / "rollout.csv"
    _guard_outputs([out_csv], args.force)
    root.mkdir(parents=True, exist_ok=True)
    save_trajectory(traj, out_csv)
    print(f"{len(traj)} steps, return {_fmt(traj.rewards.sum())} -> {out_csv}")
    return 0


# ---------------------------------------------------------------------------
# consensus
# ---------------------------------------------------------------------------

def _load_buffer_arg(args):
    if args.buffer:
        path = Path(args.buffer)
        config = RunConfig()
    elif args.run:
        run_dir = Path(args.run)
        config = _run_config_of(run_dir)
        path = run_dir / "buffer_final.bin"
    else:
        raise CliError("pass --run DIR or --buffer FILE")
    if not path.is_file():
        raise CliError(f"missing buffer checkpoint: {path}")
    return load_buffer(path), config


def _cmd_consensus(args) -> int:
    buffer, config = _load_buffer_arg(args)
    k = args.k if args.k is not None else config.n_z
    seeds = _seed_list(args, config.seed)
    try:
        matrix, n_traj = trajectory_consensus(buffer, k, runs=args.runs,
                                              seed=seeds[0])
    except ValueError as exc:
        raise CliError(str(exc))
    root = _out_root(args)
    grid_path = root / "consensus_matrix.csv"
    pairs_path = root / "consensus_pairs.csv"
    _write_csv(grid_path, [f"t{j}" for j in range(n_traj)], matrix, args.force)
    pairs = ((i, j, matrix[i, j])
             for i in range(n_traj) for j in range(n_traj))
    _write_csv(pairs_path, ("i", "j", "value"), pairs, args.force)
    print(f"{n_traj} trajectories, {args.runs} clustering runs, k={k}")
    print(f"matrix -> {grid_path}")
    print(f"pairs  -> {pairs_path}")
    return 0


# ---------------------------------------------------------------------------
# dist
# ---------------------------------------------------------------------------

def _cmd_dist(args) -> int:
    run_dir = Path(args.run)
    _run_config_of(run_dir)  # validates the directory
    try:
        epochs = [int(p) for p in args.epochs.split(",") if p.strip()]
    except ValueError:
        raise CliError(f"--epochs expects comma-separated integers, "
                       f"got {args.epochs!r}")
    if not epochs:
        raise CliError("--epochs must list at least one checkpoint epoch")
    snapshots = {}
    for epoch in epochs:
        path = run_dir / f"buffer_ep{epoch}.bin"
        if not path.is_file():
            raise CliError(f"missing buffer checkpoint: {path} "
                           f"(train with checkpoint_interval set)")
        snapshots[epoch] = load_buffer(path)
    _, rows = reward_distribution(snapshots, bins=args.bins)
    root = _out_root(args)
    out_csv = root / "dist.csv"
    _write_csv(out_csv, ("epoch", "bin_left", "bin_right", "probability"),
               rows, args.force)
    print(f"{len(epochs)} snapshot(s), {args.bins} bins -> {out_csv}")
    return 0


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _cmd_compare(args) -> int:
    rows = []
    for raw in args.dirs:
        d = Path(raw)
        agg = d / "aggregate.csv"
        if not agg.is_file():
            raise CliError(f"missing aggregate.csv in {d}")
        curve = _read_curve(agg)
        rows.append((d.name, float(curve["mean_best"][-1]),
                     float(curve["std_best"][-1])))

    root = _out_root(args)
    out_csv = root / "compare.csv"
    _write_csv(out_csv, ("variant", "mean_best", "std_best"), rows, args.force)

    name_w = max(len("variant"), *(len(r[0]) for r in rows))
    print(f"{'variant':<{name_w}}  {'mean_best':>12}  {'std_best':>12}")
    for name, mean, std in rows:
        print(f"{name:<{name_w}}  {mean:>12.6f}  {std:>12.6f}")
    print(f"table -> {out_csv}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--seed", help="comma-separated seed list")
    common.add_argument("--out", help="output directory "
                        "(default: $SSRS_OUT, else the working directory)")
    common.add_argument("--force", action="store_true",
                        help="overwrite existing outputs")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="config override, repeatable")

    parser = argparse.ArgumentParser(
        prog="ssrs",
        description="semi-supervised reward shaping toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", parents=[common],
                       help="train one run directory per seed")
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", parents=[common],
                       help="greedy evaluation of a trained run")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--episodes", type=int, help="evaluation episode count")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("gradcheck", parents=[common],
                       help="verify loss gradients against finite differences")
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("augment-check", parents=[common],
                       help="apply one transform to a trajectory file")
    p.add_argument("--traj", required=True, help="trajectory CSV")
    p.add_argument("--kind", required=True,
                   choices=["gaussian", "cutout", "smooth", "scale",
                            "translate", "flip", "double_entropy"])
    p.add_argument("--sigma", type=float, help="gaussian noise scale")
    p.add_argument("--n", type=int,
                   help="column/window/partition count for cutout, smooth "
                        "or double_entropy")
    p.add_argument("--low", type=float, help="draw-range low (scale/translate)")
    p.add_argument("--high", type=float, help="draw-range high (scale/translate)")
    p.set_defaults(fn=_cmd_augment_check)

    p = sub.add_parser("rollout", parents=[common],
                       help="dump one random-policy episode")
    p.set_defaults(fn=_cmd_rollout)

    p = sub.add_parser("consensus", parents=[common],
                       help="co-assignment matrix over repeated clusterings")
    p.add_argument("--run", help="run directory holding buffer_final.bin")
    p.add_argument("--buffer", help="buffer checkpoint file")
    p.add_argument("--k", type=int, help="mixture components "
                   "(default: the run's candidate count)")
    p.add_argument("--runs", type=int, default=100, help="clustering repeats")
    p.set_defaults(fn=_cmd_consensus)

    p = sub.add_parser("dist", parents=[common],
                       help="shaped-reward histograms across checkpoints")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--epochs", default="200,400,600,800,1000",
                   help="comma-separated checkpoint episodes")
    p.add_argument("--bins", type=int, default=20, help="histogram bins")
    p.set_defaults(fn=_cmd_dist)

    p = sub.add_parser("compare", parents=[common],
                       help="mean/std of best score across variants")
    p.add_argument("dirs", nargs="+", metavar="DIR",
                   help="two or more aggregated run directories")
    p.set_defaults(fn=_cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.cmd == "compare" and len(args.dirs) < 2:
        parser.error("compare needs at least two run directories")
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
