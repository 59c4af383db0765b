"""Command-line entry point.

Subcommands: train, eval, bench, completeness, export, distill, eval-hgq.
Exit codes: 0 ok, 2 usage/config error, 3 determinism violation,
4 missing artifact.  HG_RUN_DIR overrides the default output root.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import environments, serialize, trainer
from .environments import EnvSpec, make_env
from .errors import DeterminismViolation, MissingArtifact
from .highway_graph import expand_to_empirical, graph_stats
from .highway_graph import to_dot as highway_dot
from .policy import PolicySnapshot, greedy_action
from .reparam import ApproxConfig, act, extract_dataset, fit, policy_agreement
from .transition_model import to_dot as empirical_dot
from .transition_model import vanilla_value_iteration
from .value_iteration import (completeness_report, interior_values, q_to_csv, solve,
                              values_to_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DETERMINISM = 3
EXIT_MISSING = 4


def _run_root() -> str:
    return os.environ.get("HG_RUN_DIR", "runs")


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except Exception as exc:
        raise ValueError(f"bad --size {text!r}, expected WxH") from exc


def _read_config_file(path: str) -> dict:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _env_spec_from_args(kind, size, seed) -> EnvSpec:
    if kind == "maze":
        if not size:
            raise ValueError("--size WxH is required for maze")
        w, h = _parse_size(size)
        return EnvSpec(kind="maze", width=w, height=h, seed=seed)
    return EnvSpec(kind=kind, seed=seed)


def _env_spec_from_manifest(manifest: dict) -> EnvSpec:
    cfg = manifest["config"]
    return EnvSpec(kind=cfg["env_kind"], width=cfg.get("env_width", 0),
                   height=cfg.get("env_height", 0), seed=cfg["env_seed"])


def _load_run(run_dir):
    manifest = serialize.read_manifest(run_dir)
    graph = serialize.load_highway_graph(os.path.join(run_dir, "graph.npz"))
    tables = serialize.load_value_tables(os.path.join(run_dir, "tables.npz"))
    return manifest, graph, tables


# ------------------------------------------------------------------- commands

def cmd_train(args) -> int:
    merged = {}
    if args.config:
        merged = _read_config_file(args.config)

    def pick(flag_value, key, cast, default):
        if flag_value is not None:
            return flag_value
        if key in merged:
            return cast(merged[key])
        return default

    kind = pick(args.env, "env", str, None)
    if kind is None:
        print("error: --env is required", file=sys.stderr)
        return EXIT_CONFIG
    spec = _env_spec_from_args(kind, pick(args.size, "size", str, None),
                               pick(args.seed, "seed", int, 0))
    config = trainer.TrainConfig(
        env=spec,
        actors=pick(args.actors, "actors", int, 10),
        episodes_per_update=pick(args.episodes_per_update, "episodes_per_update", int, None),
        frame_budget=pick(args.frames, "frames", int, 1_000_000),
        gamma=pick(args.gamma, "gamma", float, 0.99),
        delta=pick(args.delta, "delta", float, 1e-10),
        convergence_patience=pick(args.patience, "patience", int, 3),
        run_seed=pick(args.run_seed, "run_seed", int, 0),
        episode_step_cap=pick(args.step_cap, "step_cap", int, None),
    )
    run_dir = args.out
    if run_dir is None:
        name = spec.kind
        if spec.kind == "maze":
            name += f"-{spec.width}x{spec.height}"
        name += f"-s{spec.seed}-r{config.run_seed}"
        run_dir = os.path.join(_run_root(), name)
    os.makedirs(run_dir, exist_ok=True)

    # metrics are streamed row by row while the run progresses
    with open(os.path.join(run_dir, "metrics.csv"), "w") as metrics_file:
        metrics_file.write(f"# {trainer.METRICS_SCHEMA}\n{trainer.METRICS_HEADER}\n")
        metrics_file.flush()

        def stream_row(row):
            metrics_file.write(trainer.metrics_row_line(row) + "\n")
            metrics_file.flush()

        result = trainer.train(config, on_update=stream_row)

    serialize.save_highway_graph(os.path.join(run_dir, "graph.npz"), result.graph)
    serialize.save_value_tables(os.path.join(run_dir, "tables.npz"), result.tables)
    with open(os.path.join(run_dir, "values.csv"), "w") as f:
        f.write(values_to_csv(result.tables))
    with open(os.path.join(run_dir, "q.csv"), "w") as f:
        f.write(q_to_csv(result.tables))
    config_snapshot = {
        "env_kind": spec.kind, "env_width": spec.width, "env_height": spec.height,
        "env_seed": spec.seed, "actors": config.actors,
        "episodes_per_update": config.resolved_episodes_per_update(),
        "frame_budget": config.frame_budget, "gamma": config.gamma,
        "delta": config.delta, "convergence_patience": config.convergence_patience,
        "run_seed": config.run_seed, "episode_step_cap": config.resolved_step_cap(),
    }
    with open(os.path.join(run_dir, "config.txt"), "w") as f:
        for key, value in sorted(config_snapshot.items()):
            f.write(f"{key}={value}\n")
    rows = result.metrics.rows
    serialize.write_manifest(run_dir, config_snapshot, extra={
        "converged_at_update": result.metrics.converged_at_update,
        "updates_run": len(rows),
        "frames_used": rows[-1].frames_so_far if rows else 0,
        "frames_at_convergence": (
            rows[result.metrics.converged_at_update - 1].frames_so_far
            if result.metrics.converged_at_update else None),
    })
    stats = graph_stats(result.graph)
    print(f"run dir: {run_dir}")
    print(f"updates: {len(rows)}  frames: {rows[-1].frames_so_far if rows else 0}")
    print(f"converged_at_update: {result.metrics.converged_at_update}")
    print(f"intersections: {stats['intersections']}  highways: {stats['highways']}  "
          f"z: {stats['z']:.4f}")
    if rows:
        print(f"greedy total reward: {rows[-1].total_reward:.4f}  "
              f"discounted return: {rows[-1].expected_discounted_return:.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest, graph, tables = _load_run(args.run)
    spec = _env_spec_from_manifest(manifest)
    env = make_env(spec)
    snapshot = PolicySnapshot(graph, tables, env.action_count, rng_seed=args.seed)
    gamma = manifest["config"]["gamma"]
    ev = trainer.evaluate(snapshot, env, args.episodes, gamma=gamma, seed=args.seed)
    print(f"episodes: {args.episodes}")
    print(f"mean_total_reward: {ev.mean_total_reward:.6f}")
    print(f"mean_discounted_return: {ev.mean_discounted_return:.6f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    manifest, graph, tables = _load_run(args.run)
    stats = graph_stats(graph)
    expanded = expand_to_empirical(graph)
    _tables, hstats = solve(graph, delta=args.delta)
    start = time.perf_counter()
    vres = vanilla_value_iteration(expanded, max_iter=args.max_iter, delta=args.delta)
    v_wall = time.perf_counter() - start
    v_per_sweep = expanded.num_edges()
    lines = ["engine,sweeps,per_sweep_updates,total_updates,covered_ops,"
             "wall_seconds,ops_per_second"]
    h_ops = hstats["covered_ops"]
    lines.append(
        f"highway,{hstats['sweeps']},{hstats['per_sweep_updates']},"
        f"{hstats['total_updates']},{h_ops},{hstats['wall_seconds']:.6f},"
        f"{h_ops / max(hstats['wall_seconds'], 1e-12):.1f}")
    v_ops = vres.iterations_run * v_per_sweep
    lines.append(
        f"vanilla,{vres.iterations_run},{v_per_sweep},{v_ops},{v_ops},"
        f"{v_wall:.6f},{v_ops / max(v_wall, 1e-12):.1f}")
    z = stats["z"]
    counted = (hstats["total_updates"] / v_ops) if v_ops else float("nan")
    lines.append(f"# z={z!r}")
    lines.append(f"# z_squared={z * z!r}")
    lines.append(f"# counted_work_ratio={counted!r}")
    lines.append(f"# wall_ratio={hstats['wall_seconds'] / max(v_wall, 1e-12)!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    print(text, end="")
    return EXIT_OK


def cmd_completeness(args) -> int:
    manifest, graph, tables = _load_run(args.run)
    spec = _env_spec_from_manifest(manifest)
    env = make_env(spec)
    gamma = manifest["config"]["gamma"]
    truth = env.ground_truth_values(gamma)
    learned = interior_values(graph, tables)
    merged = {sid: learned.get(sid, 0.0) for sid in truth}
    report = completeness_report(merged, truth, args.tol)
    covered = sum(1 for sid in truth if sid in learned)
    print(f"states: {len(truth)}  covered: {covered}")
    print(f"min_dist: {report['min_dist']:.2f}")
    print(f"max_dist: {report['max_dist']:.2f}")
    print(f"avg_dist: {report['avg_dist']:.2f}")
    print(f"completeness: {report['completeness_pct']:.2f}%")
    return EXIT_OK


def cmd_export(args) -> int:
    manifest, graph, tables = _load_run(args.run)
    values = tables.v if tables.v else None
    prefix = args.out_prefix or os.path.join(args.run, "graph")
    highway_path = prefix + ".highway.dot"
    with open(highway_path, "w") as f:
        f.write(highway_dot(graph, values=values) + "\n")
    written = [highway_path]
    if args.expanded:
        expanded_path = prefix + ".expanded.dot"
        with open(expanded_path, "w") as f:
            f.write(empirical_dot(expand_to_empirical(graph)) + "\n")
        written.append(expanded_path)
    spec = _env_spec_from_manifest(manifest)
    if spec.kind == "maze":
        art_path = prefix + ".maze.txt"
        with open(art_path, "w") as f:
            f.write(make_env(spec).ascii_art() + "\n")
        written.append(art_path)
    for path in written:
        print(path)
    return EXIT_OK


def cmd_distill(args) -> int:
    manifest, graph, tables = _load_run(args.run)
    spec = _env_spec_from_manifest(manifest)
    env = make_env(spec)

    def features_of(sid):
        return env.state_features(env.obs_of_id(sid))

    dataset = extract_dataset(graph, tables, features_of)
    cfg = ApproxConfig(learning_rate=args.learning_rate, epochs=args.epochs,
                       batch_size=args.batch_size or None, init_seed=args.seed)
    approx = fit(dataset, cfg, action_count=env.action_count)
    path = os.path.join(args.run, "approximator.npz")
    serialize.save_approximator(path, approx)
    serialize.write_manifest(args.run, manifest["config"], extra={
        key: manifest[key] for key in
        ("converged_at_update", "updates_run", "frames_used", "frames_at_convergence")
        if key in manifest})
    scored = [s for s in graph.intersections if graph.out_edges.get(s)]
    agreement = policy_agreement(
        approx, scored, features_of,
        {s: greedy_action(graph, tables, s) for s in scored})
    print(f"rows: {len(dataset)}  final_loss: {approx.loss_history[-1]:.6g}")
    print(f"greedy_agreement: {agreement:.4f}")
    print(path)
    return EXIT_OK


def cmd_eval_hgq(args) -> int:
    manifest, _graph, _tables = _load_run(args.run)
    approx = serialize.load_approximator(os.path.join(args.run, "approximator.npz"))
    spec = _env_spec_from_manifest(manifest)
    env = make_env(spec)
    gamma = manifest["config"]["gamma"]
    cap = (manifest["config"]["episode_step_cap"]
           or environments.DEFAULT_EVAL_STEP_CAP[spec.kind])
    totals, discs = [], []
    for k in range(args.episodes):
        obs = env.reset(k)
        total, disc, g = 0.0, 0.0, 1.0
        for _ in range(cap):
            action = act(approx, env.state_features(obs))
            res = env.step(obs, action)
            total += res.reward
            disc += g * res.reward
            g *= gamma
            obs = res.next_obs
            if res.done:
                break
        totals.append(total)
        discs.append(disc)
    print(f"episodes: {args.episodes}")
    print(f"mean_total_reward: {sum(totals) / len(totals):.6f}")
    print(f"mean_discounted_return: {sum(discs) / len(discs):.6f}")
    return EXIT_OK


# --------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hgrl",
                                     description="highway-graph reinforcement learning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train an agent and write a run directory")
    p.add_argument("--env", choices=["maze", "cliffwalking", "taxi"])
    p.add_argument("--size", help="maze size as WxH")
    p.add_argument("--seed", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--actors", type=int)
    p.add_argument("--episodes-per-update", type=int, dest="episodes_per_update")
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--patience", type=int)
    p.add_argument("--run-seed", type=int, dest="run_seed")
    p.add_argument("--step-cap", type=int, dest="step_cap")
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--out", help="run directory (default under HG_RUN_DIR or ./runs)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a trained artifact")
    p.add_argument("--run", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="value-iteration benchmark on a trained graph")
    p.add_argument("--run", required=True)
    p.add_argument("--delta", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=100_000, dest="max_iter")
    p.add_argument("--out", help="also write the CSV here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("completeness", help="compare learned values to ground truth")
    p.add_argument("--run", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_completeness)

    p = sub.add_parser("export", help="write DOT renderings of a trained graph")
    p.add_argument("--run", required=True)
    p.add_argument("--out-prefix", dest="out_prefix")
    p.add_argument("--expanded", action="store_true",
                   help="also export the expanded empirical graph")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("distill", help="fit the Q approximator from a trained graph")
    p.add_argument("--run", required=True)
    p.add_argument("--epochs", type=int, default=4000)
    p.add_argument("--learning-rate", type=float, default=3e-2, dest="learning_rate")
    p.add_argument("--batch-size", type=int, default=0, dest="batch_size",
                   help="0 means full-batch descent")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("eval-hgq", help="evaluate the distilled approximator")
    p.add_argument("--run", required=True)
    p.add_argument("--episodes", type=int, default=10)
    p.set_defaults(func=cmd_eval_hgq)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse already printed usage; normalize its code to the config exit
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except DeterminismViolation as exc:
        print(f"determinism violation: {exc}", file=sys.stderr)
        return EXIT_DETERMINISM
    except MissingArtifact as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
