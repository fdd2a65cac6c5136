"""Command-line tool: evaluation sets, rollouts, training, reports, service.

Subcommands:
    gen      write a seeded evaluation-set manifest
    run      roll episodes with a chosen policy and write trace files
    train    run the actor-critic loop and write checkpoints + metrics
    analyze  compute behavioral reports (CSV plus rendered PNG figures)
    serve    start the HTTP service over a trace directory

Every report writes delimited text next to a rendered figure so results are
scriptable and eyeballable from the same command.  Exit code 0 on success,
2 on configuration errors (with a message on stderr).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (
    VIOLATION_TESTS,
    action_type_histogram,
    build_activation_table,
    cumulative_scores_by_trial,
    histogram_rows,
    io_comparison_by_trial,
    pair_selectivity,
    score_by_missing_edges,
    selectivity_rows,
    violation_report,
)
from .baselines import IdealObserverPolicy, RandomHeuristicPolicy, UniformRandomPolicy
from .environment import EnvConfig, GenConfig
from .traces import (
    NoOpPolicy,
    generate_eval_set,
    read_sidecar,
    read_trace,
    run_episode,
    sidecar_path,
    trace_path,
    write_eval_set,
    write_sidecar,
    write_trace,
)

POLICIES = ("ideal", "random", "uniform", "epn", "noop")


class ConfigError(Exception):
    """A bad flag combination or unusable input; exits with code 2."""


# -- shared helpers -----------------------------------------------------------


def _parse_missing_edges(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x != "")
    except ValueError:
        raise ConfigError(f"--missing-edges wants comma-separated ints, got {text!r}")


def _env_cfg(args) -> EnvConfig:
    cfg = EnvConfig()
    if getattr(args, "trials", None) is not None:
        cfg = replace(cfg, trials_per_episode=args.trials)
    if getattr(args, "missing_edges", None) is not None:
        cfg = replace(cfg, gen=GenConfig(
            missing_edges=_parse_missing_edges(args.missing_edges)))
    if getattr(args, "no_shaping", False):
        cfg = replace(cfg, shaping=False)
    return cfg


def _load_traces(trace_dir: Path):
    paths = sorted(Path(trace_dir).glob("*.trace.jsonl"))
    if not paths:
        raise ConfigError(f"no trace files under {trace_dir}")
    return [(p, read_trace(p)) for p in paths]


def _write_csv(path: Path, rows: list[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return path
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    return path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


# -- subcommands --------------------------------------------------------------


def cmd_gen(args) -> int:
    cfg = _env_cfg(args)
    manifest = generate_eval_set(args.seed, args.n, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    out = write_eval_set(manifest, args.out)
    print(f"wrote {args.n} episode seeds to {out}")
    return 0


def _make_policy(args):
    if args.policy == "ideal":
        return IdealObserverPolicy()
    if args.policy == "random":
        return RandomHeuristicPolicy()
    if args.policy == "uniform":
        return UniformRandomPolicy()
    if args.policy == "noop":
        return NoOpPolicy()
    if args.checkpoint is None:
        raise ConfigError("--policy epn needs --checkpoint")
    from .neural import EpnPolicy, load_params

    return EpnPolicy(
        load_params(args.checkpoint),
        mode="sample" if args.sample else "argmax",
        use_memory=not args.no_memory,
        record_activations=args.record_activations,
    )


def cmd_run(args) -> int:
    cfg = _env_cfg(args)
    policy = _make_policy(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    record_belief = args.record_belief and args.policy == "ideal"
    scores = []
    for i in range(args.episodes):
        trace, sidecar = run_episode(
            policy, cfg, seed=args.seed + i,
            collect_activations=args.record_activations,
            collect_belief=record_belief,
        )
        extra_flags = {}
        if args.no_memory:
            extra_flags["no_memory"] = True
        if args.no_shaping:
            extra_flags["no_shaping"] = True
        if extra_flags:
            trace = replace(trace, flags={**trace.flags, **extra_flags})
        path = write_trace(trace, trace_path(out_dir, trace))
        if args.record_activations and sidecar:
            rows = [{k: v for k, v in row.items() if k != "belief"}
                    for row in sidecar]
            write_sidecar(rows, sidecar_path(path, "activations"))
        if record_belief and sidecar:
            rows = [{"trial": r["trial"], "step": r["step"], "belief": r["belief"]}
                    for r in sidecar if "belief" in r]
            write_sidecar(rows, sidecar_path(path, "belief"))
        scores.append(trace.score)
        print(f"{trace.trace_id}  score {trace.score}")
    print(f"episodes {len(scores)}  mean score {np.mean(scores):.3f}")
    return 0


def cmd_train(args) -> int:
    from .neural import load_params
    from .training import TrainConfig, smoke_setup, train

    if args.smoke:
        train_cfg, env_cfg = smoke_setup(seed=args.seed)
    else:
        train_cfg = TrainConfig(
            total_steps=args.steps,
            batch=args.batch,
            unroll=args.unroll,
            lr=args.lr,
            gamma=args.gamma,
            precision=args.precision,
            eval_every=args.eval_every,
            eval_episodes=args.eval_episodes,
            checkpoint_every=args.checkpoint_every,
            seed=args.seed,
        )
        env_cfg = _env_cfg(args)
    params = load_params(args.finetune_from) if args.finetune_from else None
    run_dir = Path(args.out)
    try:
        train_cfg.validate()
    except ValueError as exc:
        raise ConfigError(str(exc))
    _, metrics = train(train_cfg, env_cfg, run_dir, params=params)
    print(f"checkpoint {run_dir / 'final.ckpt'}")
    if metrics:
        last = metrics[-1]
        print(f"updates {last['update']}  loss {last['loss']:.4f}  "
              f"entropy {last['entropy']:.4f}")
    return 0


def _analyze_behavior(args, out_dir: Path) -> list[Path]:
    traces = [t for _, t in _load_traces(Path(args.traces))]
    report = violation_report(traces)
    csv_path = _write_csv(out_dir / "violations.csv", report.to_rows())
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    means = [report.summary[t]["mean"] for t in VIOLATION_TESTS]
    sems = [report.summary[t]["sem"] or 0.0 for t in VIOLATION_TESTS]
    ax.bar(range(len(VIOLATION_TESTS)), means, yerr=sems, color="#4878d0")
    ax.set_xticks(range(len(VIOLATION_TESTS)))
    ax.set_xticklabels(VIOLATION_TESTS, rotation=20, ha="right")
    ax.set_ylabel("mean violations per episode")
    ax.set_title(f"belief-consistency violations: {report.agent}")
    fig.tight_layout()
    png_path = out_dir / "violations.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def _analyze_actions(args, out_dir: Path) -> list[Path]:
    traces = [t for _, t in _load_traces(Path(args.traces))]
    hist = action_type_histogram(traces)
    rows = histogram_rows(hist)
    csv_path = _write_csv(out_dir / "action_types.csv", rows)
    plt = _pyplot()
    trials = sorted(hist.keys())
    kinds = list(next(iter(hist.values())).keys()) if hist else []
    fig, ax = plt.subplots(figsize=(7, 4))
    bottom = np.zeros(len(trials))
    for kind in kinds:
        vals = np.array([hist[t][kind] for t in trials], dtype=float)
        ax.bar(trials, vals, bottom=bottom, label=kind)
        bottom += vals
    ax.set_xlabel("trial")
    ax.set_ylabel("steps")
    ax.set_title("action outcomes by trial")
    ax.legend(fontsize=7)
    fig.tight_layout()
    png_path = out_dir / "action_types.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def _analyze_edges(args, out_dir: Path) -> list[Path]:
    traces = [t for _, t in _load_traces(Path(args.traces))]
    groups = score_by_missing_edges(traces)
    rows = [{"missing_edges": m, **groups[m]} for m in sorted(groups)]
    csv_path = _write_csv(out_dir / "score_by_missing_edges.csv", rows)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ms = sorted(groups)
    ax.bar(ms, [groups[m]["mean"] for m in ms],
           yerr=[groups[m]["sem"] or 0.0 for m in ms], color="#ee854a")
    ax.set_xlabel("missing edges in the hidden chemistry")
    ax.set_ylabel("mean episode score")
    fig.tight_layout()
    png_path = out_dir / "score_by_missing_edges.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def _analyze_units(args, out_dir: Path) -> list[Path]:
    pairs = []
    for path, trace in _load_traces(Path(args.traces)):
        side = sidecar_path(path, "activations")
        if side.exists():
            pairs.append((trace, read_sidecar(side)))
    if not pairs:
        raise ConfigError(
            f"no activation sidecars under {args.traces}; "
            "re-run rollouts with --record-activations")
    table = build_activation_table(pairs, grouping="hue")
    rows = []
    reports = {}
    for source in ("lstm_h", "transformer_pooled"):
        rep = pair_selectivity(table, theta=args.theta, source=source)
        reports[source] = rep
        for row in selectivity_rows(rep):
            rows.append({"source": source, **row})
    csv_path = _write_csv(out_dir / "unit_selectivity.csv", rows)
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 4))
    names = list(reports)
    ax.bar(names, [reports[s].fraction for s in names], color="#6acc64")
    ax.set_ylabel(f"fraction of units hue-pair selective (theta={args.theta})")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    png_path = out_dir / "unit_selectivity.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def _analyze_compare(args, out_dir: Path) -> list[Path]:
    if args.baseline is None:
        raise ConfigError("analyze compare needs --baseline DIR")
    agent = [t for _, t in _load_traces(Path(args.traces))]
    base = [t for _, t in _load_traces(Path(args.baseline))]
    rows = io_comparison_by_trial(agent, base)
    csv_path = _write_csv(out_dir / "io_comparison.csv", rows)
    plt = _pyplot()
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot([r["trial"] for r in rows],
             [r["io_ahead_fraction"] for r in rows], marker="o")
    ax1.set_xlabel("trial")
    ax1.set_ylabel("fraction of episodes baseline is ahead")
    ax1.set_ylim(-0.02, 1.02)
    for label, traces in (("agent", agent), ("baseline", base)):
        per_trial = np.array([cumulative_scores_by_trial(t) for t in traces],
                             dtype=float)
        trials = list(range(1, per_trial.shape[1] + 1))
        ax2.plot(trials, per_trial.mean(axis=0), marker="o", label=label)
    ax2.set_xlabel("trial")
    ax2.set_ylabel("mean cumulative score")
    ax2.legend()
    fig.tight_layout()
    png_path = out_dir / "io_comparison.png"
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return [csv_path, png_path]


def cmd_analyze(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = {
        "behavior": _analyze_behavior,
        "actions": _analyze_actions,
        "edges": _analyze_edges,
        "units": _analyze_units,
        "compare": _analyze_compare,
    }[args.report]
    for path in handler(args, out_dir):
        print(f"wrote {path}")
    return 0


def cmd_serve(args) -> int:
    from .service import http_serve

    trace_dir = Path(args.traces)
    if not trace_dir.is_dir():
        raise ConfigError(f"trace directory {trace_dir} does not exist")
    http_serve(args.port, trace_dir, checkpoint=args.checkpoint)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alchemy",
        description="symbolic-alchemy workbench: episodes, agents, reports, service",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="write a seeded evaluation-set manifest")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--n", type=int, default=100)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--trials", type=int, default=None)
    p_gen.add_argument("--missing-edges", default=None,
                       help="comma-separated allowed missing-edge counts")
    p_gen.set_defaults(func=cmd_gen)

    p_run = sub.add_parser("run", help="roll episodes and write traces")
    p_run.add_argument("--policy", choices=POLICIES, required=True)
    p_run.add_argument("--episodes", type=int, default=10)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--trials", type=int, default=None)
    p_run.add_argument("--missing-edges", default=None)
    p_run.add_argument("--checkpoint", default=None)
    p_run.add_argument("--no-memory", action="store_true",
                       help="disable the episodic memory (epn only)")
    p_run.add_argument("--no-shaping", action="store_true",
                       help="turn off shaping penalties in the environment")
    p_run.add_argument("--record-activations", action="store_true")
    p_run.add_argument("--record-belief", action="store_true",
                       help="write posterior marginals next to ideal traces")
    p_run.add_argument("--sample", action="store_true",
                       help="sample epn actions instead of argmax")
    p_run.set_defaults(func=cmd_run)

    p_train = sub.add_parser("train", help="run the actor-critic loop")
    p_train.add_argument("--out", required=True)
    p_train.add_argument("--steps", type=int, default=30_000,
                         help="environment steps per parallel env")
    p_train.add_argument("--batch", type=int, default=8)
    p_train.add_argument("--unroll", type=int, default=20)
    p_train.add_argument("--lr", type=float, default=7.5e-4)
    p_train.add_argument("--gamma", type=float, default=0.7)
    p_train.add_argument("--precision", choices=("float32", "float64"),
                         default="float32")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--trials", type=int, default=None)
    p_train.add_argument("--missing-edges", default=None)
    p_train.add_argument("--eval-every", type=int, default=0)
    p_train.add_argument("--eval-episodes", type=int, default=16)
    p_train.add_argument("--checkpoint-every", type=int, default=0)
    p_train.add_argument("--finetune-from", default=None,
                         help="checkpoint to resume from (e.g. for gamma 0.95)")
    p_train.add_argument("--smoke", action="store_true",
                         help="reduced single-trial task with a fixed budget")
    p_train.set_defaults(func=cmd_train)

    p_an = sub.add_parser("analyze", help="write CSV + PNG reports")
    p_an.add_argument("report",
                      choices=("behavior", "actions", "edges", "units", "compare"))
    p_an.add_argument("--traces", required=True)
    p_an.add_argument("--baseline", default=None,
                      help="second trace directory for compare")
    p_an.add_argument("--out", default="analysis")
    p_an.add_argument("--theta", type=float, default=1.0,
                      help="selectivity threshold in pooled-std units")
    p_an.set_defaults(func=cmd_analyze)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--port", type=int,
                         default=int(os.environ.get("ALCHEMY_PORT", "8077")))
    p_serve.add_argument("--traces",
                         default=os.environ.get("ALCHEMY_TRACES", "traces"))
    p_serve.add_argument("--checkpoint", default=None)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
