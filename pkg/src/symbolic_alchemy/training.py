"""Synchronous advantage actor-critic training and seeded evaluation.

Eight environments step in lockstep; every 20 steps the unrolled graph is
differentiated once, gradients are clipped to a global norm of 100, and Adam
applies the update. The learning rate and the entropy coefficient decay
linearly over the configured number of updates, landing exactly on the floor
and exactly on zero at the last update. Episode boundaries inside an unroll
cut the return bootstrap and restart the agent state; unroll boundaries
detach the LSTM carry, giving truncated backpropagation through time.

The reward the learner sees is the environment reward plus shaping; episode
scores reported by evaluation never include shaping.
"""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .environment import AlchemyEnv, EnvConfig, GenConfig
from .neural import (
    EpnDims,
    EpnParams,
    EpnPolicy,
    Tensor,
    add,
    backward,
    concat,
    epn_forward,
    gather_rows,
    global_norm,
    init_params,
    initial_state,
    log_softmax,
    mul,
    sample_action,
    save_params,
    scale,
    softmax,
    sub,
    sum_all,
    tensor,
    write_memory,
)

METRICS_COLUMNS = ("update", "env_steps", "loss", "policy_loss", "value_loss",
                   "entropy", "grad_norm", "lr", "entropy_coef", "eval_score")


class TrainingDivergence(RuntimeError):
    """Raised when the loss stops being finite; carries a diagnostic."""


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 2000  # per-env steps; must be a multiple of unroll
    batch: int = 8
    unroll: int = 20
    lr: float = 7.5e-4
    lr_floor: float = 0.0
    value_coef: float = 0.5
    entropy_coef: float = 0.1
    grad_clip: float = 100.0
    gamma: float = 0.7
    precision: str = "float32"  # "float64" for bit-exact reproducibility
    eval_every: int = 0  # updates between evaluations; 0 disables
    eval_episodes: int = 16
    checkpoint_every: int = 0  # updates between checkpoints; 0 disables
    seed: int = 0

    def validate(self) -> None:
        if self.total_steps % self.unroll != 0:
            raise ValueError(
                f"total_steps {self.total_steps} must be a multiple of the "
                f"unroll length {self.unroll}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.batch < 1:
            raise ValueError("need at least one environment")


@dataclass(frozen=True)
class EvalConfig:
    n_episodes: int = 100
    memory_enabled: bool = True
    shaping: bool = True
    mode: str = "argmax"
    record_activations: bool = False
    seed: int = 10_000


def n_step_returns(rewards, values, bootstrap, gamma, terminals=None):
    """Discounted returns and advantages over a (T, B) unroll.

    R_t = r_t + gamma * R_{t+1} with R after the last step given by
    ``bootstrap``; a terminal at t stops the recursion (R_t = r_t).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    carry = np.array(bootstrap, dtype=np.float64, copy=True)
    returns = np.zeros_like(rewards)
    for t in reversed(range(rewards.shape[0])):
        if terminals is not None:
            carry = np.where(terminals[t], 0.0, carry)
        carry = rewards[t] + gamma * carry
        returns[t] = carry
    return returns, returns - values


def a2c_loss(logits: Tensor, actions, advantages, returns, values: Tensor,
             value_coef: float, entropy_coef: float):
    """Mean of -log pi(a) * advantage + value_coef * (R - V)^2
    - entropy_coef * entropy, with the advantage treated as a constant.

    Returns the scalar loss tensor plus the detached term values.
    """
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    advantages = np.asarray(advantages, dtype=np.float64).reshape(-1)
    returns = np.asarray(returns, dtype=np.float64).reshape(-1)
    n = len(actions)
    logp = log_softmax(logits)
    chosen = gather_rows(logp, actions, tag="loss.chosen")
    policy_term = scale(sum_all(mul(chosen, tensor(advantages,
                                                   dtype=logits.dtype))),
                        -1.0 / n)
    diff = sub(tensor(returns.reshape(-1, 1), dtype=values.dtype), values)
    value_term = scale(sum_all(mul(diff, diff)), value_coef / n)
    plogp = mul(softmax(logits), logp)
    entropy = -float(plogp.data.sum()) / n
    # -entropy_coef * mean entropy == +entropy_coef * mean of sum p*log p
    loss = add(add(policy_term, value_term),
               scale(sum_all(plogp), entropy_coef / n))
    stats = {
        "policy_loss": float(policy_term.data),
        "value_loss": float(value_term.data),
        "entropy": entropy,
    }
    return loss, stats


class Adam:
    """Standard Adam with bias correction; moments kept in float64."""

    def __init__(self, tensors, beta1=0.9, beta2=0.999, eps=1e-8):
        self.tensors = list(tensors)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros(t.shape, dtype=np.float64) for t in self.tensors]
        self.v = [np.zeros(t.shape, dtype=np.float64) for t in self.tensors]

    def step(self, grads, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction = np.sqrt(1.0 - b2 ** self.t) / (1.0 - b1 ** self.t)
        for p, g, m, v in zip(self.tensors, grads, self.m, self.v):
            g64 = g.astype(np.float64)
            m += (1.0 - b1) * (g64 - m)
            v += (1.0 - b2) * (g64 * g64 - v)
            update = lr * correction * m / (np.sqrt(v) + self.eps)
            p.data = (p.data.astype(np.float64) - update).astype(p.dtype)


def clip_gradients(grads, max_norm: float):
    """Scale gradients so the global norm is at most ``max_norm``."""
    norm = global_norm(grads)
    if norm > max_norm:
        factor = max_norm / norm
        grads = [g * factor for g in grads]
    return grads, norm


def linear_schedule(start: float, end: float, update: int, n_updates: int) -> float:
    """Linear from start (first update) to exactly end (last update)."""
    if n_updates <= 1:
        return end
    progress = update / (n_updates - 1)
    return start + (end - start) * progress


def _episode_seed(seed: int, env_idx: int, episode_idx: int) -> int:
    return int(np.random.SeedSequence((seed, env_idx, episode_idx))
               .generate_state(1)[0])


def train(cfg: TrainConfig, env_cfg: EnvConfig, run_dir,
          params: EpnParams | None = None):
    """Run the loop; returns (params, metrics rows). Artifacts in run_dir:
    metrics.csv (append-only), config.json, periodic + final checkpoints.

    Pass ``params`` to resume, e.g. the higher-discount finetune phase that
    restarts from a converged low-discount checkpoint with gamma=0.95.
    """
    cfg.validate()
    os.makedirs(run_dir, exist_ok=True)
    dtype = np.float64 if cfg.precision == "float64" else np.float32
    dims = EpnDims.for_env(env_cfg)
    if params is None:
        params = init_params(dims, seed=cfg.seed, dtype=dtype)
    else:
        if params.dims != dims:
            raise ValueError(f"checkpoint dims {params.dims} do not fit an "
                             f"environment needing {dims}")
        params = params.astype(dtype)
    leaves = [t for _, t in params.named()]
    opt = Adam(leaves)

    with open(os.path.join(run_dir, "config.json"), "w") as fh:
        json.dump({"train": asdict(cfg), "env": _env_cfg_dict(env_cfg)},
                  fh, indent=2, sort_keys=True)

    envs = [AlchemyEnv(env_cfg) for _ in range(cfg.batch)]
    episode_counts = [0] * cfg.batch
    obs = []
    for i, env in enumerate(envs):
        obs.append(env.reset(_episode_seed(cfg.seed, i, 0)))
        episode_counts[i] = 1
    states = [initial_state(dims, dtype=dtype) for _ in range(cfg.batch)]
    rngs = [np.random.default_rng([cfg.seed, 7000 + i])
            for i in range(cfg.batch)]

    n_updates = cfg.total_steps // cfg.unroll
    metrics_path = os.path.join(run_dir, "metrics.csv")
    metrics: list[dict] = []
    with open(metrics_path, "a") as fh:
        if fh.tell() == 0:
            fh.write(",".join(METRICS_COLUMNS) + "\n")

    for k in range(n_updates):
        lr = linear_schedule(cfg.lr, cfg.lr_floor, k, n_updates)
        beta_e = linear_schedule(cfg.entropy_coef, 0.0, k, n_updates)
        states = [s.detached() for s in states]

        logits_steps: list[Tensor] = []
        values_steps: list[Tensor] = []
        actions = np.zeros((cfg.unroll, cfg.batch), dtype=np.int64)
        rewards = np.zeros((cfg.unroll, cfg.batch))
        terminals = np.zeros((cfg.unroll, cfg.batch), dtype=bool)
        for t in range(cfg.unroll):
            for i, env in enumerate(envs):
                logits, value, state, _ = epn_forward(params, obs[i], states[i])
                states[i] = state
                if not np.isfinite(logits.data).all():
                    raise TrainingDivergence(
                        f"non-finite logits at update {k}, step {t}, env {i}: "
                        "lower the learning rate or tighten the gradient clip")
                a = sample_action(logits.data, rngs[i], mode="sample")
                rec = env.step(a)
                reward = rec.env_reward + rec.shaping_reward
                write_memory(states[i], rec, env_cfg,
                             obs_after=env.observation())
                states[i].prev_action = rec.action_index
                states[i].prev_reward = float(reward)
                obs[i] = env.observation()
                logits_steps.append(logits)
                values_steps.append(value)
                actions[t, i] = rec.action_index
                rewards[t, i] = reward
                if env.done:
                    terminals[t, i] = True
                    obs[i] = env.reset(
                        _episode_seed(cfg.seed, i, episode_counts[i]))
                    episode_counts[i] += 1
                    states[i] = initial_state(dims, dtype=dtype)

        bootstrap = np.zeros(cfg.batch)
        for i, env in enumerate(envs):
            if terminals[-1, i]:
                continue
            _, value, _, _ = epn_forward(params, obs[i], states[i].detached())
            bootstrap[i] = float(value.data[0, 0])
        values_arr = np.array([float(v.data[0, 0]) for v in values_steps])
        values_arr = values_arr.reshape(cfg.unroll, cfg.batch)
        returns, advantages = n_step_returns(rewards, values_arr, bootstrap,
                                             cfg.gamma, terminals)

        loss, stats = a2c_loss(
            concat(logits_steps, axis=0, tag="loss.logits"),
            actions.reshape(-1), advantages.reshape(-1), returns.reshape(-1),
            concat(values_steps, axis=0, tag="loss.values"),
            cfg.value_coef, beta_e,
        )
        if not np.isfinite(loss.data):
            raise TrainingDivergence(
                f"non-finite loss at update {k} (env step {(k + 1) * cfg.unroll}): "
                f"loss={float(loss.data)!r} stats={stats} lr={lr:.3e} "
                f"mean reward={rewards.mean():.3f}")
        backward(loss)
        grads = [t.grad if t.grad is not None else np.zeros(t.shape, t.dtype)
                 for t in leaves]
        grads, raw_norm = clip_gradients(grads, cfg.grad_clip)
        clipped_norm = global_norm(grads)
        assert clipped_norm <= cfg.grad_clip * (1.0 + 1e-6), clipped_norm
        opt.step(grads, lr)

        row = {
            "update": k + 1,
            "env_steps": (k + 1) * cfg.unroll,
            "loss": float(loss.data),
            "policy_loss": stats["policy_loss"],
            "value_loss": stats["value_loss"],
            "entropy": stats["entropy"],
            "grad_norm": raw_norm,
            "lr": lr,
            "entropy_coef": beta_e,
            "eval_score": "",
        }
        if cfg.eval_every and (k + 1) % cfg.eval_every == 0:
            report = evaluate(params, EvalConfig(n_episodes=cfg.eval_episodes,
                                                 mode="sample",
                                                 seed=cfg.seed + 50_000),
                              env_cfg)
            row["eval_score"] = report["mean"]
        metrics.append(row)
        with open(metrics_path, "a") as fh:
            fh.write(",".join(_fmt(row[c]) for c in METRICS_COLUMNS) + "\n")
        if cfg.checkpoint_every and (k + 1) % cfg.checkpoint_every == 0:
            save_params(params, os.path.join(run_dir, f"ckpt_{k + 1:06d}.ckpt"))

    save_params(params, os.path.join(run_dir, "final.ckpt"))
    return params, metrics


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _env_cfg_dict(env_cfg: EnvConfig) -> dict:
    d = asdict(env_cfg)
    d["gen"] = {"missing_edges": list(env_cfg.gen.missing_edges)}
    return d


def evaluate(params: EpnParams, eval_cfg: EvalConfig, env_cfg: EnvConfig,
             collect_traces: bool = False):
    """Seeded evaluation episodes; scores exclude shaping by construction."""
    from .traces import run_episode

    dims = EpnDims.for_env(env_cfg)
    if params.dims != dims:
        raise ValueError(f"checkpoint dims {params.dims} do not fit an "
                         f"environment needing {dims}")
    env_cfg = replace(env_cfg, shaping=eval_cfg.shaping)
    policy = EpnPolicy(params, mode=eval_cfg.mode,
                       use_memory=eval_cfg.memory_enabled,
                       sample_seed=eval_cfg.seed,
                       record_activations=eval_cfg.record_activations)
    scores = []
    missing = []
    traces = []
    for j in range(eval_cfg.n_episodes):
        trace, _ = run_episode(policy, env_cfg, seed=eval_cfg.seed + j)
        scores.append(trace.steps[-1].info.score_after)
        missing.append(12 - bin(trace.chemistry.edges.mask).count("1"))
        if collect_traces:
            traces.append(trace)
    scores = np.asarray(scores, dtype=np.float64)
    by_missing = {}
    for m in sorted(set(missing)):
        group = scores[[i for i, mm in enumerate(missing) if mm == m]]
        by_missing[m] = {
            "n": int(len(group)),
            "mean": float(group.mean()),
            "sem": _sem(group),
        }
    report = {
        "n": int(len(scores)),
        "mean": float(scores.mean()),
        "sem": _sem(scores),
        "by_missing_edges": by_missing,
        "scores": [int(s) for s in scores],
    }
    if collect_traces:
        return report, traces
    return report


def _sem(values) -> float | None:
    if len(values) < 2:
        return None
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))


def smoke_setup(seed: int = 0):
    """Reduced-task configs for the desk-scale learning check: one trial per
    episode, no missing edges, a budget well under 30 CPU-minutes."""
    env_cfg = EnvConfig(trials_per_episode=1, gen=GenConfig(missing_edges=(0,)),
                        seed=seed)
    train_cfg = TrainConfig(total_steps=30_000, seed=seed,
                            eval_every=0, checkpoint_every=0)
    return train_cfg, env_cfg
