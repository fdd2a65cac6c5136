"""Episode traces: line-delimited records, replay, rollout runner, eval sets.

A trace file is one header line followed by one line per step, each a
canonically serialized JSON object (sorted keys, compact separators), so a
write -> read -> write cycle is byte identical.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .chemistry import Chemistry
from .environment import (
    NOOP,
    Action,
    AlchemyEnv,
    EnvConfig,
    StepInfo,
    StepRecord,
    index_action,
)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class EpisodeTrace:
    seed: int
    cfg: EnvConfig
    chemistry: Chemistry
    policy: str
    flags: dict
    steps: tuple[StepRecord, ...]

    @property
    def score(self) -> int:
        return sum(rec.env_reward for rec in self.steps)

    def trial_deposits(self) -> list[int]:
        totals = [0] * self.cfg.trials_per_episode
        for rec in self.steps:
            totals[rec.trial - 1] += rec.env_reward
        return totals

    @property
    def trace_id(self) -> str:
        return f"{self.policy}-{self.seed:010d}"


def _json_line(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def header_record(trace: EpisodeTrace) -> dict:
    return {
        "kind": "header",
        "format_version": FORMAT_VERSION,
        "seed": trace.seed,
        "env": trace.cfg.to_dict(),
        "chemistry": trace.chemistry.to_record(),
        "policy": trace.policy,
        "flags": trace.flags,
        "n_steps": len(trace.steps),
    }


def step_to_record(rec: StepRecord) -> dict:
    info = asdict(rec.info)
    info["hue_counts"] = list(info["hue_counts"])
    info["deposited"] = list(info["deposited"])
    return {
        "kind": "step",
        "trial": rec.trial,
        "step": rec.step,
        "observation": [float(x) for x in rec.observation],
        "action_index": rec.action_index,
        "env_reward": rec.env_reward,
        "shaping_reward": rec.shaping_reward,
        "info": info,
    }


def step_from_record(obj: dict, cfg: EnvConfig) -> StepRecord:
    info = dict(obj["info"])
    info["hue_counts"] = tuple(info["hue_counts"])
    info["deposited"] = tuple(bool(x) for x in info["deposited"])
    return StepRecord(
        trial=obj["trial"],
        step=obj["step"],
        observation=np.asarray(obj["observation"], dtype=np.float64),
        action_index=obj["action_index"],
        action=index_action(obj["action_index"], cfg),
        env_reward=obj["env_reward"],
        shaping_reward=obj["shaping_reward"],
        info=StepInfo(**info),
    )


def write_trace(trace: EpisodeTrace, path: Path | str) -> Path:
    path = Path(path)
    lines = [_json_line(header_record(trace))]
    lines.extend(_json_line(step_to_record(rec)) for rec in trace.steps)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_trace(path: Path | str) -> EpisodeTrace:
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("kind") != "header":
        raise ValueError(f"{path}: first line is not a trace header")
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {header['format_version']}")
    cfg = EnvConfig.from_dict(header["env"])
    steps = []
    for line in lines[1:]:
        obj = json.loads(line)
        if obj.get("kind") != "step":
            raise ValueError(f"{path}: unexpected record kind {obj.get('kind')!r}")
        steps.append(step_from_record(obj, cfg))
    if len(steps) != header["n_steps"]:
        raise ValueError(f"{path}: expected {header['n_steps']} steps, found {len(steps)}")
    return EpisodeTrace(
        seed=header["seed"],
        cfg=cfg,
        chemistry=Chemistry.from_record(header["chemistry"]),
        policy=header["policy"],
        flags=header["flags"],
        steps=tuple(steps),
    )


class Policy:
    """Base rollout policy. Subclasses read only observable state."""

    name = "noop"

    def begin_episode(self, cfg: EnvConfig, seed: int) -> None:
        pass

    def act(self, env: AlchemyEnv) -> Action:
        raise NotImplementedError

    def observe(self, record: StepRecord) -> None:
        pass

    def activation_snapshot(self) -> dict | None:
        return None

    def belief_snapshot(self) -> dict | None:
        return None


class NoOpPolicy(Policy):
    name = "noop"

    def act(self, env: AlchemyEnv) -> Action:
        return NOOP


def run_episode(
    policy: Policy,
    cfg: EnvConfig,
    seed: int,
    collect_activations: bool = False,
    collect_belief: bool = False,
) -> tuple[EpisodeTrace, list[dict]]:
    """Roll one episode; returns the trace plus any per-step sidecar records."""
    env = AlchemyEnv(cfg)
    env.reset(seed)
    policy.begin_episode(cfg, seed)
    steps: list[StepRecord] = []
    sidecar: list[dict] = []
    while not env.done:
        action = policy.act(env)
        rec = env.step(action)
        policy.observe(rec)
        steps.append(rec)
        extra: dict = {}
        if collect_activations:
            snap = policy.activation_snapshot()
            if snap is not None:
                extra.update(snap)
        if collect_belief:
            snap = policy.belief_snapshot()
            if snap is not None:
                extra["belief"] = snap
        if extra:
            sidecar.append({"trial": rec.trial, "step": rec.step, **extra})
    flags = {"collect_activations": collect_activations, "collect_belief": collect_belief}
    trace = EpisodeTrace(
        seed=seed,
        cfg=cfg,
        chemistry=env.chemistry,
        policy=policy.name,
        flags=flags,
        steps=tuple(steps),
    )
    return trace, sidecar


def replay_trace(trace: EpisodeTrace) -> EpisodeTrace:
    """Re-run the recorded actions from the recorded seed and config."""
    env = AlchemyEnv(trace.cfg)
    env.reset(trace.seed)
    steps = [env.step(rec.action_index) for rec in trace.steps]
    if not env.done:
        raise ValueError("trace ended before the episode finished")
    return EpisodeTrace(
        seed=trace.seed,
        cfg=trace.cfg,
        chemistry=env.chemistry,
        policy=trace.policy,
        flags=trace.flags,
        steps=tuple(steps),
    )


def traces_equal(a: EpisodeTrace, b: EpisodeTrace) -> bool:
    """Bit-exact equality via the canonical serialization."""
    if header_record(a) != header_record(b):
        return False
    if len(a.steps) != len(b.steps):
        return False
    return all(
        _json_line(step_to_record(x)) == _json_line(step_to_record(y))
        for x, y in zip(a.steps, b.steps)
    )


def write_sidecar(records: list[dict], path: Path | str) -> Path:
    path = Path(path)
    path.write_text("\n".join(_json_line(r) for r in records) + ("\n" if records else ""))
    return path


def read_sidecar(path: Path | str) -> list[dict]:
    text = Path(path).read_text()
    return [json.loads(line) for line in text.splitlines() if line]


def sidecar_path(trace_path: Path | str, kind: str) -> Path:
    trace_path = Path(trace_path)
    stem = trace_path.name
    if stem.endswith(".trace.jsonl"):
        stem = stem[: -len(".trace.jsonl")]
    return trace_path.with_name(f"{stem}.{kind}.jsonl")


def trace_path(out_dir: Path | str, trace: EpisodeTrace) -> Path:
    return Path(out_dir) / f"{trace.trace_id}.trace.jsonl"


# -- evaluation sets ---------------------------------------------------------


def generate_eval_set(seed: int, n: int, cfg: EnvConfig = EnvConfig()) -> dict:
    """Manifest of n episode seeds with their realized missing-edge counts."""
    rng = np.random.default_rng(seed)
    episode_seeds = [int(s) for s in rng.integers(0, 2**31 - 1, size=n)]
    episodes = []
    for ep_seed in episode_seeds:
        chem = sample_chemistry_for_episode(ep_seed, cfg)
        episodes.append({"seed": ep_seed, "missing_edges": chem.n_missing})
    return {
        "kind": "eval_set",
        "format_version": FORMAT_VERSION,
        "seed": seed,
        "n": n,
        "env": cfg.to_dict(),
        "episodes": episodes,
    }


def sample_chemistry_for_episode(ep_seed: int, cfg: EnvConfig) -> Chemistry:
    """The chemistry an env with this config deals for `ep_seed`."""
    env = AlchemyEnv(cfg)
    env.reset(ep_seed)
    return env.chemistry


def write_eval_set(manifest: dict, path: Path | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return path


def read_eval_set(path: Path | str) -> dict:
    manifest = json.loads(Path(path).read_text())
    if manifest.get("kind") != "eval_set":
        raise ValueError(f"{path} is not an eval-set manifest")
    return manifest
