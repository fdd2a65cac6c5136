"""Episode environment: stones, potions, trials, shaping, observations.

An episode holds one hidden chemistry for 10 trials of 15 steps. Each trial
deals fresh stones and potions. Actions either do nothing, dip a stone into
a potion, or bank a stone in the cauldron for its current reward.

Two encodings are supported end to end:

* ``modified``: 21-dim observation, 22 actions addressed by potion hue.
* ``canonical``: 99-dim observation, 40 actions addressed by potion slot.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chemistry import (
    Chemistry,
    GenConfig,
    N_HUES,
    NULL_NONE,
    _sample_chemistry,
    apply_potion_latent,
    reward_of,
    vertex_id,
)

MODIFIED = "modified"
CANONICAL = "canonical"
ENCODINGS = (MODIFIED, CANONICAL)

NULL_SHAPING = -0.2
INVALID_SHAPING = -1.0
REPEAT_HUE_SHAPING = -1.0


@dataclass(frozen=True)
class EnvConfig:
    trials_per_episode: int = 10
    steps_per_trial: int = 15
    n_stones: int = 3
    n_potions: int = 12
    input_encoding: str = MODIFIED
    output_encoding: str = MODIFIED
    memory_encoding: str = MODIFIED
    shaping: bool = True
    gen: GenConfig = GenConfig()
    seed: int = 0

    def validate(self) -> None:
        for enc in (self.input_encoding, self.output_encoding, self.memory_encoding):
            if enc not in ENCODINGS:
                raise ValueError(f"unknown encoding {enc!r}")
        if min(self.trials_per_episode, self.steps_per_trial, self.n_stones, self.n_potions) < 1:
            raise ValueError("episode dimensions must be positive")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "trials_per_episode", "steps_per_trial", "n_stones", "n_potions",
            "input_encoding", "output_encoding", "memory_encoding", "shaping", "seed",
        )}
        d["gen"] = {
            "missing_edges": list(self.gen.missing_edges),
            "weights": list(self.gen.weights) if self.gen.weights is not None else None,
            "max_rejects": self.gen.max_rejects,
        }
        return d

    @staticmethod
    def from_dict(d: dict) -> "EnvConfig":
        g = d.get("gen", {})
        gen = GenConfig(
            missing_edges=tuple(g.get("missing_edges", GenConfig.missing_edges)),
            weights=tuple(g["weights"]) if g.get("weights") is not None else None,
            max_rejects=g.get("max_rejects", 10_000),
        )
        kwargs = {k: v for k, v in d.items() if k != "gen"}
        return EnvConfig(gen=gen, **kwargs)


def obs_dim(cfg: EnvConfig) -> int:
    if cfg.input_encoding == MODIFIED:
        return 5 * cfg.n_stones + N_HUES
    return 5 * cfg.n_stones + cfg.n_potions * (N_HUES + 1)


def n_actions(cfg: EnvConfig) -> int:
    if cfg.output_encoding == MODIFIED:
        return 1 + cfg.n_stones * N_HUES + cfg.n_stones
    return 1 + cfg.n_stones * cfg.n_potions + cfg.n_stones


@dataclass(frozen=True)
class Action:
    kind: str  # "noop" | "apply" | "deposit"
    stone: int | None = None
    hue: int | None = None  # modified addressing
    slot: int | None = None  # canonical addressing


NOOP = Action("noop")


def apply_by_hue(stone: int, hue: int) -> Action:
    return Action("apply", stone=stone, hue=hue)


def apply_by_slot(stone: int, slot: int) -> Action:
    return Action("apply", stone=stone, slot=slot)


def deposit(stone: int) -> Action:
    return Action("deposit", stone=stone)


def action_index(action: Action, cfg: EnvConfig) -> int:
    """Flat index of an action under the configured output encoding."""
    ns = cfg.n_stones
    if action.kind == "noop":
        return 0
    if cfg.output_encoding == MODIFIED:
        if action.kind == "apply":
            if action.hue is None:
                raise ValueError("modified apply actions address potions by hue")
            _check_range(action.stone, ns, "stone")
            _check_range(action.hue, N_HUES, "hue")
            return 1 + N_HUES * action.stone + action.hue
        _check_range(action.stone, ns, "stone")
        return 1 + ns * N_HUES + action.stone
    if action.kind == "apply":
        if action.slot is None:
            raise ValueError("canonical apply actions address potions by slot")
        _check_range(action.stone, ns, "stone")
        _check_range(action.slot, cfg.n_potions, "slot")
        return 1 + cfg.n_potions * action.stone + action.slot
    _check_range(action.stone, ns, "stone")
    return 1 + ns * cfg.n_potions + action.stone


def index_action(idx: int, cfg: EnvConfig) -> Action:
    """Inverse of action_index."""
    total = n_actions(cfg)
    if not 0 <= idx < total:
        raise ValueError(f"action index {idx} out of range 0..{total - 1}")
    if idx == 0:
        return NOOP
    ns = cfg.n_stones
    if cfg.output_encoding == MODIFIED:
        if idx <= ns * N_HUES:
            stone, hue = divmod(idx - 1, N_HUES)
            return apply_by_hue(stone, hue)
        return deposit(idx - 1 - ns * N_HUES)
    if idx <= ns * cfg.n_potions:
        stone, slot = divmod(idx - 1, cfg.n_potions)
        return apply_by_slot(stone, slot)
    return deposit(idx - 1 - ns * cfg.n_potions)


def _check_range(value, n, what):
    if value is None or not 0 <= value < n:
        raise ValueError(f"{what} {value} out of range 0..{n - 1}")


@dataclass
class Stone:
    vertex: int
    deposited: bool = False


@dataclass(frozen=True)
class StepInfo:
    """Ground-truth annotations recorded alongside every step."""

    kind: str
    valid: bool
    stone: int | None = None
    hue: int | None = None
    slot: int | None = None
    null_cause: str | None = None
    latent_before: int | None = None
    latent_after: int | None = None
    percept_before: int | None = None
    percept_after: int | None = None
    reward_before: int | None = None
    reward_after: int | None = None
    deposit_value: int | None = None
    hue_counts: tuple[int, ...] = ()
    deposited: tuple[bool, ...] = ()
    score_after: int = 0


@dataclass(frozen=True)
class StepRecord:
    trial: int  # 1-based
    step: int  # 0-based within the trial
    observation: np.ndarray  # encoding presented before acting
    action_index: int
    action: Action
    env_reward: int
    shaping_reward: float
    info: StepInfo


@dataclass(frozen=True)
class PublicState:
    """What a policy may see: exactly the observable game state."""

    stone_percepts: tuple[tuple[int, int, int], ...]
    stone_rewards: tuple[int, ...]
    stone_deposited: tuple[bool, ...]
    hue_counts: tuple[int, ...]
    trial: int
    step_in_trial: int
    steps_per_trial: int
    trials_per_episode: int

    @property
    def steps_left_in_trial(self) -> int:
        return self.steps_per_trial - self.step_in_trial

    def percept_id(self, stone: int) -> int:
        return vertex_id(self.stone_percepts[stone])


class AlchemyEnv:
    """One meta-RL episode: a hidden chemistry played over repeated trials."""

    def __init__(self, cfg: EnvConfig = EnvConfig()):
        cfg.validate()
        self.cfg = cfg
        self._rng: np.random.Generator | None = None
        self.chemistry: Chemistry | None = None
        self.done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        """Start a new episode; rng draws: chemistry, then per-trial deals."""
        self.episode_seed = self.cfg.seed if seed is None else seed
        self._rng = np.random.default_rng(self.episode_seed)
        self.chemistry = _sample_chemistry(self._rng, self.cfg.gen)
        self.trial = 0
        self.step_in_trial = 0
        self.done = False
        self.score = 0
        self.trial_deposits = [0] * self.cfg.trials_per_episode
        self._deal_trial()
        return self.observation()

    def _deal_trial(self) -> None:
        verts = self._rng.integers(0, 8, size=self.cfg.n_stones)
        self.stones = [Stone(int(v)) for v in verts]
        self.slot_hues = [int(h) for h in self._rng.integers(0, N_HUES, size=self.cfg.n_potions)]
        self.slot_used = [False] * self.cfg.n_potions
        self._last_hue: list[int | None] = [None] * self.cfg.n_stones

    # -- observable state ---------------------------------------------------

    def hue_counts(self) -> tuple[int, ...]:
        counts = [0] * N_HUES
        for hue, used in zip(self.slot_hues, self.slot_used):
            if not used:
                counts[hue] += 1
        return tuple(counts)

    def stone_percept(self, idx: int) -> np.ndarray:
        return self.chemistry.latent_to_percept(self.stones[idx].vertex)

    def stone_reward(self, idx: int) -> int:
        return reward_of(self.stones[idx].vertex)

    def public_state(self) -> PublicState:
        return PublicState(
            stone_percepts=tuple(tuple(int(x) for x in self.stone_percept(i))
                                 for i in range(self.cfg.n_stones)),
            stone_rewards=tuple(self.stone_reward(i) for i in range(self.cfg.n_stones)),
            stone_deposited=tuple(s.deposited for s in self.stones),
            hue_counts=self.hue_counts(),
            trial=self.trial,
            step_in_trial=self.step_in_trial,
            steps_per_trial=self.cfg.steps_per_trial,
            trials_per_episode=self.cfg.trials_per_episode,
        )

    def observation(self) -> np.ndarray:
        return self.encode_observation(self.cfg.input_encoding)

    def encode_observation(self, encoding: str) -> np.ndarray:
        """Stone blocks [3 percept, reward/15, deposited] then potion features."""
        parts = []
        for i in range(self.cfg.n_stones):
            percept = self.stone_percept(i).astype(np.float64)
            parts.append(np.concatenate([
                percept,
                [self.stone_reward(i) / 15.0, 1.0 if self.stones[i].deposited else 0.0],
            ]))
        if encoding == MODIFIED:
            counts = np.asarray(self.hue_counts(), dtype=np.float64)
            parts.append(counts / self.cfg.n_potions)
        else:
            for hue, used in zip(self.slot_hues, self.slot_used):
                onehot = np.zeros(N_HUES + 1)
                onehot[hue] = 1.0
                onehot[N_HUES] = 0.0 if used else 1.0
                parts.append(onehot)
        return np.concatenate(parts)

    # -- dynamics ------------------------------------------------------------

    def step(self, action: Action | int) -> StepRecord:
        if self.done:
            raise RuntimeError("episode is finished; call reset()")
        if isinstance(action, (int, np.integer)):
            action = index_action(int(action), self.cfg)
        obs = self.observation()
        counts_before = self.hue_counts()
        deposited_before = tuple(s.deposited for s in self.stones)

        env_reward = 0
        shaping = 0.0
        info_kw: dict = {"valid": True}

        if action.kind == "apply":
            env_reward, shaping, info_kw = self._apply(action)
        elif action.kind == "deposit":
            env_reward, shaping, info_kw = self._deposit(action)
        elif action.kind != "noop":
            raise ValueError(f"unknown action kind {action.kind!r}")

        if not self.cfg.shaping:
            shaping = 0.0

        self.score += env_reward
        info = StepInfo(
            kind=action.kind,
            hue_counts=counts_before,
            deposited=deposited_before,
            score_after=self.score,
            **info_kw,
        )
        record = StepRecord(
            trial=self.trial + 1,
            step=self.step_in_trial,
            observation=obs,
            action_index=action_index(action, self.cfg),
            action=action,
            env_reward=env_reward,
            shaping_reward=shaping,
            info=info,
        )
        self._advance()
        return record

    def _resolve_apply(self, action: Action) -> tuple[bool, int | None, int | None]:
        """Check validity and resolve (hue, slot) for an apply action."""
        stone = self.stones[action.stone]
        if self.cfg.output_encoding == CANONICAL:
            slot = action.slot
            if stone.deposited or self.slot_used[slot]:
                return False, self.slot_hues[slot], slot
            return True, self.slot_hues[slot], slot
        hue = action.hue
        if stone.deposited:
            return False, hue, None
        candidates = [i for i, (h, used) in enumerate(zip(self.slot_hues, self.slot_used))
                      if h == hue and not used]
        if not candidates:
            return False, hue, None
        slot = int(self._rng.choice(candidates))
        return True, hue, slot

    def _apply(self, action: Action):
        valid, hue, slot = self._resolve_apply(action)
        if not valid:
            return 0, INVALID_SHAPING, {
                "valid": False, "stone": action.stone, "hue": hue, "slot": action.slot,
            }
        stone = self.stones[action.stone]
        before = stone.vertex
        percept_before = vertex_id(self.chemistry.latent_to_percept(before))
        self.slot_used[slot] = True  # consumed even on null transitions
        after, cause = self._transition(before, hue)
        stone.vertex = after
        shaping = 0.0 if cause == NULL_NONE else NULL_SHAPING
        if self._last_hue[action.stone] == hue:
            shaping += REPEAT_HUE_SHAPING
        self._last_hue[action.stone] = hue
        return 0, shaping, {
            "valid": True,
            "stone": action.stone,
            "hue": hue,
            "slot": slot,
            "null_cause": cause,
            "latent_before": before,
            "latent_after": after,
            "percept_before": percept_before,
            "percept_after": vertex_id(self.chemistry.latent_to_percept(after)),
            "reward_before": reward_of(before),
            "reward_after": reward_of(after),
        }

    def _transition(self, vertex: int, hue: int) -> tuple[int, str]:
        return apply_potion_latent(self.chemistry, vertex, hue)

    def _deposit(self, action: Action):
        stone = self.stones[action.stone]
        if stone.deposited:
            return 0, INVALID_SHAPING, {"valid": False, "stone": action.stone}
        stone.deposited = True
        self._last_hue[action.stone] = None
        value = reward_of(stone.vertex)
        self.trial_deposits[self.trial] += value
        return value, 0.0, {
            "valid": True, "stone": action.stone, "deposit_value": value,
        }

    def _advance(self) -> None:
        self.step_in_trial += 1
        if self.step_in_trial < self.cfg.steps_per_trial:
            return
        self.trial += 1
        self.step_in_trial = 0
        if self.trial >= self.cfg.trials_per_episode:
            self.done = True
        else:
            self._deal_trial()
