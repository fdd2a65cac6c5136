"""Rollout adapter that drives an episodic planning network as a policy."""
from __future__ import annotations

import numpy as np

from ..environment import AlchemyEnv, EnvConfig, StepRecord, index_action
from ..traces import Policy
from .epn import (
    AgentState,
    EpnParams,
    ForwardTrace,
    epn_forward,
    initial_state,
    sample_action,
    write_memory,
)


class EpnPolicy(Policy):
    """Runs the network greedily (argmax) or stochastically per step.

    ``use_memory=False`` ablates the episodic memory: entries are never
    written, so the attention readout stays zero for the whole episode.
    """

    name = "epn"

    def __init__(self, params: EpnParams, mode: str = "argmax",
                 use_memory: bool = True, sample_seed: int = 0,
                 record_activations: bool = False):
        if mode not in ("argmax", "sample"):
            raise ValueError(f"unknown action mode {mode!r}")
        self.params = params
        self.mode = mode
        self.use_memory = use_memory
        self.record_activations = record_activations
        self._sample_seed = sample_seed
        self._cfg: EnvConfig | None = None
        self._state: AgentState | None = None
        self._rng = np.random.default_rng(sample_seed)
        self._pending: StepRecord | None = None
        self._last_trace: ForwardTrace | None = None

    def begin_episode(self, cfg: EnvConfig, seed: int) -> None:
        self._cfg = cfg
        self._state = initial_state(self.params.dims,
                                    dtype=self.params.pi_w.dtype)
        self._rng = np.random.default_rng([self._sample_seed, seed])
        self._pending = None
        self._last_trace = None

    def act(self, env: AlchemyEnv):
        obs = env.observation()
        if self._pending is not None and self.use_memory:
            write_memory(self._state, self._pending, self._cfg, obs_after=obs)
        self._pending = None
        logits, _value, state, trace = epn_forward(
            self.params, obs, self._state, record=self.record_activations)
        self._state = state.detached()
        self._last_trace = trace
        idx = sample_action(logits.data, self._rng, mode=self.mode)
        return index_action(idx, env.cfg)

    def observe(self, record: StepRecord) -> None:
        self._state.prev_action = record.action_index
        self._state.prev_reward = float(record.env_reward + record.shaping_reward)
        self._pending = record

    def activation_snapshot(self) -> dict | None:
        t = self._last_trace
        if t is None:
            return None
        return {
            "lstm_h": [round(float(v), 6) for v in t.lstm_h],
            "transformer_pooled": [round(float(v), 6) for v in t.pooled],
            "value": round(t.value, 6),
        }
