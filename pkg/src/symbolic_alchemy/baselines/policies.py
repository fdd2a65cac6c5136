"""Reference policies: exact Bayesian observer and scripted heuristics.

The observer keeps the exact posterior, discards every action that is
provably null or invalid under all surviving hypotheses, and ranks the rest
by posterior-weighted immediate reward plus per-hypothesis trial value.
Exact Q ties break toward the highest action index. Ties persist only where
the planning bound is flat — most notably at the untouched prior, where
symmetry makes every non-wasteful action equally valued — and resolving
them toward applies keeps the observer acting and collecting evidence
instead of idling on NoOp.
"""
from __future__ import annotations

import numpy as np

from ..chemistry import EDGE_THROUGH, GenConfig
from ..environment import (
    NOOP,
    Action,
    AlchemyEnv,
    EnvConfig,
    PublicState,
    apply_by_hue,
    deposit,
    index_action,
    n_actions,
)
from ..traces import Policy
from .belief import BeliefState, _prior_arrays, event_from_step, init_belief, update_belief
from .planning import (
    AXIS_OF_HUE,
    DEFAULT_THRESHOLDS,
    DIRBIT_OF_HUE,
    DIRMASK_OF,
    EPS_STEP,
    MAX_ROUNDS,
    PlanThresholds,
    batched_greedy_values,
    best_reach_table,
    exact_value,
    greedy_value,
    is_exhaustive_instance,
    reach_cost_table,
)
from .tables import LAT_OF_PERCEPT

N_HUES = 6


def _avail_mask(counts) -> int:
    mask = 0
    for hue in range(N_HUES):
        if counts[hue] > 0:
            mask |= 1 << hue
    return mask


def _candidate_actions(ps: PublicState) -> list[Action]:
    """Valid actions in flat-index order (NoOp, applies, deposits)."""
    actions = [NOOP]
    n = len(ps.stone_deposited)
    for stone in range(n):
        for hue in range(N_HUES):
            if not ps.stone_deposited[stone] and ps.hue_counts[hue] > 0:
                actions.append(apply_by_hue(stone, hue))
    for stone in range(n):
        if not ps.stone_deposited[stone]:
            actions.append(deposit(stone))
    return actions


def _model_value(pm_idx, edge_mask, stones, counts, steps, thresholds, memo) -> float:
    if steps <= 0 or not stones:
        return 0.0
    if is_exhaustive_instance(len(stones), sum(counts), steps, thresholds):
        return float(exact_value(pm_idx, edge_mask, stones, counts, steps, memo))
    return float(greedy_value(pm_idx, edge_mask, stones, counts, steps))


class _PriorPlanner:
    """Closed-form posterior averages while the belief is still the prior.

    At the prior, the latent image of any fixed percept is uniform over the
    8 vertices and independent of the potion map and edge mask, so the
    value sums factor per stone. Constants are cached per (hue availability,
    move budget) and shared across episodes.
    """

    def __init__(self, cfg: GenConfig):
        pm, xm, mask, w = _prior_arrays(cfg)
        keys = pm.astype(np.int64) << 12 | mask.astype(np.int64)
        uniq, inverse = np.unique(keys, return_inverse=True)
        self.w = np.bincount(inverse, weights=w)
        self.pm = (uniq >> 12).astype(np.int32)
        self.mask = (uniq & 0xFFF).astype(np.int32)
        self._stone_cache: dict[tuple[int, int], float] = {}
        self._moved_cache: dict[tuple[int, int, int], float] = {}

    @staticmethod
    def _adjusted(rounds, dm, mask, vertex) -> np.ndarray:
        best = best_reach_table()[rounds, dm, mask, vertex].astype(np.float64)
        cost = reach_cost_table()[rounds, dm, mask, vertex].astype(np.float64)
        return np.where(best > 0, best - EPS_STEP * (cost + 1.0), 0.0)

    def stone_const(self, avail: int, rounds: int) -> float:
        key = (avail, rounds)
        if key not in self._stone_cache:
            dm = DIRMASK_OF[self.pm, avail].astype(np.int32)
            vals = self._adjusted(rounds, dm[:, None], self.mask[:, None],
                                  np.arange(8)[None, :])
            self._stone_cache[key] = float(vals.mean(axis=1) @ self.w)
        return self._stone_cache[key]

    def moved_const(self, avail_after: int, hue: int, rounds: int) -> float:
        key = (avail_after, hue, rounds)
        if key not in self._moved_cache:
            axis = AXIS_OF_HUE[self.pm, hue].astype(np.int32)[:, None]
            dirbit = DIRBIT_OF_HUE[self.pm, hue].astype(np.int32)[:, None]
            v = np.arange(8, dtype=np.int32)[None, :]
            at_end = (v >> axis & 1) == dirbit
            present = (self.mask[:, None] >> EDGE_THROUGH[v, axis] & 1) == 1
            nxt = np.where(at_end | ~present, v, v ^ 1 << axis)
            dm = DIRMASK_OF[self.pm, avail_after].astype(np.int32)[:, None]
            vals = self._adjusted(rounds, dm, self.mask[:, None], nxt)
            self._moved_cache[key] = float(vals.mean(axis=1) @ self.w)
        return self._moved_cache[key]


_PRIOR_PLANNERS: dict[GenConfig, _PriorPlanner] = {}


def _prior_planner(cfg: GenConfig) -> _PriorPlanner:
    if cfg not in _PRIOR_PLANNERS:
        _PRIOR_PLANNERS[cfg] = _PriorPlanner(cfg)
    return _PRIOR_PLANNERS[cfg]


def _prior_phase_q(planner, ps, actions, counts, steps) -> list[float]:
    n_undep = sum(not d for d in ps.stone_deposited)
    avail = _avail_mask(counts)
    steps2 = steps - 1
    qs = []
    for action in actions:
        if action.kind == "noop":
            bank = n_undep
            rounds = min(steps2 - bank, MAX_ROUNDS)
            qs.append(n_undep * planner.stone_const(avail, rounds))
        elif action.kind == "deposit":
            bank = n_undep - 1
            rounds = min(steps2 - bank, MAX_ROUNDS)
            qs.append(ps.stone_rewards[action.stone]
                      + bank * planner.stone_const(avail, rounds))
        else:
            hue = action.hue
            avail2 = avail if counts[hue] > 1 else avail & ~(1 << hue)
            bank = n_undep
            rounds = min(steps2 - bank, MAX_ROUNDS)
            qs.append((n_undep - 1) * planner.stone_const(avail2, rounds)
                      + planner.moved_const(avail2, hue, rounds))
    return qs


def _collapse_models(belief: BeliefState, lat_by_stone: np.ndarray):
    """Group hypotheses by (potion map, edge mask, stone latents)."""
    keys = belief.pm.astype(np.int64) << 21 | belief.mask.astype(np.int64) << 9
    for col in range(lat_by_stone.shape[1]):
        keys |= lat_by_stone[:, col].astype(np.int64) << 3 * col
    uniq, inverse = np.unique(keys, return_inverse=True)
    w = np.bincount(inverse, weights=belief.w)
    pm = (uniq >> 21).astype(np.int32)
    mask = (uniq >> 9 & 0xFFF).astype(np.int32)
    lats = np.stack(
        [(uniq >> 3 * col & 0x7).astype(np.int32) for col in range(lat_by_stone.shape[1])],
        axis=1,
    )
    return pm, mask, lats, w


def ideal_observer_q(
    belief: BeliefState,
    ps: PublicState,
    thresholds: PlanThresholds = DEFAULT_THRESHOLDS,
    max_exact_models: int = 8,
    exact_memos: dict | None = None,
    force_direct: bool = False,
) -> tuple[list[Action], list[float]]:
    """Surviving candidate actions and their posterior-weighted Q values.

    Provably null or invalid actions are absent from the returned list.
    While the belief is the untouched prior, per-stone symmetry collapses
    the posterior average into a handful of cached constants; that closed
    form equals the direct hypothesis sum (``force_direct=True``) up to
    float rounding.
    """
    counts = ps.hue_counts
    steps = ps.steps_left_in_trial
    actions = _candidate_actions(ps)
    if len(actions) == 1:
        return [NOOP], [0.0]
    n_undep = sum(not d for d in ps.stone_deposited)

    if (
        belief.is_prior
        and not force_direct
        and n_undep >= 1
        and steps - 1 >= n_undep
    ):
        qs = _prior_phase_q(_prior_planner(belief.cfg), ps, actions, counts, steps)
        return actions, qs

    percept_ids = [ps.percept_id(s) for s in range(len(ps.stone_deposited))]
    lat_by_stone = np.stack(
        [
            LAT_OF_PERCEPT[belief.xm, pid].astype(np.int64)
            if not ps.stone_deposited[s]
            else np.zeros(belief.support_size, dtype=np.int64)
            for s, pid in enumerate(percept_ids)
        ],
        axis=1,
    )
    pm, mask, lats, w = _collapse_models(belief, lat_by_stone)
    undep_cols = [s for s, d in enumerate(ps.stone_deposited) if not d]
    col_of_stone = {s: i for i, s in enumerate(undep_cols)}
    lats_undep = lats[:, undep_cols]
    steps2 = steps - 1
    avail = _avail_mask(counts)

    kept: list[Action] = []
    qs: list[float] = []
    small = len(w) <= max_exact_models
    if exact_memos is None:
        exact_memos = {}

    for action in actions:
        if action.kind == "apply":
            v = lats[:, action.stone]
            axis = AXIS_OF_HUE[pm, action.hue].astype(np.int32)
            dirbit = DIRBIT_OF_HUE[pm, action.hue].astype(np.int32)
            at_end = (v >> axis & 1) == dirbit
            present = (mask >> EDGE_THROUGH[v, axis] & 1) == 1
            movable = ~at_end & present
            if not movable.any():
                continue  # provably null under every hypothesis
            avail2 = avail if counts[action.hue] > 1 else avail & ~(1 << action.hue)
            moved = np.where(movable, v ^ 1 << axis, v)
            lats2 = lats_undep.copy()
            lats2[:, col_of_stone[action.stone]] = moved
            kept.append(action)
            qs.append(_q_over_models(pm, mask, lats2, w, avail2, steps2,
                                     counts_after(counts, action.hue), 0.0,
                                     small, thresholds, exact_memos))
        elif action.kind == "deposit":
            keep_cols = [c for c in range(lats_undep.shape[1])
                         if c != col_of_stone[action.stone]]
            kept.append(action)
            qs.append(_q_over_models(pm, mask, lats_undep[:, keep_cols], w, avail,
                                     steps2, counts, float(ps.stone_rewards[action.stone]),
                                     small, thresholds, exact_memos))
        else:
            kept.append(action)
            qs.append(_q_over_models(pm, mask, lats_undep, w, avail, steps2,
                                     counts, 0.0, small, thresholds, exact_memos))
    return kept, qs


def ideal_observer_act(
    belief: BeliefState,
    ps: PublicState,
    thresholds: PlanThresholds = DEFAULT_THRESHOLDS,
    max_exact_models: int = 8,
    exact_memos: dict | None = None,
    force_direct: bool = False,
) -> Action:
    """One exact-observer decision for the current public state."""
    kept, qs = ideal_observer_q(
        belief, ps, thresholds, max_exact_models, exact_memos, force_direct
    )
    return _argmax_action(kept, qs)


def counts_after(counts, hue):
    return tuple(c - 1 if h == hue else c for h, c in enumerate(counts))


def _q_over_models(pm, mask, lat_cols, w, avail, steps, counts, immediate,
                   small, thresholds, exact_memos) -> float:
    if small:
        total = 0.0
        for i in range(len(w)):
            memo = exact_memos.setdefault((int(pm[i]), int(mask[i])), {})
            stones = tuple(int(x) for x in lat_cols[i])
            total += w[i] * _model_value(int(pm[i]), int(mask[i]), stones,
                                         tuple(counts), steps, thresholds, memo)
        return immediate + total
    vals = batched_greedy_values(pm, mask, lat_cols, avail, steps)
    return immediate + float(vals @ w)


def _argmax_action(actions: list[Action], qs: list[float]) -> Action:
    """Highest Q wins; exact ties resolve to the highest action index."""
    best_i = 0
    for i in range(1, len(qs)):
        if qs[i] >= qs[best_i]:
            best_i = i
    return actions[best_i]


class IdealObserverPolicy(Policy):
    """Exact posterior filtering plus posterior-weighted value maximization."""

    name = "ideal"

    def __init__(self, thresholds: PlanThresholds = DEFAULT_THRESHOLDS,
                 max_exact_models: int = 8):
        self.thresholds = thresholds
        self.max_exact_models = max_exact_models
        self.belief: BeliefState | None = None
        self._memos: dict = {}

    def begin_episode(self, cfg: EnvConfig, seed: int) -> None:
        self.belief = init_belief(cfg.gen)
        self._memos = {}

    def act(self, env: AlchemyEnv) -> Action:
        return ideal_observer_act(
            self.belief,
            env.public_state(),
            self.thresholds,
            self.max_exact_models,
            self._memos,
        )

    def observe(self, record) -> None:
        event = event_from_step(record)
        if event is not None:
            self.belief = update_belief(self.belief, event)

    def belief_snapshot(self) -> dict | None:
        if self.belief is None:
            return None
        return self.belief.marginals().to_dict()


class RandomHeuristicPolicy(Policy):
    """Banks +15 stones on sight, otherwise dips at random; banks positive
    stones in the last three steps of each trial."""

    name = "random"

    def __init__(self):
        self.rng = np.random.default_rng(0)

    def begin_episode(self, cfg: EnvConfig, seed: int) -> None:
        self.rng = np.random.default_rng([seed, 7919])

    def act(self, env: AlchemyEnv) -> Action:
        ps = env.public_state()
        undeposited = [s for s, d in enumerate(ps.stone_deposited) if not d]
        for stone in undeposited:
            if ps.stone_rewards[stone] == 15:
                return deposit(stone)
        if ps.steps_left_in_trial <= 3:
            for stone in undeposited:
                if ps.stone_rewards[stone] > 0:
                    return deposit(stone)
        hues = [h for h in range(N_HUES) if ps.hue_counts[h] > 0]
        if undeposited and hues:
            stone = int(self.rng.choice(undeposited))
            hue = int(self.rng.choice(hues))
            return apply_by_hue(stone, hue)
        return NOOP


class UniformRandomPolicy(Policy):
    """Uniform over the full flat action space, invalid actions included."""

    name = "uniform"

    def __init__(self):
        self.rng = np.random.default_rng(0)
        self._n = 22

    def begin_episode(self, cfg: EnvConfig, seed: int) -> None:
        self.rng = np.random.default_rng([seed, 104729])
        self._n = n_actions(cfg)

    def act(self, env: AlchemyEnv) -> Action:
        return index_action(int(self.rng.integers(self._n)), env.cfg)
