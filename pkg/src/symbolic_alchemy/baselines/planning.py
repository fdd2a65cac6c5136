"""Per-hypothesis trial value: exact search on small instances, bound above.

``hypothesis_value`` answers: knowing the chemistry, how much deposit reward
can still be banked this trial from the given undeposited stones, potion
counts, and steps? Small instances get a memoized exhaustive search. Above
the configured size thresholds the value falls back to a greedy per-stone
allocation bound: every stone independently gets the whole remaining potion
pool, moves cost one step each from a shared budget that first reserves one
step per banked stone, and only stones with positive end value are banked.

The greedy bound charges each banked stone a step-cost rebate of
``EPS_STEP * (moves to its best reward + 1 deposit step)``. The rebate is
far below the integer reward grid, so it never flips a strict preference;
it exists to break the bound's plateau ties so that moving a stone toward
its best reward, or banking a finished stone now, strictly beats idling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chemistry import Chemistry, EDGE_THROUGH, REWARD_BY_ID
from .tables import (
    AXIS_OF_HUE,
    DIRBIT_OF_HUE,
    DIRMASK_OF,
    MAX_ROUNDS,
    best_reach_table,
    reach_cost_table,
)

EPS_STEP = 1.0 / 1024.0  # step-cost rebate unit; exact in binary floating point


@dataclass(frozen=True)
class PlanThresholds:
    """Largest instance the exhaustive branch accepts."""

    max_stones: int = 1
    max_potions: int = 4
    max_steps: int = 6


DEFAULT_THRESHOLDS = PlanThresholds()


def move_latent(pm_idx: int, edge_mask: int, vertex: int, hue: int) -> tuple[int, bool]:
    """Scalar transition under (potion map, edge mask); (vertex, moved?)."""
    axis = int(AXIS_OF_HUE[pm_idx, hue])
    dirbit = int(DIRBIT_OF_HUE[pm_idx, hue])
    if (vertex >> axis & 1) == dirbit:
        return vertex, False
    if not edge_mask >> int(EDGE_THROUGH[vertex, axis]) & 1:
        return vertex, False
    return vertex ^ 1 << axis, True


def is_exhaustive_instance(
    n_stones: int, total_potions: int, steps: int, th: PlanThresholds = DEFAULT_THRESHOLDS
) -> bool:
    return (
        n_stones <= th.max_stones
        and total_potions <= th.max_potions
        and steps <= th.max_steps
    )


def greedy_value(pm_idx: int, edge_mask: int, stones, counts, steps: int) -> float:
    """Greedy per-stone allocation bound; shared tables with the observer."""
    if steps <= 0 or not stones:
        return 0.0
    avail = 0
    for hue in range(6):
        if counts[hue] > 0:
            avail |= 1 << hue
    bank = min(len(stones), steps)
    rounds = min(steps - bank, MAX_ROUNDS)
    dm = int(DIRMASK_OF[pm_idx, avail])
    reach = best_reach_table()[rounds, dm, edge_mask]
    cost = reach_cost_table()[rounds, dm, edge_mask]
    vals = sorted(
        (
            int(reach[v]) - EPS_STEP * (int(cost[v]) + 1) if reach[v] > 0 else 0.0
            for v in stones
        ),
        reverse=True,
    )
    return float(sum(vals[:bank]))


def exact_value(
    pm_idx: int, edge_mask: int, stones, counts, steps: int, memo: dict | None = None
) -> int:
    """Optimal deposit sum by memoized exhaustive search.

    States key on (sorted stone vertices, counts, steps). Null applications
    are pruned: they consume a step and a potion without changing state, and
    the value is monotone in both.
    """
    if memo is None:
        memo = {}
    return _search(pm_idx, edge_mask, tuple(sorted(stones)), tuple(counts), steps, memo)


def _search(pm_idx, edge_mask, stones, counts, steps, memo) -> int:
    if steps <= 0 or not stones:
        return 0
    key = (stones, counts, steps)
    hit = memo.get(key)
    if hit is not None:
        return hit
    best = 0
    for i, vertex in enumerate(stones):
        rest = stones[:i] + stones[i + 1:]
        gain = int(REWARD_BY_ID[vertex]) + _search(
            pm_idx, edge_mask, rest, counts, steps - 1, memo
        )
        if gain > best:
            best = gain
        for hue in range(6):
            if not counts[hue]:
                continue
            moved, did_move = move_latent(pm_idx, edge_mask, vertex, hue)
            if not did_move:
                continue
            nxt_stones = tuple(sorted(rest + (moved,)))
            nxt_counts = counts[:hue] + (counts[hue] - 1,) + counts[hue + 1:]
            gain = _search(pm_idx, edge_mask, nxt_stones, nxt_counts, steps - 1, memo)
            if gain > best:
                best = gain
    memo[key] = best
    return best


def hypothesis_value(
    chem: Chemistry,
    stones,
    potion_counts,
    steps_left: int,
    thresholds: PlanThresholds = DEFAULT_THRESHOLDS,
    memo: dict | None = None,
) -> float:
    """Achievable deposit sum this trial under full knowledge of `chem`.

    Args:
        chem: the true chemistry.
        stones: latent vertex ids of the undeposited stones.
        potion_counts: remaining potions per hue (6 ints).
        steps_left: actions left in the trial.
    """
    stones = tuple(stones)
    pm_idx = chem.potion_map.index
    edge_mask = chem.edges.mask
    if steps_left <= 0 or not stones:
        return 0.0
    if is_exhaustive_instance(len(stones), sum(potion_counts), steps_left, thresholds):
        return float(exact_value(pm_idx, edge_mask, stones, potion_counts, steps_left, memo))
    return greedy_value(pm_idx, edge_mask, stones, potion_counts, steps_left)


def batched_greedy_values(
    pm_rows: np.ndarray,
    mask_rows: np.ndarray,
    stone_rows: np.ndarray,
    avail: int,
    steps: int,
) -> np.ndarray:
    """greedy_value vectorized over hypothesis rows.

    Args:
        pm_rows, mask_rows: per-row potion map index and edge mask.
        stone_rows: (rows, n_undeposited) latent vertex ids; may be empty.
        avail: available-hue bitmask shared across rows.
        steps: steps left, shared across rows.

    Matches greedy_value row for row; the property tests pin that equality.
    """
    n = len(pm_rows)
    if steps <= 0 or stone_rows.shape[1] == 0:
        return np.zeros(n)
    bank = min(stone_rows.shape[1], steps)
    rounds = min(steps - bank, MAX_ROUNDS)
    dm = DIRMASK_OF[pm_rows, avail].astype(np.int64)
    table = best_reach_table()[rounds]
    flat = (dm * table.shape[1] + mask_rows.astype(np.int64))[:, None] * 8 + stone_rows
    best = table.reshape(-1)[flat].astype(np.float64)
    cost = reach_cost_table()[rounds].reshape(-1)[flat].astype(np.float64)
    vals = np.where(best > 0, best - EPS_STEP * (cost + 1.0), 0.0)
    if bank == stone_rows.shape[1]:
        return vals.sum(axis=1)
    vals.sort(axis=1)
    return vals[:, -bank:].sum(axis=1)
