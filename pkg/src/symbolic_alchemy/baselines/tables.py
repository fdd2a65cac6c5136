"""Lookup tables for vectorized belief filtering and trial planning.

Hypotheses are rows (potion-map index, percept-map index, edge mask). All
per-hypothesis predicates and values used by the exact observer reduce to
integer gathers over the tables built here.

Vertex sets are 8-bit masks (bit v = vertex id v), which makes reachability
a shift-and-or flood fill. Move directions are addressed by
``2 * axis + dirbit`` with dirbit 1 meaning "toward coordinate +1".
"""
from __future__ import annotations

import numpy as np

from ..chemistry import (
    EDGE_THROUGH,
    N_EDGES,
    REWARD_BY_ID,
    PerceptMap,
    PotionMap,
    vertex_coords,
    vertex_id,
)

N_MAPS = 48
N_MASKS = 1 << N_EDGES


def _build_map_tables():
    lat_of_percept = np.zeros((N_MAPS, 8), dtype=np.int8)
    per_of_lat = np.zeros((N_MAPS, 8), dtype=np.int8)
    for idx in range(N_MAPS):
        xm = PerceptMap.from_index(idx)
        for vid in range(8):
            pid = vertex_id(xm.to_percept(vertex_coords(vid)))
            per_of_lat[idx, vid] = pid
            lat_of_percept[idx, pid] = vid
    axis_of_hue = np.zeros((N_MAPS, 6), dtype=np.int8)
    dirbit_of_hue = np.zeros((N_MAPS, 6), dtype=np.int8)
    for idx in range(N_MAPS):
        pm = PotionMap.from_index(idx)
        for hue in range(6):
            axis_of_hue[idx, hue] = pm.axis_of(hue)
            dirbit_of_hue[idx, hue] = 1 if pm.direction_of(hue) > 0 else 0
    return lat_of_percept, per_of_lat, axis_of_hue, dirbit_of_hue


LAT_OF_PERCEPT, PER_OF_LAT, AXIS_OF_HUE, DIRBIT_OF_HUE = _build_map_tables()

# direction slot of each (potion map, hue): 2 * axis + dirbit, in 0..5
DIR_SLOT_OF_HUE = (2 * AXIS_OF_HUE + DIRBIT_OF_HUE).astype(np.int8)


def _build_dirmask_table():
    """dirmask_of[pm, avail] = set of move directions open under hue set `avail`."""
    table = np.zeros((N_MAPS, 64), dtype=np.int8)
    for pm in range(N_MAPS):
        for avail in range(64):
            dm = 0
            for hue in range(6):
                if avail >> hue & 1:
                    dm |= 1 << int(DIR_SLOT_OF_HUE[pm, hue])
            table[pm, avail] = dm
    return table


DIRMASK_OF = _build_dirmask_table()


def _build_present_tables():
    """present[a, db, mask] = vertices from which a move along (a, db) exists."""
    masks = np.arange(N_MASKS, dtype=np.int32)
    present = np.zeros((3, 2, N_MASKS), dtype=np.int32)
    for axis in range(3):
        for dirbit in (0, 1):
            for vid in range(8):
                if (vid >> axis & 1) != (1 - dirbit):
                    continue
                has_edge = masks >> int(EDGE_THROUGH[vid, axis]) & 1
                present[axis, dirbit] |= has_edge << vid
    return present


PRESENT_MOVERS = _build_present_tables()

# best vertex reward over an 8-bit vertex set; empty set never queried
BEST_REWARD_IN_SET = np.full(256, -128, dtype=np.int8)
for _set in range(1, 256):
    BEST_REWARD_IN_SET[_set] = max(
        int(REWARD_BY_ID[v]) for v in range(8) if _set >> v & 1
    )

MAX_ROUNDS = 7  # diameter bound for any connected subgraph of the cube

_BEST_REACH: np.ndarray | None = None
_REACH_COST: np.ndarray | None = None


def _build_reach_tables() -> None:
    global _BEST_REACH, _REACH_COST
    table = np.zeros((MAX_ROUNDS + 1, 64, N_MASKS, 8), dtype=np.int8)
    cost = np.zeros((MAX_ROUNDS + 1, 64, N_MASKS, 8), dtype=np.int8)
    reach = np.broadcast_to(
        (1 << np.arange(8, dtype=np.int32))[None, None, :], (64, N_MASKS, 8)
    ).copy()
    table[0] = BEST_REWARD_IN_SET[reach]
    dm_bits = np.arange(64, dtype=np.int32)[:, None, None]
    for rounds in range(1, MAX_ROUNDS + 1):
        grown = reach.copy()
        for axis in range(3):
            for dirbit in (0, 1):
                allowed = dm_bits >> (2 * axis + dirbit) & 1
                movers = reach & PRESENT_MOVERS[axis, dirbit][None, :, None]
                moved = movers << (1 << axis) if dirbit else movers >> (1 << axis)
                grown |= moved * allowed
        reach = grown
        table[rounds] = BEST_REWARD_IN_SET[reach]
        cost[rounds] = np.where(table[rounds] == table[rounds - 1], cost[rounds - 1], rounds)
    _BEST_REACH = table
    _REACH_COST = cost


def best_reach_table() -> np.ndarray:
    """best_reach[r, dirmask, edge_mask, vertex]: best reward within r moves.

    Moves may reuse any open direction; built lazily (one-time flood fill
    over every direction set and edge mask) and cached for the process.
    """
    if _BEST_REACH is None:
        _build_reach_tables()
    return _BEST_REACH


def reach_cost_table() -> np.ndarray:
    """reach_cost[r, dirmask, edge_mask, vertex]: moves to the r-round best.

    The fewest moves (≤ r) at which the reward reported by
    ``best_reach_table()[r]`` first becomes reachable.
    """
    if _REACH_COST is None:
        _build_reach_tables()
    return _REACH_COST
