"""Exact Bayesian belief over chemistries.

Transitions are deterministic given a chemistry, so likelihoods are 0/1 and
posterior updates are set filtering plus renormalization. The support is held
as aligned arrays (potion map, percept map, edge mask, weight), one row per
chemistry, and every update predicate is evaluated vectorized.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..chemistry import (
    Chemistry,
    EDGE_THROUGH,
    GenConfig,
    N_EDGES,
    REWARD_BY_ID,
    enumerate_chemistry_arrays,
)
from ..environment import StepRecord
from .tables import AXIS_OF_HUE, DIRBIT_OF_HUE, LAT_OF_PERCEPT, PER_OF_LAT


class BeliefError(ValueError):
    """Raised when an update leaves zero surviving hypotheses."""


@dataclass(frozen=True)
class ObservationEvent:
    """One observed potion application: percepts and rewards around it."""

    percept_before: int
    hue: int
    percept_after: int
    reward_before: int
    reward_after: int

    @property
    def is_null(self) -> bool:
        return self.percept_after == self.percept_before


def event_from_step(rec: StepRecord) -> ObservationEvent | None:
    """The observable evidence carried by a step; None for non-apply steps."""
    info = rec.info
    if info.kind != "apply" or not info.valid:
        return None
    return ObservationEvent(
        percept_before=info.percept_before,
        hue=info.hue,
        percept_after=info.percept_after,
        reward_before=info.reward_before,
        reward_after=info.reward_after,
    )


_PRIOR_CACHE: dict[GenConfig, tuple] = {}


def _prior_arrays(cfg: GenConfig):
    if cfg not in _PRIOR_CACHE:
        pm, xm, mask, w = enumerate_chemistry_arrays(cfg)
        _PRIOR_CACHE[cfg] = (
            pm.astype(np.int32),
            xm.astype(np.int32),
            mask.astype(np.int32),
            w.astype(np.float64),
        )
    return _PRIOR_CACHE[cfg]


class BeliefState:
    """Posterior support plus weights; updates return new instances."""

    def __init__(self, cfg: GenConfig, pm, xm, mask, w, events: tuple):
        self.cfg = cfg
        self.pm = pm
        self.xm = xm
        self.mask = mask
        self.w = w
        self.events = events

    @property
    def support_size(self) -> int:
        return len(self.w)

    @property
    def is_prior(self) -> bool:
        return not self.events

    def contains(self, chem: Chemistry) -> bool:
        hit = (
            (self.pm == chem.potion_map.index)
            & (self.xm == chem.percept_map.index)
            & (self.mask == chem.edges.mask)
        )
        return bool(hit.any())

    def weight_of(self, chem: Chemistry) -> float:
        hit = (
            (self.pm == chem.potion_map.index)
            & (self.xm == chem.percept_map.index)
            & (self.mask == chem.edges.mask)
        )
        return float(self.w[hit].sum())

    def marginals(self) -> "BeliefMarginals":
        edge_prob = np.array([
            float(self.w[(self.mask >> e & 1) == 1].sum()) for e in range(N_EDGES)
        ])
        dir_prob = np.zeros((6, 3, 2))
        for hue in range(6):
            axes = AXIS_OF_HUE[self.pm, hue]
            dirbits = DIRBIT_OF_HUE[self.pm, hue]
            for axis in range(3):
                for db in (0, 1):
                    sel = (axes == axis) & (dirbits == db)
                    dir_prob[hue, axis, db] = float(self.w[sel].sum())
        plus15 = np.zeros(8)
        best_percept = PER_OF_LAT[self.xm, 7]
        for pid in range(8):
            plus15[pid] = float(self.w[best_percept == pid].sum())
        return BeliefMarginals(
            edge_prob=edge_prob,
            potion_dir_prob=dir_prob,
            plus15_percept_prob=plus15,
            support_size=self.support_size,
        )


@dataclass(frozen=True)
class BeliefMarginals:
    edge_prob: np.ndarray  # (12,) P(edge present)
    potion_dir_prob: np.ndarray  # (6, 3, 2) P(hue acts on axis toward dirbit)
    plus15_percept_prob: np.ndarray  # (8,) P(percept id shows the +15 vertex)
    support_size: int

    def to_dict(self) -> dict:
        return {
            "edge_prob": [round(float(p), 9) for p in self.edge_prob],
            "potion_dir_prob": [
                [[round(float(p), 9) for p in by_axis] for by_axis in by_hue]
                for by_hue in self.potion_dir_prob
            ],
            "plus15_percept_prob": [round(float(p), 9) for p in self.plus15_percept_prob],
            "support_size": self.support_size,
        }


def init_belief(cfg: GenConfig = GenConfig()) -> BeliefState:
    pm, xm, mask, w = _prior_arrays(cfg)
    return BeliefState(cfg, pm, xm, mask, w / w.sum(), events=())


def belief_from_chemistry(cfg: GenConfig, chem: Chemistry) -> BeliefState:
    """Degenerate belief pinned to one chemistry (events marked non-empty
    so consumers treat it as posterior, not prior)."""
    return BeliefState(
        cfg,
        np.array([chem.potion_map.index], dtype=np.int32),
        np.array([chem.percept_map.index], dtype=np.int32),
        np.array([chem.edges.mask], dtype=np.int32),
        np.array([1.0]),
        events=("pinned",),
    )


def _event_keep_mask(belief: BeliefState, event: ObservationEvent) -> np.ndarray:
    pm, xm, mask = belief.pm, belief.xm, belief.mask
    v = LAT_OF_PERCEPT[xm, event.percept_before].astype(np.int32)
    keep = REWARD_BY_ID[v] == event.reward_before
    axis = AXIS_OF_HUE[pm, event.hue].astype(np.int32)
    dirbit = DIRBIT_OF_HUE[pm, event.hue].astype(np.int32)
    at_end = (v >> axis & 1) == dirbit
    edge_present = (mask >> EDGE_THROUGH[v, axis] & 1) == 1
    if event.is_null:
        keep &= at_end | ~edge_present
        keep &= REWARD_BY_ID[v] == event.reward_after
    else:
        nxt = v ^ (1 << axis)
        keep &= ~at_end & edge_present
        keep &= PER_OF_LAT[xm, nxt] == event.percept_after
        keep &= REWARD_BY_ID[nxt] == event.reward_after
    return keep


def update_belief(belief: BeliefState, event: ObservationEvent) -> BeliefState:
    """Filter the support down to hypotheses consistent with the event."""
    keep = _event_keep_mask(belief, event)
    if not keep.any():
        raise BeliefError(f"no hypothesis is consistent with {event}")
    w = belief.w[keep]
    return BeliefState(
        belief.cfg,
        belief.pm[keep],
        belief.xm[keep],
        belief.mask[keep],
        w / w.sum(),
        belief.events + (event,),
    )


def update_from_record(belief: BeliefState, rec: StepRecord) -> BeliefState:
    event = event_from_step(rec)
    if event is None:
        return belief
    return update_belief(belief, event)
