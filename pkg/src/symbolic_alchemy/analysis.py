"""Trace post-processors: behavioral violation counters, action-type and
score breakdowns, trial-wise baseline comparison, and single-unit statistics.

All counters run in a single forward pass over the steps of one episode and
consult only information recorded before the step being judged, so counting
a prefix of a trace yields a prefix of the counts. Only valid potion
applications arm or trigger any counter: rejected actions (unavailable hue,
deposited stone) change nothing and reveal nothing.

The four behavioral tests:

* consistency — the agent re-applies a hue to a stone whose perceptual
  features are identical to ones on which that hue already did nothing.
* parallelism — after one observed effect of a hue (it moved perceptual
  feature d to value b), the agent applies that hue to a stone whose
  feature d already equals b. Every hue acts on one axis with one
  direction everywhere in the cube, so such an application cannot work.
* missing_edges — after a null caused by a missing edge at latent vertex v,
  the agent re-applies the same hue to a stone sitting at v (ground-truth
  latent annotations from the trace).
* potion_pairs — the agent applies a hue it has never seen act, to a stone
  already at the endpoint implied by the observed effect of the opposite
  hue (opposite hues share an axis and push in opposite directions).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chemistry import NULL_MISSING_EDGE, opposite_hue, vertex_coords
from .traces import EpisodeTrace

VIOLATION_TESTS = ("consistency", "parallelism", "missing_edges", "potion_pairs")
DEPOSIT_BUCKETS = (-3, -1, 1, 15)


# --------------------------------------------------------------------------
# Behavioral violation counters.

def violation_flags(trace: EpisodeTrace, permissive_parallelism: bool = False,
                    ) -> dict[str, list[int]]:
    """Per-step violation indicators for each behavioral test.

    ``permissive_parallelism`` counts every qualifying application; the
    default counts only the first per (hue, stone-percept) pair.
    """
    null_percepts: set[tuple[int, int]] = set()  # (hue, percept id) seen null
    effect_of: dict[int, tuple[int, int]] = {}  # hue -> (axis, value) observed
    missing_at: set[tuple[int, int]] = set()  # (hue, latent id) missing edge
    parallelism_counted: set[tuple[int, int]] = set()
    flags = {test: [0] * len(trace.steps) for test in VIOLATION_TESTS}

    for idx, rec in enumerate(trace.steps):
        info = rec.info
        if info.kind != "apply" or not info.valid:
            continue
        hue = info.hue
        percept = info.percept_before
        coords = vertex_coords(percept)

        if (hue, percept) in null_percepts:
            flags["consistency"][idx] = 1

        if hue in effect_of:
            axis, value = effect_of[hue]
            if coords[axis] == value:
                key = (hue, percept)
                if permissive_parallelism or key not in parallelism_counted:
                    flags["parallelism"][idx] = 1
                    parallelism_counted.add(key)

        if (hue, info.latent_before) in missing_at:
            flags["missing_edges"][idx] = 1

        partner = opposite_hue(hue)
        if hue not in effect_of and partner in effect_of:
            axis, value = effect_of[partner]
            if coords[axis] == -value:
                flags["potion_pairs"][idx] = 1

        # Record what this step revealed, for later steps only.
        if info.percept_after == percept:
            null_percepts.add((hue, percept))
            if info.null_cause == NULL_MISSING_EDGE:
                missing_at.add((hue, info.latent_before))
        else:
            after = vertex_coords(info.percept_after)
            moved = int(np.argmax(after != coords))
            effect_of.setdefault(hue, (moved, int(after[moved])))
    return flags


def count_consistency(trace: EpisodeTrace) -> int:
    return sum(violation_flags(trace)["consistency"])


def count_parallelism(trace: EpisodeTrace, permissive: bool = False) -> int:
    return sum(violation_flags(trace, permissive)["parallelism"])


def count_missing_edges(trace: EpisodeTrace) -> int:
    return sum(violation_flags(trace)["missing_edges"])


def count_potion_pairs(trace: EpisodeTrace) -> int:
    return sum(violation_flags(trace)["potion_pairs"])


@dataclass(frozen=True)
class ViolationReport:
    agent: str
    per_episode: dict[str, list[int]]  # test -> count per episode
    summary: dict[str, dict]  # test -> {n, mean, sem}

    def to_rows(self) -> list[dict]:
        return [{"test": test, **self.summary[test]}
                for test in VIOLATION_TESTS]


def violation_report(traces, permissive_parallelism: bool = False,
                     ) -> ViolationReport:
    agents = {t.policy for t in traces}
    if len(agents) != 1:
        raise ValueError(f"traces mix agents {sorted(agents)}")
    per_episode = {test: [] for test in VIOLATION_TESTS}
    for trace in traces:
        flags = violation_flags(trace, permissive_parallelism)
        for test in VIOLATION_TESTS:
            per_episode[test].append(sum(flags[test]))
    summary = {
        test: {"n": len(counts), "mean": float(np.mean(counts)),
               "sem": _sem(counts)}
        for test, counts in per_episode.items()
    }
    return ViolationReport(agent=agents.pop(), per_episode=per_episode,
                           summary=summary)


# --------------------------------------------------------------------------
# Action-type and score breakdowns.

def action_type_histogram(traces, trial_filter=None) -> dict[int, dict[str, int]]:
    """Per trial index: apply outcomes (improved / worsened / no_effect) and
    deposit counts bucketed by deposited value. Rejected applies count as
    no_effect — nothing changed."""
    histogram: dict[int, dict[str, int]] = {}
    for trace in traces:
        for rec in trace.steps:
            if trial_filter is not None and rec.trial not in trial_filter:
                continue
            row = histogram.setdefault(rec.trial, {
                "improved": 0, "worsened": 0, "no_effect": 0,
                **{f"deposit_{v}": 0 for v in DEPOSIT_BUCKETS},
            })
            info = rec.info
            if info.kind == "apply":
                if not info.valid or info.reward_after == info.reward_before:
                    row["no_effect"] += 1
                elif info.reward_after > info.reward_before:
                    row["improved"] += 1
                else:
                    row["worsened"] += 1
            elif info.kind == "deposit" and info.valid:
                row[f"deposit_{info.deposit_value}"] += 1
    return histogram


def histogram_rows(histogram: dict[int, dict[str, int]]) -> list[dict]:
    return [{"trial": trial, **histogram[trial]}
            for trial in sorted(histogram)]


def episode_score(trace: EpisodeTrace) -> int:
    return trace.steps[-1].info.score_after


def missing_edge_count(trace: EpisodeTrace) -> int:
    return 12 - bin(trace.chemistry.edges.mask).count("1")


def score_by_missing_edges(traces) -> dict[int, dict]:
    """Mean episode score (± SEM, absent for single-episode groups) per
    number of missing chemistry edges."""
    groups: dict[int, list[int]] = {}
    for trace in traces:
        groups.setdefault(missing_edge_count(trace), []).append(
            episode_score(trace))
    return {
        m: {"n": len(scores), "mean": float(np.mean(scores)),
            "sem": _sem(scores)}
        for m, scores in sorted(groups.items())
    }


def cumulative_scores_by_trial(trace: EpisodeTrace) -> list[int]:
    """Episode score as of the end of each trial, in trial order."""
    last: dict[int, int] = {}
    for rec in trace.steps:
        last[rec.trial] = rec.info.score_after
    return [last[t] for t in sorted(last)]


def io_comparison_by_trial(agent_traces, io_traces) -> list[dict]:
    """Per trial index, the fraction of seed-paired episodes where the
    reference policy's cumulative score strictly exceeds the agent's."""
    agent_by_seed = {t.seed: t for t in agent_traces}
    io_by_seed = {t.seed: t for t in io_traces}
    if set(agent_by_seed) != set(io_by_seed):
        raise ValueError("episode sets are not paired by seed")
    if not agent_by_seed:
        raise ValueError("no episodes to compare")
    rows = []
    seeds = sorted(agent_by_seed)
    agent_cum = {s: cumulative_scores_by_trial(agent_by_seed[s]) for s in seeds}
    io_cum = {s: cumulative_scores_by_trial(io_by_seed[s]) for s in seeds}
    n_trials = len(agent_cum[seeds[0]])
    for t in range(n_trials):
        wins = sum(io_cum[s][t] > agent_cum[s][t] for s in seeds)
        rows.append({"trial": t + 1, "io_ahead_fraction": wins / len(seeds),
                     "n": len(seeds)})
    return rows


# --------------------------------------------------------------------------
# Single-unit statistics.

ACTIVATION_SOURCES = ("lstm_h", "transformer_pooled")
GROUPINGS = ("latent_stone", "percept", "hue", "reward_sign")


def _group_key(rec, grouping: str):
    info = rec.info
    if grouping == "latent_stone":
        return (info.latent_before, info.stone)
    if grouping == "percept":
        return info.percept_before
    if grouping == "hue":
        return info.hue
    if grouping == "reward_sign":
        return int(np.sign(info.reward_after - info.reward_before))
    raise ValueError(f"unknown grouping {grouping!r}")


@dataclass(frozen=True)
class ActivationTable:
    grouping: str
    n_steps: int  # valid Apply steps with recorded activations
    stats: dict  # source -> {group key -> {"n", "mean": array, "std": array}}

    def units(self, source: str) -> int:
        groups = self.stats[source]
        return len(next(iter(groups.values()))["mean"]) if groups else 0


def build_activation_table(pairs, grouping: str) -> ActivationTable:
    """``pairs`` is a list of (trace, sidecar) from activation-recording
    runs; sidecar rows align one-to-one with steps. Valid Apply steps only:
    those are the steps with an acted-on stone to group by."""
    if grouping not in GROUPINGS:
        raise ValueError(f"unknown grouping {grouping!r}")
    samples: dict[str, dict] = {src: {} for src in ACTIVATION_SOURCES}
    n_steps = 0
    for trace, sidecar in pairs:
        if len(sidecar) != len(trace.steps):
            raise ValueError("sidecar rows do not align with trace steps")
        for rec, extra in zip(trace.steps, sidecar):
            if (rec.trial, rec.step) != (extra["trial"], extra["step"]):
                raise ValueError("sidecar rows do not align with trace steps")
            if rec.info.kind != "apply" or not rec.info.valid:
                continue
            n_steps += 1
            key = _group_key(rec, grouping)
            for src in ACTIVATION_SOURCES:
                samples[src].setdefault(key, []).append(
                    np.asarray(extra[src], dtype=np.float64))
    stats = {
        src: {
            key: {
                "n": len(rows),
                "mean": np.mean(rows, axis=0),
                "std": np.std(rows, axis=0),
            }
            for key, rows in groups.items()
        }
        for src, groups in samples.items()
    }
    return ActivationTable(grouping=grouping, n_steps=n_steps, stats=stats)


@dataclass(frozen=True)
class SelectivityReport:
    theta: float
    n_units: int
    per_unit: dict[int, list[tuple[int, int]]]  # unit -> qualifying hue pairs
    fraction: float


def pair_selectivity(table: ActivationTable, theta: float = 1.0,
                     source: str = "transformer_pooled") -> SelectivityReport:
    """A unit is pair-selective for hues (h, h^1) when its mean activation
    is positive for one and negative for the other, and both means clear
    ``theta`` pooled standard deviations. Zero-variance units never qualify.
    """
    if table.grouping != "hue":
        raise ValueError("pair selectivity needs a hue-grouped table")
    groups = table.stats[source]
    n_units = table.units(source)
    per_unit: dict[int, list[tuple[int, int]]] = {}
    for even in (0, 2, 4):
        pair = (even, even + 1)
        if pair[0] not in groups or pair[1] not in groups:
            continue
        a, b = groups[pair[0]], groups[pair[1]]
        na, nb = a["n"], b["n"]
        if na + nb < 3:
            continue
        pooled_var = ((na - 1) * a["std"] ** 2 + (nb - 1) * b["std"] ** 2
                      ) / (na + nb - 2)
        pooled = np.sqrt(np.maximum(pooled_var, 0.0))
        opposed = np.sign(a["mean"]) * np.sign(b["mean"]) == -1
        strong = ((np.abs(a["mean"]) > theta * pooled)
                  & (np.abs(b["mean"]) > theta * pooled)
                  & (pooled > 0))
        for unit in np.nonzero(opposed & strong)[0]:
            per_unit.setdefault(int(unit), []).append(pair)
    fraction = len(per_unit) / n_units if n_units else 0.0
    return SelectivityReport(theta=theta, n_units=n_units, per_unit=per_unit,
                             fraction=fraction)


def selectivity_rows(report: SelectivityReport) -> list[dict]:
    rows = [{"unit": unit,
             "pairs": ";".join(f"{a}-{b}" for a, b in pairs)}
            for unit, pairs in sorted(report.per_unit.items())]
    rows.append({"unit": "fraction_selective", "pairs": report.fraction})
    return rows


def _sem(values) -> float | None:
    if len(values) < 2:
        return None
    return float(np.std(values, ddof=1) / np.sqrt(len(values)))
