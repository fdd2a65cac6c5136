"""Oracle tests for the behavioral counters and single-unit statistics.

The counter oracles below are hand-built step sequences whose expected
counts are worked out in comments; the end-to-end properties run the
scripted baselines and check the ordering the counters must produce.
"""
import numpy as np
import pytest

from symbolic_alchemy.analysis import (
    action_type_histogram,
    build_activation_table,
    count_consistency,
    count_missing_edges,
    count_parallelism,
    count_potion_pairs,
    cumulative_scores_by_trial,
    histogram_rows,
    io_comparison_by_trial,
    missing_edge_count,
    pair_selectivity,
    score_by_missing_edges,
    violation_flags,
    violation_report,
)
from symbolic_alchemy.chemistry import (
    FULL_EDGE_MASK,
    NULL_AT_ENDPOINT,
    NULL_MISSING_EDGE,
    NULL_NONE,
    Chemistry,
    EdgeSet,
    PerceptMap,
    PotionMap,
    reward_of,
    vertex_coords,
)
from symbolic_alchemy.baselines import IdealObserverPolicy, RandomHeuristicPolicy
from symbolic_alchemy.environment import (
    Action,
    EnvConfig,
    StepInfo,
    StepRecord,
)
from symbolic_alchemy.traces import EpisodeTrace, run_episode

CHEM = Chemistry(PotionMap.from_index(0), EdgeSet(FULL_EDGE_MASK),
                 PerceptMap.from_index(0))


def apply_step(trial, step, *, stone=0, hue=0, pb=0, pa=None, lb=0, la=None,
               cause=NULL_NONE, valid=True, score=0):
    """Synthetic Apply record; percept/latent ids default to a null outcome."""
    pa = pb if pa is None else pa
    la = lb if la is None else la
    if valid:
        info = StepInfo(kind="apply", valid=True, stone=stone, hue=hue,
                        null_cause=cause, latent_before=lb, latent_after=la,
                        percept_before=pb, percept_after=pa,
                        reward_before=reward_of(lb), reward_after=reward_of(la),
                        score_after=score)
    else:
        info = StepInfo(kind="apply", valid=False, stone=stone, hue=hue,
                        score_after=score)
    return StepRecord(trial=trial, step=step, observation=np.zeros(21),
                      action_index=1 + 6 * stone + hue,
                      action=Action(kind="apply", stone=stone, hue=hue),
                      env_reward=0, shaping_reward=0.0, info=info)


def deposit_step(trial, step, *, stone=0, value=1, score=0):
    info = StepInfo(kind="deposit", valid=True, stone=stone,
                    deposit_value=value, score_after=score)
    return StepRecord(trial=trial, step=step, observation=np.zeros(21),
                      action_index=19 + stone,
                      action=Action(kind="deposit", stone=stone),
                      env_reward=value, shaping_reward=0.0, info=info)


def noop_step(trial, step, score=0):
    info = StepInfo(kind="noop", valid=True, score_after=score)
    return StepRecord(trial=trial, step=step, observation=np.zeros(21),
                      action_index=0, action=Action(kind="noop"),
                      env_reward=0, shaping_reward=-0.2, info=info)


def make_trace(steps, policy="synthetic", seed=0, chem=CHEM):
    return EpisodeTrace(seed=seed, cfg=EnvConfig(), chemistry=chem,
                        policy=policy, flags={}, steps=tuple(steps))


class TestConsistencyCounter:
    def test_repeat_after_null_on_identical_percept(self):
        # Hue 0 does nothing at percept 5; applying hue 0 to percept 5 again
        # is the violation, whatever steps the two applies land on.
        steps = [apply_step(1, 3, hue=0, pb=5, lb=2, cause=NULL_AT_ENDPOINT),
                 apply_step(1, 7, hue=0, pb=5, lb=2, cause=NULL_AT_ENDPOINT)]
        trace = make_trace(steps)
        assert count_consistency(trace) == 1
        assert violation_flags(trace)["consistency"] == [0, 1]

    def test_different_percept_does_not_count(self):
        steps = [apply_step(1, 0, hue=0, pb=5, cause=NULL_AT_ENDPOINT),
                 apply_step(1, 1, hue=0, pb=3, la=7, pa=7)]
        assert count_consistency(make_trace(steps)) == 0

    def test_no_nulls_means_zero(self):
        steps = [apply_step(1, i, hue=0, pb=0, pa=1, lb=0, la=1)
                 for i in range(4)]
        # Re-applying a hue whose effect was observed is not a consistency
        # violation; only repeats of observed nulls are.
        assert count_consistency(make_trace(steps)) == 0

    def test_invalid_applies_neither_arm_nor_count(self):
        steps = [apply_step(1, 0, hue=2, pb=5, valid=False),
                 apply_step(1, 1, hue=2, pb=5, valid=False)]
        assert count_consistency(make_trace(steps)) == 0


class TestParallelismCounter:
    def test_spec_example_counts_endpoint_application(self):
        # Hue 1 moves percept axis 0 to +1 (percept 0 -> 1). Applying hue 1
        # to a stone whose percept already has axis 0 at +1 violates.
        assert vertex_coords(3)[0] == 1
        steps = [apply_step(1, 0, hue=1, pb=0, pa=1, lb=0, la=1),
                 apply_step(1, 1, hue=1, pb=3, lb=3, cause=NULL_AT_ENDPOINT)]
        assert count_parallelism(make_trace(steps)) == 1

    def test_unarmed_hue_contributes_zero(self):
        steps = [apply_step(1, 0, hue=1, pb=3, cause=NULL_AT_ENDPOINT)]
        assert count_parallelism(make_trace(steps)) == 0

    def test_two_distinct_endpoint_stones_count_twice(self):
        steps = [apply_step(1, 0, hue=1, pb=0, pa=1, lb=0, la=1),
                 apply_step(1, 1, hue=1, pb=3, lb=3, cause=NULL_AT_ENDPOINT),
                 apply_step(1, 2, hue=1, pb=5, lb=5, cause=NULL_AT_ENDPOINT)]
        assert count_parallelism(make_trace(steps)) == 2

    def test_first_time_vs_permissive_on_repeats(self):
        steps = [apply_step(1, 0, hue=1, pb=0, pa=1, lb=0, la=1),
                 apply_step(1, 1, hue=1, pb=3, lb=3, cause=NULL_AT_ENDPOINT),
                 apply_step(1, 2, hue=1, pb=3, lb=3, cause=NULL_AT_ENDPOINT)]
        trace = make_trace(steps)
        assert count_parallelism(trace) == 1
        assert count_parallelism(trace, permissive=True) == 2


class TestMissingEdgeCounter:
    def test_reapply_at_same_latent_counts(self):
        steps = [apply_step(1, 0, hue=2, pb=1, lb=6, cause=NULL_MISSING_EDGE),
                 apply_step(1, 1, hue=2, pb=1, lb=6, cause=NULL_MISSING_EDGE)]
        assert count_missing_edges(make_trace(steps)) == 1

    def test_endpoint_null_never_arms(self):
        steps = [apply_step(1, 0, hue=2, pb=1, lb=6, cause=NULL_AT_ENDPOINT),
                 apply_step(1, 1, hue=2, pb=1, lb=6, cause=NULL_AT_ENDPOINT)]
        assert count_missing_edges(make_trace(steps)) == 0

    def test_other_latent_does_not_count(self):
        steps = [apply_step(1, 0, hue=2, pb=1, lb=6, cause=NULL_MISSING_EDGE),
                 apply_step(1, 1, hue=2, pb=4, lb=2, la=3, pa=6)]
        assert count_missing_edges(make_trace(steps)) == 0


class TestPotionPairCounter:
    def test_opposite_effect_implies_endpoint(self):
        # Hue 2 moves axis 1 to +1 (percept 0 -> 2); hue 3 (its opposite,
        # never seen) applied to a stone with axis 1 already at -1 violates.
        steps = [apply_step(1, 0, hue=2, pb=0, pa=2, lb=0, la=2),
                 apply_step(1, 1, hue=3, pb=1, lb=1, cause=NULL_AT_ENDPOINT)]
        assert count_potion_pairs(make_trace(steps)) == 1

    def test_directly_observed_hue_is_excluded(self):
        steps = [apply_step(1, 0, hue=2, pb=0, pa=2, lb=0, la=2),
                 apply_step(1, 1, hue=3, pb=2, pa=0, lb=2, la=0),
                 apply_step(1, 2, hue=3, pb=1, lb=1, cause=NULL_AT_ENDPOINT)]
        assert count_potion_pairs(make_trace(steps)) == 0

    def test_unobserved_pair_contributes_zero(self):
        steps = [apply_step(1, 0, hue=3, pb=1, lb=1, cause=NULL_AT_ENDPOINT)]
        assert count_potion_pairs(make_trace(steps)) == 0

    def test_wrong_side_of_axis_is_fine(self):
        steps = [apply_step(1, 0, hue=2, pb=0, pa=2, lb=0, la=2),
                 apply_step(1, 1, hue=3, pb=2, pa=0, lb=2, la=0)]
        assert count_potion_pairs(make_trace(steps)) == 0


class TestCounterProperties:
    def test_prefix_truncation_consistency(self):
        cfg = EnvConfig()
        trace, _ = run_episode(RandomHeuristicPolicy(), cfg, seed=9)
        full = violation_flags(trace)
        for k in (10, 40, 95, 150):
            prefix = make_trace(trace.steps[:k], policy=trace.policy,
                                chem=trace.chemistry)
            partial = violation_flags(prefix)
            for test, flags in partial.items():
                assert flags == full[test][:k]

    def test_ideal_observer_traces_have_zero_violations(self):
        cfg = EnvConfig()
        for seed in (0, 1, 2):
            trace, _ = run_episode(IdealObserverPolicy(), cfg, seed=seed)
            flags = violation_flags(trace)
            assert all(sum(v) == 0 for v in flags.values()), flags

    def test_random_heuristic_violates_more_than_ideal(self):
        cfg = EnvConfig()
        rh = [run_episode(RandomHeuristicPolicy(), cfg, seed=s)[0]
              for s in range(25)]
        report = violation_report(rh)
        assert report.agent == "random"
        total = sum(report.summary[t]["mean"] for t in report.summary)
        assert total > 0.0
        rows = report.to_rows()
        assert {r["test"] for r in rows} == {"consistency", "parallelism",
                                             "missing_edges", "potion_pairs"}

    def test_report_rejects_mixed_agents(self):
        cfg = EnvConfig()
        a, _ = run_episode(RandomHeuristicPolicy(), cfg, seed=1)
        b, _ = run_episode(IdealObserverPolicy(), cfg, seed=1)
        with pytest.raises(ValueError, match="mix"):
            violation_report([a, b])


class TestActionTypeHistogram:
    def test_constructed_trace_exact_histogram(self):
        steps = [
            apply_step(1, 0, hue=0, pb=0, pa=1, lb=0, la=1),   # -3 -> -1 improved
            apply_step(1, 1, hue=0, pb=1, lb=1, cause=NULL_AT_ENDPOINT),
            apply_step(1, 2, hue=1, pb=7, pa=6, lb=7, la=6),   # +15 -> +1 worsened
            apply_step(1, 3, hue=4, pb=0, valid=False),
            deposit_step(1, 4, value=-3),
            noop_step(1, 5),
            deposit_step(2, 0, value=15),
        ]
        hist = action_type_histogram([make_trace(steps)])
        assert hist[1] == {"improved": 1, "worsened": 1, "no_effect": 2,
                           "deposit_-3": 1, "deposit_-1": 0, "deposit_1": 0,
                           "deposit_15": 0}
        assert hist[2]["deposit_15"] == 1

    def test_trial_filter(self):
        steps = [deposit_step(1, 0, value=1), deposit_step(2, 0, value=1)]
        hist = action_type_histogram([make_trace(steps)], trial_filter={2})
        assert list(hist) == [2]

    def test_totals_conserved_on_rollout(self):
        cfg = EnvConfig()
        trace, _ = run_episode(RandomHeuristicPolicy(), cfg, seed=4)
        hist = action_type_histogram([trace])
        applies = sum(1 for r in trace.steps if r.info.kind == "apply")
        deposits = sum(1 for r in trace.steps
                       if r.info.kind == "deposit" and r.info.valid)
        apply_total = sum(h["improved"] + h["worsened"] + h["no_effect"]
                          for h in hist.values())
        deposit_total = sum(h[f"deposit_{v}"] for h in hist.values()
                            for v in (-3, -1, 1, 15))
        assert apply_total == applies
        assert deposit_total == deposits
        rows = histogram_rows(hist)
        assert [r["trial"] for r in rows] == sorted(hist)


class TestScoreBreakdowns:
    def test_score_by_missing_edges_hand_checked(self):
        t1 = make_trace([deposit_step(1, 0, value=15, score=15)])
        t2 = make_trace([deposit_step(1, 0, value=1, score=1)])
        chem_m1 = Chemistry(PotionMap.from_index(0),
                            EdgeSet(FULL_EDGE_MASK & ~1),
                            PerceptMap.from_index(0))
        t3 = make_trace([deposit_step(1, 0, value=-3, score=-3)],
                        chem=chem_m1)
        table = score_by_missing_edges([t1, t2, t3])
        assert missing_edge_count(t3) == 1
        assert table[0]["n"] == 2 and table[0]["mean"] == 8.0
        assert np.isclose(table[0]["sem"], np.std([15, 1], ddof=1) / np.sqrt(2))
        assert table[1] == {"n": 1, "mean": -3.0, "sem": None}

    def test_io_comparison_identical_sets_is_zero(self):
        cfg = EnvConfig()
        traces = [run_episode(RandomHeuristicPolicy(), cfg, seed=s)[0]
                  for s in (0, 1)]
        rows = io_comparison_by_trial(traces, traces)
        assert all(r["io_ahead_fraction"] == 0.0 for r in rows)
        assert len(rows) == 10

    def test_io_comparison_hand_checked(self):
        def flat_trace(seed, per_trial):
            steps = []
            score = 0
            for trial, gain in enumerate(per_trial, start=1):
                score += gain
                steps.append(deposit_step(trial, 0, value=gain, score=score))
            return make_trace(steps, seed=seed)

        agent = [flat_trace(0, [1, 1, 1]), flat_trace(1, [15, 0, 0]),
                 flat_trace(2, [0, 0, 15])]
        io = [flat_trace(0, [15, 0, 0]), flat_trace(1, [1, 1, 1]),
              flat_trace(2, [1, 1, 1])]
        rows = io_comparison_by_trial(agent, io)
        # trial 1: io ahead on seeds 0, 2 -> 2/3; trial 2: same -> 2/3;
        # trial 3: seed 2 agent reaches 15 vs 3 -> only seed 0 -> 1/3.
        assert [r["io_ahead_fraction"] for r in rows] == \
               pytest.approx([2 / 3, 2 / 3, 1 / 3])

    def test_io_comparison_rejects_unpaired(self):
        t0 = make_trace([deposit_step(1, 0, value=1, score=1)], seed=0)
        t1 = make_trace([deposit_step(1, 0, value=1, score=1)], seed=1)
        with pytest.raises(ValueError, match="paired"):
            io_comparison_by_trial([t0], [t1])

    def test_cumulative_scores(self):
        steps = [apply_step(1, 0, score=0), deposit_step(1, 1, value=1, score=1),
                 noop_step(2, 0, score=1), deposit_step(2, 1, value=15, score=16)]
        assert cumulative_scores_by_trial(make_trace(steps)) == [1, 16]


def synthetic_activation_pairs(step_specs, unit_fn, n_lstm=8, n_pool=4):
    """Build one (trace, sidecar) pair; unit_fn(rec) -> pooled unit 0 value."""
    steps = list(step_specs)
    trace = make_trace(steps)
    sidecar = []
    for rec in steps:
        pooled = np.zeros(n_pool)
        pooled[0] = unit_fn(rec)
        sidecar.append({"trial": rec.trial, "step": rec.step,
                        "lstm_h": list(np.zeros(n_lstm)),
                        "transformer_pooled": list(pooled)})
    return trace, sidecar


class TestActivationTable:
    def test_synthetic_latent_selective_unit(self):
        specs = [apply_step(1, i, stone=2, lb=3 if i % 2 else 5,
                            pb=1, pa=1, cause=NULL_AT_ENDPOINT)
                 for i in range(8)]
        pair = synthetic_activation_pairs(
            specs, lambda rec: 1.0 if rec.info.latent_before == 5 else 0.0)
        table = build_activation_table([pair], grouping="latent_stone")
        g5 = table.stats["transformer_pooled"][(5, 2)]
        g3 = table.stats["transformer_pooled"][(3, 2)]
        assert g5["mean"][0] == 1.0 and g5["std"][0] == 0.0
        assert g3["mean"][0] == 0.0
        assert table.n_steps == 8
        assert sum(g["n"] for g in table.stats["lstm_h"].values()) == 8

    def test_only_valid_applies_recorded(self):
        specs = [apply_step(1, 0), noop_step(1, 1),
                 deposit_step(1, 2, value=1), apply_step(1, 3, valid=False)]
        sidecar_specs = synthetic_activation_pairs(specs, lambda rec: 0.0)
        table = build_activation_table([sidecar_specs], grouping="hue")
        assert table.n_steps == 1

    def test_misaligned_sidecar_raises(self):
        trace, sidecar = synthetic_activation_pairs([apply_step(1, 0)],
                                                    lambda rec: 0.0)
        with pytest.raises(ValueError, match="align"):
            build_activation_table([(trace, [])], grouping="hue")
        sidecar[0]["step"] = 5
        with pytest.raises(ValueError, match="align"):
            build_activation_table([(trace, sidecar)], grouping="hue")

    def test_unknown_grouping_rejected(self):
        with pytest.raises(ValueError, match="grouping"):
            build_activation_table([], grouping="flavor")


class TestPairSelectivity:
    def make_hue_table(self, unit_values, noise=0.05, reps=20):
        """unit_values: hue -> value of pooled unit 0; unit 1 stays zero;
        unit 2 gets strong noise (never selective)."""
        rng = np.random.default_rng(0)
        specs = []
        for i in range(reps):
            for hue in unit_values:
                specs.append(apply_step(1, len(specs), hue=hue, pb=0, pa=1,
                                        lb=0, la=1))
        trace = make_trace(specs)
        sidecar = []
        for rec in trace.steps:
            pooled = np.zeros(4)
            pooled[0] = unit_values[rec.info.hue] + rng.normal(0, noise)
            pooled[2] = rng.normal(0, 1.0)
            sidecar.append({"trial": rec.trial, "step": rec.step,
                            "lstm_h": list(np.zeros(4)),
                            "transformer_pooled": list(pooled)})
        return build_activation_table([(trace, sidecar)], grouping="hue")

    def test_antisymmetric_unit_selected(self):
        table = self.make_hue_table({0: 1.0, 1: -1.0})
        report = pair_selectivity(table, theta=1.0)
        assert 0 in report.per_unit
        assert (0, 1) in report.per_unit[0]
        assert report.fraction == pytest.approx(len(report.per_unit) / 4)

    def test_zero_unit_and_noise_unit_not_selected(self):
        table = self.make_hue_table({0: 1.0, 1: -1.0})
        report = pair_selectivity(table, theta=1.0)
        assert 1 not in report.per_unit
        assert 2 not in report.per_unit

    def test_same_sign_means_not_selected(self):
        table = self.make_hue_table({0: 1.0, 1: 0.5})
        assert 0 not in pair_selectivity(table, theta=1.0).per_unit

    def test_zero_variance_constant_unit_not_selected(self):
        table = self.make_hue_table({0: 1.0, 1: -1.0}, noise=0.0)
        report = pair_selectivity(table, theta=1.0)
        assert 0 not in report.per_unit

    def test_huge_threshold_selects_nothing(self):
        table = self.make_hue_table({0: 1.0, 1: -1.0})
        assert pair_selectivity(table, theta=50.0).per_unit == {}

    def test_requires_hue_grouping(self):
        specs = [apply_step(1, 0)]
        pair = synthetic_activation_pairs(specs, lambda rec: 0.0)
        table = build_activation_table([pair], grouping="percept")
        with pytest.raises(ValueError, match="hue"):
            pair_selectivity(table)
