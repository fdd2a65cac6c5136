"""Reference policies and the exact belief/planning machinery behind them."""
from .belief import (
    BeliefError,
    BeliefMarginals,
    BeliefState,
    ObservationEvent,
    belief_from_chemistry,
    event_from_step,
    init_belief,
    update_belief,
    update_from_record,
)
from .planning import (
    DEFAULT_THRESHOLDS,
    PlanThresholds,
    exact_value,
    greedy_value,
    hypothesis_value,
    move_latent,
)
from .policies import (
    IdealObserverPolicy,
    RandomHeuristicPolicy,
    UniformRandomPolicy,
    ideal_observer_act,
    ideal_observer_q,
)

__all__ = [
    "BeliefError",
    "BeliefMarginals",
    "BeliefState",
    "ObservationEvent",
    "belief_from_chemistry",
    "event_from_step",
    "init_belief",
    "update_belief",
    "update_from_record",
    "DEFAULT_THRESHOLDS",
    "PlanThresholds",
    "exact_value",
    "greedy_value",
    "hypothesis_value",
    "move_latent",
    "IdealObserverPolicy",
    "RandomHeuristicPolicy",
    "UniformRandomPolicy",
    "ideal_observer_act",
    "ideal_observer_q",
]
