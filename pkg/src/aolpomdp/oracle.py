"""Brute-force exact values on tiny POMDPs by full belief-tree enumeration.

Ground truth for every bound and guarantee test: the optimal Q of the original
problem, and the topology-dependent adaptive open-loop (lower) and adaptive
fully-observable (upper) values.  No sampling anywhere; fully-observable
branches enumerate every next state with its exact transition probability.
"""
from __future__ import annotations

import numpy as np

from .core import (DiscretePomdp, ExactBelief, PROB_TOL, exact_bayes_update,
                   expected_reward, observation_predictive, propagate_open_loop)
from .topology import (AugmentedHistory, CLOSED, NodeBudgetError, OPEN, Topology)

DEFAULT_NODE_BUDGET = 10 ** 6


class _Budget:
    __slots__ = ("remaining",)

    def __init__(self, limit: int):
        self.remaining = limit

    def spend(self):
        self.remaining -= 1
        if self.remaining < 0:
            raise NodeBudgetError("exact enumeration exceeded the node budget")


def _q_value(model: DiscretePomdp, belief: ExactBelief, action: int,
             history: AugmentedHistory, depth: int, end_depth: int,
             topology: Topology, kind: str, budget: _Budget) -> float:
    budget.spend()
    immediate = expected_reward(model, belief, action)
    if depth + 1 >= end_depth:
        return immediate
    beta = topology.beta(history.key)
    if beta == OPEN and kind == "aol":
        child_h = history.extended_open(action)
        child_b = propagate_open_loop(model, belief, [action])
        future = max(_q_value(model, child_b, a, child_h, depth + 1, end_depth,
                              topology, kind, budget)
                     for a in range(model.num_actions))
        return immediate + future
    if beta == OPEN and kind == "afo":
        propagated = model.transition[action].T @ belief.probabilities
        future = 0.0
        for x in np.flatnonzero(propagated > 0.0):
            child_h = history.extended_fully_observable(action, int(x))
            child_b = ExactBelief.point_mass(int(x), model.num_states)
            best = max(_q_value(model, child_b, a, child_h, depth + 1, end_depth,
                                topology, kind, budget)
                       for a in range(model.num_actions))
            future += float(propagated[x]) * best
        return immediate + future
    predictive = observation_predictive(model, belief, action)
    future = 0.0
    for z in np.flatnonzero(predictive > PROB_TOL):
        posterior, p_z = exact_bayes_update(model, belief, action, int(z))
        child_h = history.extended_closed(action, int(z))
        best = max(_q_value(model, posterior, a, child_h, depth + 1, end_depth,
                            topology, kind, budget)
                   for a in range(model.num_actions))
        future += p_z * best
    return immediate + future


def exact_q_star(model: DiscretePomdp, belief: ExactBelief, action: int,
                 horizon: int, node_budget: int = DEFAULT_NODE_BUDGET) -> float:
    """Exact optimal Q-value of the original POMDP over `horizon` steps."""
    return _q_value(model, belief, action, AugmentedHistory(), 0, horizon,
                    Topology.fully_closed(), "aol", _Budget(node_budget))


def exact_aol_value(model: DiscretePomdp, belief: ExactBelief, action: int,
                    topology: Topology, horizon: int,
                    node_budget: int = DEFAULT_NODE_BUDGET) -> float:
    """Optimal adaptive open-loop value: at open nodes the next action is
    chosen before the observation expectation, over the propagated belief."""
    return _q_value(model, belief, action, AugmentedHistory(), 0, horizon,
                    topology, "aol", _Budget(node_budget))


def exact_afo_value(model: DiscretePomdp, belief: ExactBelief, action: int,
                    topology: Topology, horizon: int,
                    node_budget: int = DEFAULT_NODE_BUDGET) -> float:
    """Optimal adaptive fully-observable value: at simplified nodes the true
    next state enters the history, so the backup maximizes per state branch."""
    return _q_value(model, belief, action, AugmentedHistory(), 0, horizon,
                    topology, "afo", _Budget(node_budget))


def exact_continuation_value(model: DiscretePomdp, belief: ExactBelief,
                             action: int, start_history: AugmentedHistory,
                             start_depth: int, end_depth: int,
                             topology: Topology, kind: str,
                             node_budget: int = DEFAULT_NODE_BUDGET) -> float:
    """Exact value of a subtree rooted mid-tree (used by extended-horizon Q)."""
    return _q_value(model, belief, action, start_history, start_depth, end_depth,
                    topology, kind, _Budget(node_budget))


def exact_best_action(model: DiscretePomdp, belief: ExactBelief,
                      horizon: int) -> int:
    values = [exact_q_star(model, belief, a, horizon)
              for a in range(model.num_actions)]
    return int(np.argmax(values))
