import numpy as np
import pytest

from aolpomdp import (AtPomcp, ExactBelief, PomcpConfig, Topology,
                      exact_q_star)
from aolpomdp.pomcp import random_topo_transition
from aolpomdp.topology import OPEN
from conftest import make_models


def test_config_requires_a_budget():
    with pytest.raises(ValueError):
        PomcpConfig(horizon=2, seed=0)


def test_search_is_deterministic_with_fixed_simulations():
    model = make_models(91, 1, max_horizon=3)[0]
    belief = ExactBelief(model.initial_belief)
    config = PomcpConfig(horizon=max(model.horizon, 2), seed=3,
                         num_simulations=500)
    first = AtPomcp(model, config).search(belief)
    second = AtPomcp(model, config).search(belief)
    assert first.action == second.action
    np.testing.assert_array_equal(first.root_values, second.root_values)
    np.testing.assert_array_equal(first.root_visits, second.root_visits)


def test_baseline_uses_closed_topology():
    model = make_models(91, 1)[0]
    config = PomcpConfig(horizon=2, seed=0, num_simulations=50,
                         adapt_topology=False)
    solver = AtPomcp(model, config)
    assert solver.topology == Topology.fully_closed()
    solver.search(ExactBelief(model.initial_belief))
    assert solver.diagnostics.transitions == []


def test_adaptation_flips_toward_closed():
    model = make_models(97, 1, max_horizon=3)[0]
    config = PomcpConfig(horizon=max(model.horizon, 2), seed=1,
                         num_simulations=2000, pw_k=50.0)
    solver = AtPomcp(model, config)
    assert solver.topology == Topology.fully_open()
    solver.search(ExactBelief(model.initial_belief))
    assert solver.diagnostics.transitions
    assert solver.open_fraction() < 1.0
    # every recorded transition happened after its schedule threshold
    for sim_index, j, flipped, _ in solver.diagnostics.transitions:
        assert sim_index > config.pw_k * (j - 1) ** config.pw_alpha
        assert 1 <= flipped <= config.transition_flips


def test_random_topo_transition_identity_when_everything_closed(rng):
    topo = Topology.fully_closed()
    new, flipped, identity = random_topo_transition(topo, [()], 2, 3, rng)
    assert identity
    assert new == topo
    assert flipped == []


def test_random_topo_transition_flips_visited_open_nodes(rng):
    topo = Topology.fully_open()
    visited = [(), (("a", 0),), (("a", 1),)]
    new, flipped, identity = random_topo_transition(topo, visited, 2, 3, rng,
                                                    flips=2)
    assert not identity
    assert len(flipped) == 2
    for key in flipped:
        assert new.beta(key) != OPEN


def test_converges_near_optimal_on_tiny_model():
    model = make_models(101, 1, max_states=3, max_actions=2,
                        max_observations=2, max_horizon=2)[0]
    horizon = 2
    belief = ExactBelief(model.initial_belief)
    q = max(exact_q_star(model, belief, a, horizon)
            for a in range(model.num_actions))
    config = PomcpConfig(horizon=horizon, seed=17, num_simulations=5000)
    result = AtPomcp(model, config).search(belief)
    assert abs(result.value - q) < 0.1 * model.v_max


def test_diagnostics_export_format():
    model = make_models(97, 1)[0]
    config = PomcpConfig(horizon=2, seed=1, num_simulations=1000, pw_k=20.0)
    solver = AtPomcp(model, config)
    solver.search(ExactBelief(model.initial_belief))
    text = solver.diagnostics.export()
    lines = text.strip().splitlines()
    assert lines[0] == "sim_index,adaptation_index,nodes_flipped,open_fraction"
