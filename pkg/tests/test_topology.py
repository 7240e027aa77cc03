import numpy as np
import pytest

from aolpomdp import CLOSED, OPEN, AugmentedHistory, ExactBelief, Topology, \
    build_tree, random_topology, refine_topology
from aolpomdp.topology import TopologyContractError, enumerate_keys, key_depth
from conftest import make_models


def test_history_key_strips_state_entries():
    h = AugmentedHistory().extended_fully_observable(1, 3).extended_closed(0, 2)
    assert h.key == (("a", 1), ("a", 0), ("z", 2))
    assert h.depth == 2


def test_fully_open_and_closed_defaults():
    assert Topology.fully_open().beta((("a", 0),)) == OPEN
    assert Topology.fully_closed().beta(()) == CLOSED


def test_forced_open_prefix():
    topo = Topology(default_mode=CLOSED, forced_open_depth=2)
    assert topo.beta(()) == OPEN
    assert topo.beta((("a", 1),)) == OPEN
    assert topo.beta((("a", 1), ("a", 0))) == CLOSED
    with pytest.raises(TopologyContractError):
        topo.flip_to_closed((("a", 1),), num_observations=2)


def test_flip_to_closed_rekeys_descendants():
    topo = Topology.from_assignment({
        (): OPEN,
        (("a", 0),): OPEN,
        (("a", 0), ("a", 1)): CLOSED,
    }, default_mode=CLOSED)
    flipped = topo.flip_to_closed((("a", 0),), num_observations=2)
    assert flipped.beta((("a", 0),)) == CLOSED
    # the grandchild assignment is duplicated across both observation branches
    for z in range(2):
        assert flipped.beta((("a", 0), ("a", 1), ("z", z))) == CLOSED


def test_serialize_round_trip(rng):
    topo = random_topology(3, 2, 3, rng)
    again = Topology.deserialize(topo.serialize())
    assert again == topo
    assert again.topology_id == topo.topology_id


def test_enumerate_keys_counts():
    open_keys = enumerate_keys(Topology.fully_open(), 3, 2, 2)
    # 1 root + 3 depth-1 + 9 depth-2 nodes
    assert len(open_keys) == 13
    closed_keys = enumerate_keys(Topology.fully_closed(), 3, 2, 2)
    assert len(closed_keys) == 1 + 6 + 36


def test_open_tree_width_independent_of_observations():
    for nz in (2, 8):
        model = make_models(5, 1, max_observations=2)[0]
        tree = build_tree(model, ExactBelief(model.initial_belief),
                          Topology.fully_open(), 3, kind="aol")
        counts = tree.depth_counts()
        for d in range(1, 4):
            assert counts[d] == model.num_actions ** d


def test_closed_tree_branches_on_observations():
    model = make_models(5, 1)[0]
    tree = build_tree(model, ExactBelief(model.initial_belief),
                      Topology.fully_closed(), 2, kind="aol")
    counts = tree.depth_counts()
    assert counts[1] <= model.num_actions * model.num_observations
    assert counts[1] > model.num_actions


def test_refine_topology_reports_cache_retention():
    model = make_models(9, 1)[0]
    topo = Topology.fully_open()
    tree = build_tree(model, ExactBelief(model.initial_belief), topo, 2,
                      kind="aol")
    selection = [(("a", 0),)]
    refined, report = refine_topology(topo, tree, selection)
    assert refined.beta((("a", 0),)) == CLOSED
    assert report.flipped == selection
    assert 0.0 <= report.cache_retention <= 1.0
    # the untouched sibling subtrees stay cached
    assert report.cached_count > 0


def test_refine_noop_on_closed_node():
    model = make_models(9, 1)[0]
    topo = Topology.fully_closed()
    tree = build_tree(model, ExactBelief(model.initial_belief), topo, 2,
                      kind="aol")
    refined, report = refine_topology(topo, tree, [()])
    assert refined == topo
    assert report.noops == [()]


def test_key_depth():
    assert key_depth(()) == 0
    assert key_depth((("a", 0), ("z", 1), ("a", 2))) == 2
