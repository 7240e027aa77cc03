"""Augmented histories, belief-tree topologies, and topology refinement.

A topology assigns each tree node a binary mode: 1 means the node's children
are generated by the simplified updater (open-loop for lower bounds, fully
observable for upper bounds), 0 means the standard closed-loop updater.  The
lower and upper assignments are carried as one shared structure: histories are
keyed by their tagged entry sequence with state entries stripped, so a node of
the fully-observable tree resolves to the same key as its open-loop twin.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .core import (DiscretePomdp, ExactBelief, exact_bayes_update,
                   observation_predictive, propagate_open_loop, PROB_TOL)

OPEN = 1
CLOSED = 0


class NodeBudgetError(RuntimeError):
    """Tree enumeration exceeded the declared node budget."""


class TopologyContractError(ValueError):
    """A topology violates a structural precondition (e.g. not open-prefix)."""


@dataclass(frozen=True)
class AugmentedHistory:
    """Ordered sequence of tagged entries: ('a', i), ('z', j) or ('x', s)."""

    entries: tuple = ()

    def __post_init__(self):
        if self.entries and self.entries[0][0] != "a":
            raise ValueError("a non-empty history must start with an action")

    @property
    def depth(self) -> int:
        return sum(1 for tag, _ in self.entries if tag == "a")

    @property
    def key(self) -> tuple:
        """Canonical node key: the entry sequence with state entries stripped."""
        return tuple(e for e in self.entries if e[0] != "x")

    def extended_open(self, action: int) -> "AugmentedHistory":
        return AugmentedHistory(self.entries + (("a", action),))

    def extended_closed(self, action: int, observation: int) -> "AugmentedHistory":
        return AugmentedHistory(self.entries + (("a", action), ("z", observation)))

    def extended_fully_observable(self, action: int, state: int) -> "AugmentedHistory":
        return AugmentedHistory(self.entries + (("a", action), ("x", state)))

    @property
    def actions(self) -> tuple:
        return tuple(v for tag, v in self.entries if tag == "a")


def key_depth(key: tuple) -> int:
    return sum(1 for tag, _ in key if tag == "a")


@dataclass(frozen=True)
class Topology:
    """Paired mode assignment (shared by the lower and upper bound trees)."""

    assignment: tuple = ()          # sorted ((key, beta), ...) pairs
    default_mode: int = OPEN
    forced_open_depth: int = 0

    def __post_init__(self):
        object.__setattr__(self, "_map", dict(self.assignment))

    def _lookup(self) -> dict:
        return dict(self._map)

    def beta(self, key: tuple) -> int:
        if key_depth(key) < self.forced_open_depth:
            return OPEN
        return self._map.get(key, self.default_mode)

    @classmethod
    def fully_open(cls) -> "Topology":
        return cls(default_mode=OPEN)

    @classmethod
    def fully_closed(cls) -> "Topology":
        return cls(default_mode=CLOSED)

    @classmethod
    def from_assignment(cls, mapping: dict, default_mode: int = OPEN,
                        forced_open_depth: int = 0) -> "Topology":
        items = tuple(sorted(mapping.items()))
        return cls(items, default_mode, forced_open_depth)

    def with_beta(self, key: tuple, beta: int) -> "Topology":
        mapping = self._lookup()
        mapping[key] = beta
        return Topology.from_assignment(mapping, self.default_mode,
                                        self.forced_open_depth)

    def flip_to_closed(self, key: tuple, num_observations: int) -> "Topology":
        """Switch `key` to closed-loop, re-keying its descendants.

        Closing a node inserts an observation entry right after each of its
        action children, so every assignment entry below the node is expanded
        into one copy per observation (mode inheritance for the new children).
        """
        if key_depth(key) < self.forced_open_depth:
            raise TopologyContractError("cannot close a node in the forced-open prefix")
        mapping = {}
        for old_key, beta in self.assignment:
            if (len(old_key) > len(key) and old_key[:len(key)] == key
                    and old_key[len(key)][0] == "a"):
                head = old_key[:len(key) + 1]
                tail = old_key[len(key) + 1:]
                for z in range(num_observations):
                    mapping[head + (("z", z),) + tail] = beta
            else:
                mapping[old_key] = beta
        mapping[key] = CLOSED
        return Topology.from_assignment(mapping, self.default_mode,
                                        self.forced_open_depth)

    def suffix(self, prefix_key: tuple) -> "Topology":
        """Topology for the subtree rooted at `prefix_key` (keys re-rooted)."""
        mapping = {}
        for old_key, beta in self.assignment:
            if old_key[:len(prefix_key)] == prefix_key:
                mapping[old_key[len(prefix_key):]] = beta
        forced = max(0, self.forced_open_depth - key_depth(prefix_key))
        return Topology.from_assignment(mapping, self.default_mode, forced)

    def is_open_prefix(self, depth: int, action_chain) -> bool:
        """True if every node along the given action chain up to `depth` is open."""
        history = AugmentedHistory()
        for i in range(depth):
            if self.beta(history.key) != OPEN:
                return False
            history = history.extended_open(action_chain[i])
        return True

    @property
    def topology_id(self) -> str:
        payload = repr((self.assignment, self.default_mode, self.forced_open_depth))
        return hashlib.sha1(payload.encode()).hexdigest()[:12]

    def serialize(self) -> str:
        lines = [f"default_mode = {self.default_mode}",
                 f"forced_open_depth = {self.forced_open_depth}"]
        for key, beta in self.assignment:
            key_txt = ".".join(f"{tag}{val}" for tag, val in key) or "root"
            lines.append(f"node {key_txt} = {beta}")
        return "\n".join(lines) + "\n"

    @classmethod
    def deserialize(cls, text: str) -> "Topology":
        default_mode, forced, mapping = OPEN, 0, {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            name, _, value = line.partition("=")
            name, value = name.strip(), value.strip()
            if name == "default_mode":
                default_mode = int(value)
            elif name == "forced_open_depth":
                forced = int(value)
            elif name.startswith("node"):
                key_txt = name.split(None, 1)[1]
                if key_txt == "root":
                    key = ()
                else:
                    key = tuple((part[0], int(part[1:]))
                                for part in key_txt.split("."))
                mapping[key] = int(value)
            else:
                raise ValueError(f"unrecognized topology line: {line!r}")
        return cls.from_assignment(mapping, default_mode, forced)


def update_history_aol(topology: Topology, history: AugmentedHistory, action: int,
                       observation: int) -> AugmentedHistory:
    """Adaptive open-loop updater: drop the observation at open nodes."""
    if topology.beta(history.key) == OPEN:
        return history.extended_open(action)
    return history.extended_closed(action, observation)


def update_history_afo(topology: Topology, history: AugmentedHistory, action: int,
                       outcome: int, state: bool = None) -> AugmentedHistory:
    """Adaptive fully-observable updater: record the true state at open nodes.

    `outcome` is the next state when the node is simplified, the observation
    otherwise; passing `state` explicitly lets callers provide both.
    """
    if topology.beta(history.key) == OPEN:
        next_state = outcome if state is None else state
        return history.extended_fully_observable(action, next_state)
    return history.extended_closed(action, observation=outcome)


def enumerate_keys(topology: Topology, num_actions: int, num_observations: int,
                   horizon: int):
    """All node keys reachable under a topology, over the full observation space."""
    keys = [()]
    frontier = [()]
    for _ in range(horizon):
        nxt = []
        for key in frontier:
            if topology.beta(key) == OPEN:
                children = [key + (("a", a),) for a in range(num_actions)]
            else:
                children = [key + (("a", a), ("z", z))
                            for a in range(num_actions)
                            for z in range(num_observations)]
            nxt.extend(children)
        keys.extend(nxt)
        frontier = nxt
    return keys


def random_topology(num_actions: int, num_observations: int, horizon: int,
                    rng: np.random.Generator, p_open: float = 0.5) -> Topology:
    """Random mixed topology over the reachable key space."""
    mapping = {}
    frontier = [()]
    for _ in range(horizon):
        nxt = []
        for key in frontier:
            beta = OPEN if rng.random() < p_open else CLOSED
            mapping[key] = beta
            if beta == OPEN:
                nxt.extend(key + (("a", a),) for a in range(num_actions))
            else:
                nxt.extend(key + (("a", a), ("z", z))
                           for a in range(num_actions)
                           for z in range(num_observations))
        frontier = nxt
    return Topology.from_assignment(mapping, default_mode=CLOSED)


MODE_NAMES = {("aol", OPEN): "open-loop", ("afo", OPEN): "fully-observable",
              ("aol", CLOSED): "closed-loop", ("afo", CLOSED): "closed-loop"}


@dataclass
class BeliefTreeNode:
    history: AugmentedHistory
    belief: ExactBelief
    depth: int
    mode: str
    children: dict = field(default_factory=dict)
    cached: bool = False
    visits: int = 0
    value: float = 0.0


@dataclass
class BeliefTree:
    model: DiscretePomdp
    topology: Topology
    horizon: int
    kind: str                     # "aol" or "afo"
    nodes: dict = field(default_factory=dict)

    @property
    def root(self) -> BeliefTreeNode:
        return self.nodes[()]

    def depth_counts(self) -> dict:
        counts = {}
        for node in self.nodes.values():
            counts[node.depth] = counts.get(node.depth, 0) + 1
        return counts


def build_tree(model: DiscretePomdp, root_belief: ExactBelief, topology: Topology,
               horizon: int, branch_budget: int = 10 ** 6, kind: str = "aol",
               reuse: BeliefTree = None) -> BeliefTree:
    """Enumerate the belief tree for a topology (exact branches, no sampling).

    Nodes are keyed by augmented history; sibling observation branches of an
    open node merge into a single child by construction.  When `reuse` is
    given, nodes whose key and mode are unchanged adopt the previous node
    object and are marked cached.
    """
    tree = BeliefTree(model, topology, horizon, kind)
    root = AugmentedHistory()
    tree.nodes[()] = BeliefTreeNode(root, root_belief, 0,
                                    MODE_NAMES[(kind, topology.beta(()))])
    frontier = [(root, root_belief)]
    count = 1
    for depth in range(horizon):
        nxt = []
        for history, belief in frontier:
            beta = topology.beta(history.key)
            mode = MODE_NAMES[(kind, beta)]
            node = tree.nodes[history.key]
            for a in range(model.num_actions):
                if beta == OPEN and kind == "aol":
                    child_h = history.extended_open(a)
                    child_b = propagate_open_loop(model, belief, [a])
                    branches = [(a, child_h, child_b)]
                elif beta == OPEN:
                    propagated = model.transition[a].T @ belief.probabilities
                    branches = []
                    for x in np.flatnonzero(propagated > 0.0):
                        child_h = history.extended_fully_observable(a, int(x))
                        child_b = ExactBelief.point_mass(int(x), model.num_states)
                        branches.append(((a, int(x)), child_h, child_b))
                else:
                    predictive = observation_predictive(model, belief, a)
                    branches = []
                    for z in np.flatnonzero(predictive > PROB_TOL):
                        child_h = history.extended_closed(a, int(z))
                        child_b, _ = exact_bayes_update(model, belief, a, int(z))
                        branches.append(((a, int(z)), child_h, child_b))
                for child_key_part, child_h, child_b in branches:
                    count += 1
                    if count > branch_budget:
                        raise NodeBudgetError(
                            f"tree exceeds branch budget {branch_budget}")
                    child_mode = MODE_NAMES[(kind, topology.beta(child_h.key))]
                    reused = None
                    if reuse is not None:
                        prev = reuse.nodes.get(child_h.key)
                        if prev is not None and prev.mode == child_mode:
                            reused = prev
                            reused.cached = True
                    child_node = reused or BeliefTreeNode(child_h, child_b,
                                                          depth + 1, child_mode)
                    tree.nodes[child_h.key] = child_node
                    node.children[child_key_part] = child_h.key
                    nxt.append((child_h, child_node.belief))
        frontier = nxt
    return tree


@dataclass
class RefineReport:
    flipped: list
    noops: list
    invalidated_count: int
    cached_count: int

    @property
    def cache_retention(self) -> float:
        total = self.invalidated_count + self.cached_count
        return self.cached_count / total if total else 1.0


def refine_topology(topology: Topology, tree: BeliefTree, selection):
    """Flip the selected open nodes to closed-loop (both bound assignments).

    Returns the refined topology and a transition report; callers rebuild the
    tree with `build_tree(..., reuse=tree)` to retrieve unchanged nodes from
    the cache.
    """
    flipped, noops = [], []
    new_topology = topology
    for key in sorted(set(selection), key=lambda k: (key_depth(k), k)):
        if new_topology.beta(key) == CLOSED:
            noops.append(key)
            continue
        new_topology = new_topology.flip_to_closed(key, tree.model.num_observations)
        flipped.append(key)
    invalidated = 0
    cached = 0
    for key in tree.nodes:
        if any(key[:len(f)] == f for f in flipped):
            invalidated += 1
        else:
            cached += 1
    return new_topology, RefineReport(flipped, noops, invalidated, cached)
