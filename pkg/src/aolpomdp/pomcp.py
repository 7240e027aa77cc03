"""Anytime MCTS solver with progressive topology adaptation (AT-POMCP).

UCB tree search over augmented histories: under an open topology sibling
observation branches merge into a single node, so the tree stays small; on a
progressive schedule (triggered once the simulation index exceeds
pw_k * j**pw_alpha) randomly chosen visited open nodes are switched to
closed-loop.  Transitioned nodes keep their visit counts and values; the
running mean converges to the new-topology value as visits accumulate.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .core import DiscretePomdp, ExactBelief, ParticleBelief
from .topology import AugmentedHistory, CLOSED, OPEN, Topology, key_depth


@dataclass(frozen=True)
class PomcpConfig:
    horizon: int
    seed: int
    ucb_constant: float = 1.0
    pw_k: float = 100.0
    pw_alpha: float = 1.0
    num_simulations: int = None      # deterministic budget; wall clock if None
    time_budget_ms: float = None
    transition_flips: int = 1        # nodes flipped per topology transition
    adapt_topology: bool = True
    recommend_by: str = "value"      # "value" or "visits"
    kind: str = "aol"                # history updater at simplified nodes

    def __post_init__(self):
        if self.num_simulations is None and self.time_budget_ms is None:
            raise ValueError("either num_simulations or time_budget_ms is required")
        if self.pw_alpha <= 0 or self.pw_alpha > 1 or self.pw_k <= 0:
            raise ValueError("progressive schedule parameters must be positive "
                             "with alpha in (0, 1]")


@dataclass
class SearchNode:
    visits: int = 0
    particles: list = field(default_factory=list)
    action_visits: np.ndarray = None
    action_values: np.ndarray = None


@dataclass
class SearchDiagnostics:
    simulations: int = 0
    transitions: list = field(default_factory=list)
    identity_transitions: int = 0
    nodes: int = 0

    def export(self) -> str:
        lines = ["sim_index,adaptation_index,nodes_flipped,open_fraction"]
        for sim_index, j, flipped, frac in self.transitions:
            lines.append(f"{sim_index},{j},{flipped},{frac:.9g}")
        return "\n".join(lines) + "\n"


@dataclass
class SearchResult:
    action: int
    value: float
    root_values: np.ndarray
    root_visits: np.ndarray
    diagnostics: SearchDiagnostics
    topology: Topology


def random_topo_transition(topology: Topology, visited_keys, num_observations: int,
                           horizon: int, rng: np.random.Generator,
                           flips: int = 1):
    """Flip up to `flips` uniformly chosen visited open nodes to closed-loop.

    Returns (topology, flipped_keys, identity_flag); the identity flag is set
    when no open node was available.
    """
    candidates = sorted(k for k in visited_keys
                        if key_depth(k) < horizon and topology.beta(k) == OPEN)
    if not candidates:
        return topology, [], True
    chosen = rng.choice(len(candidates), size=min(flips, len(candidates)),
                        replace=False)
    flipped = [candidates[int(i)] for i in chosen]
    for key in sorted(flipped, key=lambda k: (key_depth(k), k)):
        topology = topology.flip_to_closed(key, num_observations)
    return topology, flipped, False


class AtPomcp:
    """Topology-based MCTS solver; baseline POMCP is the same search with a
    fully closed topology and adaptation disabled."""

    def __init__(self, model: DiscretePomdp, config: PomcpConfig,
                 initial_topology: Topology = None):
        self.model = model
        self.config = config
        if initial_topology is None:
            initial_topology = (Topology.fully_open() if config.adapt_topology
                                else Topology.fully_closed())
        self.topology = initial_topology
        self.tree = {}
        self.rng = np.random.default_rng(config.seed)
        self.adaptation_index = 1
        self.diagnostics = SearchDiagnostics()

    # -- generative model ---------------------------------------------------

    def _generate(self, state: int, action: int):
        next_state = int(self.rng.choice(self.model.num_states,
                                         p=self.model.transition[action, state]))
        obs = int(self.rng.choice(self.model.num_observations,
                                  p=self.model.observation[next_state]))
        reward = float(self.model.reward[state, action])
        return next_state, obs, reward

    def _rollout(self, state: int, depth: int) -> float:
        total = 0.0
        while depth < self.config.horizon:
            action = int(self.rng.integers(self.model.num_actions))
            state, _, reward = self._generate(state, action)
            total += reward
            depth += 1
        return total

    # -- search -------------------------------------------------------------

    def _node(self, key: tuple) -> SearchNode:
        node = self.tree.get(key)
        if node is None:
            node = SearchNode(
                action_visits=np.zeros(self.model.num_actions, dtype=np.int64),
                action_values=np.zeros(self.model.num_actions))
            self.tree[key] = node
            self.diagnostics.nodes += 1
        return node

    def _ucb_action(self, node: SearchNode) -> int:
        unvisited = np.flatnonzero(node.action_visits == 0)
        if unvisited.size:
            return int(unvisited[0])
        exploration = self.config.ucb_constant * np.sqrt(
            math.log(node.visits) / node.action_visits)
        return int(np.argmax(node.action_values + exploration))

    def _maybe_adapt(self, sim_index: int):
        if not self.config.adapt_topology:
            return
        if sim_index <= self.config.pw_k * self.adaptation_index ** self.config.pw_alpha:
            return
        self.adaptation_index += 1
        self.topology, flipped, identity = random_topo_transition(
            self.topology, self.tree.keys(), self.model.num_observations,
            self.config.horizon, self.rng, self.config.transition_flips)
        if identity:
            self.diagnostics.identity_transitions += 1
        else:
            self.diagnostics.transitions.append(
                (sim_index, self.adaptation_index, len(flipped),
                 self.open_fraction()))

    def simulate(self, state: int, history: AugmentedHistory, depth: int,
                 sim_index: int) -> float:
        if depth >= self.config.horizon:
            return 0.0
        key = history.key
        if key not in self.tree:
            self._node(key)
            return self._rollout(state, depth)
        node = self.tree[key]
        action = self._ucb_action(node)
        next_state, obs, reward = self._generate(state, action)
        self._maybe_adapt(sim_index)
        if self.topology.beta(key) == OPEN:
            if self.config.kind == "afo":
                child = history.extended_fully_observable(action, next_state)
            else:
                child = history.extended_open(action)
        else:
            child = history.extended_closed(action, obs)
        future = self.simulate(next_state, child, depth + 1, sim_index)
        total = reward + future
        node.particles.append(state)
        node.visits += 1
        node.action_visits[action] += 1
        node.action_values[action] += (
            (total - node.action_values[action]) / node.action_visits[action])
        return total

    def open_fraction(self) -> float:
        keys = [k for k in self.tree if key_depth(k) < self.config.horizon]
        if not keys:
            return 1.0
        return sum(self.topology.beta(k) == OPEN for k in keys) / len(keys)

    def search(self, root_belief) -> SearchResult:
        if isinstance(root_belief, ExactBelief):
            sampler = lambda: int(self.rng.choice(self.model.num_states,
                                                  p=root_belief.probabilities))
        elif isinstance(root_belief, ParticleBelief):
            sampler = lambda: int(root_belief.states[
                self.rng.choice(root_belief.num_particles,
                                p=root_belief.weights)])
        else:
            raise TypeError("root belief must be exact or particle-based")
        root = AugmentedHistory()
        deadline = None
        if self.config.num_simulations is None:
            deadline = time.perf_counter() + self.config.time_budget_ms / 1000.0
        sim_index = 0
        while True:
            sim_index += 1
            if self.config.num_simulations is not None:
                if sim_index > self.config.num_simulations:
                    break
            elif time.perf_counter() >= deadline:
                break
            self.simulate(sampler(), root, 0, sim_index)
        self.diagnostics.simulations = sim_index - 1
        root_node = self._node(root.key)
        if self.config.recommend_by == "visits":
            best = int(np.argmax(root_node.action_visits))
        else:
            visited = root_node.action_visits > 0
            values = np.where(visited, root_node.action_values, -np.inf)
            best = int(np.argmax(values)) if visited.any() else 0
        return SearchResult(best, float(root_node.action_values[best]),
                            root_node.action_values.copy(),
                            root_node.action_visits.copy(),
                            self.diagnostics, self.topology)


def search(model: DiscretePomdp, root_belief, config: PomcpConfig,
           initial_topology: Topology = None) -> SearchResult:
    """One-shot search entry point."""
    return AtPomcp(model, config, initial_topology).search(root_belief)
