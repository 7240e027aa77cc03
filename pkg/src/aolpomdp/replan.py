"""Skip-replanning guarantees: likelihood-ratio factors, extended-horizon
values, future-step bounds, the SRG certificate check, and the execution loop.

At planning time the posterior at a future step k is unknown, but with an
open-loop action prefix it is sandwiched multiplicatively between the
open-loop propagated belief scaled by the per-step min/max likelihood-ratio
product.  That turns the current session's adaptive open-loop / fully
observable values into bounds on the optimal Q at *any* realized posterior,
which is what certifies executing future actions without replanning.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundPair, SeparationResult, check_separation
from .core import (DiscretePomdp, ExactBelief, expected_reward,
                   observation_predictive, propagate_open_loop,
                   reachable_states, exact_bayes_update)
from .oracle import exact_continuation_value
from .topology import AugmentedHistory, OPEN, Topology, TopologyContractError


class EmptyLikelihoodSupportError(ValueError):
    """A restricted observation set has no positive likelihood entry."""


class PositivityError(ValueError):
    """The residual value is negative; the multiplicative sandwich is only
    directional for positive values.  Configure a reward offset making the
    reward function non-negative before enabling skip-replanning."""


@dataclass(frozen=True)
class LikelihoodRatioFactor:
    value: float
    per_step: tuple
    observation_sets: tuple
    reachable_sets: tuple


@dataclass
class SrgStep:
    index: int
    status: str                    # "separated" | "failed"
    action: int = None
    bounds: dict = None
    separation: SeparationResult = None
    failure_reason: str = ""


@dataclass
class SrgCertificate:
    depth: int
    actions: list                  # a*_0 .. a*_k for the certified prefix
    steps: list
    allowed_observation_sets: list

    @property
    def certified_depth(self) -> int:
        n = 0
        for step in self.steps:
            if step.status != "separated":
                break
            n += 1
        return n

    @property
    def valid(self) -> bool:
        return self.certified_depth == self.depth


def compute_ck(model: DiscretePomdp, belief, actions,
               observation_sets=None) -> LikelihoodRatioFactor:
    """Product over steps of min/max positive observation likelihood ratios,
    restricted to the per-step reachable states and allowed observations."""
    k = len(actions)
    if observation_sets is None:
        observation_sets = [frozenset(range(model.num_observations))] * k
    if len(observation_sets) != k:
        raise ValueError("need one observation set per step")
    per_step = []
    reachable_sets = []
    for j in range(1, k + 1):
        reach = reachable_states(model, belief, actions[:j])
        reachable_sets.append(reach)
        obs_set = observation_sets[j - 1]
        entries = [float(model.observation[x, z])
                   for z in sorted(obs_set) for x in sorted(reach)
                   if model.observation[x, z] > 0.0]
        if not entries:
            raise EmptyLikelihoodSupportError(
                f"step {j}: no positive likelihood over the restricted sets")
        per_step.append(min(entries) / max(entries))
    value = float(np.prod(per_step)) if per_step else 1.0
    return LikelihoodRatioFactor(value, tuple(per_step),
                                 tuple(frozenset(s) for s in observation_sets),
                                 tuple(reachable_sets))


def _check_open_prefix(topology: Topology, forced_actions) -> None:
    if not topology.is_open_prefix(len(forced_actions), forced_actions):
        raise TopologyContractError(
            "topology must be open-loop over the forced action prefix")


def prefix_rewards(model: DiscretePomdp, belief: ExactBelief,
                   forced_actions) -> float:
    """Sum of expected rewards along the open-loop propagated prefix."""
    total = 0.0
    b = belief
    for a in forced_actions:
        total += expected_reward(model, b, a)
        b = propagate_open_loop(model, b, [a])
    return total


def q_tilde(model: DiscretePomdp, belief: ExactBelief, forced_actions,
            action: int, topology: Topology, plan_horizon: int, mode: str,
            node_budget: int = 10 ** 6) -> float:
    """Extended-horizon value: horizon len(prefix) + plan_horizon with the
    prefix actions enforced open-loop, optimal continuation afterwards."""
    _check_open_prefix(topology, forced_actions)
    k = len(forced_actions)
    prefix = prefix_rewards(model, belief, forced_actions)
    propagated = propagate_open_loop(model, belief, forced_actions)
    history = AugmentedHistory()
    for a in forced_actions:
        history = history.extended_open(a)
    continuation = exact_continuation_value(
        model, propagated, action, history, k, k + plan_horizon, topology,
        mode, node_budget)
    return prefix + continuation


def future_bounds(model: DiscretePomdp, belief: ExactBelief, actions,
                  topology: Topology, plan_horizon: int,
                  observation_sets=None, tolerance: float = 1e-9) -> BoundPair:
    """Bounds on Q* at step k for any realized posterior: the scaled residual
    extended-horizon values (actions = a_0..a_{k-1} prefix plus candidate a_k)."""
    if not actions:
        raise ValueError("need at least the candidate action")
    prefix_actions, candidate = list(actions[:-1]), actions[-1]
    factor = compute_ck(model, belief, prefix_actions, observation_sets)
    aol = q_tilde(model, belief, prefix_actions, candidate, topology,
                  plan_horizon, "aol")
    afo = q_tilde(model, belief, prefix_actions, candidate, topology,
                  plan_horizon, "afo")
    prefix = prefix_rewards(model, belief, prefix_actions)
    res_aol = aol - prefix
    res_afo = afo - prefix
    if res_aol < -tolerance or res_afo < -tolerance:
        raise PositivityError(
            f"negative residual value (aol={res_aol:.6g}, afo={res_afo:.6g})")
    lower = factor.value * res_aol
    upper = res_afo / factor.value
    return BoundPair(lower, upper, candidate, topology.topology_id,
                     {"c_k": factor.value, "k": len(prefix_actions)})


def allowed_observation_sets(model: DiscretePomdp, belief: ExactBelief,
                             actions, top_m: int = 4) -> list:
    """Top-m observations by predictive likelihood under the open-loop
    propagated belief at each step (ties broken by lowest index)."""
    sets = []
    for j in range(1, len(actions) + 1):
        propagated = propagate_open_loop(model, belief, actions[:j])
        predictive = propagated.probabilities @ model.observation
        order = np.argsort(-predictive, kind="stable")
        sets.append(frozenset(int(z) for z in order[:top_m]))
    return sets


def check_srg(model: DiscretePomdp, belief: ExactBelief, first_action: int,
              depth: int, topology: Topology, observation_sets=None,
              plan_horizon: int = None, allowed_top_m: int = None) -> SrgCertificate:
    """Sequential future-step separation check (meaningful only while every
    preceding step separated; evaluation stops at the first failure).

    With `allowed_top_m` set and no explicit sets, the allowed observation set
    for each step is derived from the certified prefix as it grows.
    """
    plan_horizon = plan_horizon or model.horizon
    actions = [first_action]
    steps = []
    built_sets = []
    for i in range(1, depth + 1):
        if observation_sets is not None:
            built_sets = list(observation_sets[:i])
        elif allowed_top_m is not None:
            built_sets.append(allowed_observation_sets(
                model, belief, actions, allowed_top_m)[-1])
        else:
            built_sets.append(frozenset(range(model.num_observations)))
        step_sets = list(built_sets)
        try:
            bound_map = {}
            for a in range(model.num_actions):
                bound_map[a] = future_bounds(model, belief, actions + [a],
                                             topology, plan_horizon, step_sets)
            separation = check_separation(bound_map)
        except (PositivityError, EmptyLikelihoodSupportError) as exc:
            steps.append(SrgStep(i, "failed", failure_reason=str(exc)))
            break
        if not separation.separated:
            steps.append(SrgStep(i, "failed", bounds=bound_map,
                                 separation=separation,
                                 failure_reason="overlapping bounds"))
            break
        steps.append(SrgStep(i, "separated", separation.optimal_action,
                             bound_map, separation))
        actions.append(separation.optimal_action)
    return SrgCertificate(depth, actions, steps, built_sets[:len(steps)])


@dataclass
class SkipConfig:
    enabled: bool = True
    max_skip_depth: int = 2
    allowed_top_m: int = 4
    plan_horizon: int = None
    execution_duration: float = None   # declared seconds per action, reporting only
    use_allowed_sets: bool = True


@dataclass
class TraceRow:
    step: int
    action: int
    observation: int
    in_allowed: bool
    skipped: bool
    reward: float
    cumulative: float
    planning_time: float
    srg_time: float


@dataclass
class EpisodeTrace:
    rows: list = field(default_factory=list)
    certificates: list = field(default_factory=list)

    @property
    def total_reward(self) -> float:
        return self.rows[-1].cumulative if self.rows else 0.0

    @property
    def skip_ratio(self) -> float:
        if not self.rows:
            return 0.0
        return sum(r.skipped for r in self.rows) / len(self.rows)


def execute_with_skipping(model: DiscretePomdp, environment, planner,
                          skip_config: SkipConfig) -> EpisodeTrace:
    """Execution loop: plan at the root, certify future open-loop steps, and
    execute them without replanning while the realized observation stays in
    the allowed set.

    The SRG check is issued concurrently with action execution; correctness
    never depends on it finishing in time (a late certificate just means the
    next step replans), but its wall time is recorded against the declared
    execution duration.
    """
    if skip_config.enabled and float(model.reward.min()) < 0.0:
        raise PositivityError(
            "skip-replanning requires non-negative rewards; declare a reward "
            "offset in the environment configuration")
    belief = ExactBelief(model.initial_belief)
    trace = EpisodeTrace()
    cumulative = 0.0
    step = 0
    done = False
    pool = ThreadPoolExecutor(max_workers=1)
    try:
        while not done:
            t0 = time.perf_counter()
            action = planner(belief, step)
            planning_time = time.perf_counter() - t0
            certificate = None
            srg_future = None
            srg_time = 0.0
            if skip_config.enabled:
                depth = skip_config.max_skip_depth
                top_m = (skip_config.allowed_top_m
                         if skip_config.use_allowed_sets else None)
                topo = Topology(default_mode=OPEN, forced_open_depth=depth)
                snapshot = belief
                srg_future = pool.submit(
                    check_srg, model, snapshot, action, depth, topo, None,
                    skip_config.plan_horizon or model.horizon, top_m)
            observation, reward, done = environment.step(action)
            cumulative += reward
            trace.rows.append(TraceRow(step, action, observation, True, False,
                                       reward, cumulative, planning_time, 0.0))
            belief = _track(model, belief, action, observation)
            step += 1
            if srg_future is None or done:
                if srg_future is not None:
                    srg_future.cancel()
                continue
            t1 = time.perf_counter()
            certificate = srg_future.result()
            srg_time = time.perf_counter() - t1
            trace.rows[-1].srg_time = srg_time
            trace.certificates.append(certificate)
            for i, srg_step in enumerate(certificate.steps, start=1):
                if done or srg_step.status != "separated":
                    break
                allowed = (certificate.allowed_observation_sets[i - 1]
                           if i - 1 < len(certificate.allowed_observation_sets)
                           else frozenset(range(model.num_observations)))
                if observation not in allowed:
                    break
                skip_action = srg_step.action
                observation, reward, done = environment.step(skip_action)
                cumulative += reward
                trace.rows.append(TraceRow(step, skip_action, observation,
                                           observation in allowed, True,
                                           reward, cumulative, 0.0, 0.0))
                belief = _track(model, belief, skip_action, observation)
                step += 1
    finally:
        pool.shutdown(wait=False)
    return trace


def _track(model: DiscretePomdp, belief: ExactBelief, action: int,
           observation: int) -> ExactBelief:
    posterior, _ = exact_bayes_update(model, belief, action, observation)
    return posterior
