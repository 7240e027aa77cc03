"""Tabular POMDP model, belief representations, and the basic belief updates.

All models are dense and discrete: transition tensors of shape (A, S, S),
observation matrices of shape (S, O), rewards of shape (S, A).  Beliefs are
either exact probability vectors or weighted particle sets.  Every stochastic
operation takes an explicit numpy Generator so that results are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_TOL = 1e-9


class ImpossibleObservationError(ValueError):
    """Raised when conditioning on an observation with zero predictive probability."""


class ParticleDepletionError(RuntimeError):
    """All particle weights became zero; the belief can no longer be normalized."""

    def __init__(self, message: str, path: tuple = ()):
        super().__init__(message)
        self.path = path


def _check_prob_vector(vec: np.ndarray, name: str) -> None:
    if np.any(vec < -PROB_TOL):
        raise ValueError(f"{name} has negative entries")
    if abs(float(vec.sum()) - 1.0) > PROB_TOL:
        raise ValueError(f"{name} does not sum to 1 (sum={vec.sum()!r})")


@dataclass(frozen=True)
class DiscretePomdp:
    """Explicit finite POMDP: transition (A,S,S), observation (S,O), reward (S,A)."""

    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    initial_belief: np.ndarray
    horizon: int
    r_max: float

    def __post_init__(self):
        t = np.asarray(self.transition, dtype=float)
        z = np.asarray(self.observation, dtype=float)
        r = np.asarray(self.reward, dtype=float)
        b0 = np.asarray(self.initial_belief, dtype=float)
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ValueError("transition must have shape (A, S, S)")
        num_a, num_s = t.shape[0], t.shape[1]
        if z.shape[0] != num_s or z.ndim != 2:
            raise ValueError("observation must have shape (S, O)")
        if r.shape != (num_s, num_a):
            raise ValueError("reward must have shape (S, A)")
        if b0.shape != (num_s,):
            raise ValueError("initial_belief must have shape (S,)")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        for a in range(num_a):
            for s in range(num_s):
                _check_prob_vector(t[a, s], f"transition[{a},{s}]")
        for s in range(num_s):
            _check_prob_vector(z[s], f"observation[{s}]")
        _check_prob_vector(b0, "initial_belief")
        if not np.isfinite(self.r_max) or np.any(np.abs(r) > self.r_max + PROB_TOL):
            raise ValueError("rewards must satisfy |r| <= r_max")
        for arr in (t, z, r, b0):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", t)
        object.__setattr__(self, "observation", z)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "initial_belief", b0)

    @property
    def num_states(self) -> int:
        return self.transition.shape[1]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[0]

    @property
    def num_observations(self) -> int:
        return self.observation.shape[1]

    @property
    def v_max(self) -> float:
        return self.horizon * self.r_max


@dataclass(frozen=True)
class ExactBelief:
    """Exact probability vector over states."""

    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        _check_prob_vector(p, "belief")
        p = np.clip(p, 0.0, None)
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def point_mass(cls, state: int, num_states: int) -> "ExactBelief":
        p = np.zeros(num_states)
        p[state] = 1.0
        return cls(p)

    @classmethod
    def uniform(cls, num_states: int) -> "ExactBelief":
        return cls(np.full(num_states, 1.0 / num_states))

    @property
    def support(self) -> frozenset:
        return frozenset(np.flatnonzero(self.probabilities > 0.0).tolist())


@dataclass(frozen=True)
class ParticleBelief:
    """Weighted particle set; weights are kept normalized."""

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64)
        w = np.asarray(self.weights, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise ValueError("at least one particle is required")
        if w.shape != s.shape:
            raise ValueError("weights must match particles")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        total = float(w.sum())
        if total <= 0.0:
            raise ParticleDepletionError("total particle weight is zero")
        w = w / total
        s.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_states(cls, states) -> "ParticleBelief":
        states = np.asarray(states, dtype=np.int64)
        return cls(states, np.full(states.shape, 1.0 / states.size))

    @classmethod
    def from_exact(cls, belief: ExactBelief, num_particles: int,
                   rng: np.random.Generator) -> "ParticleBelief":
        states = rng.choice(belief.probabilities.size, size=num_particles,
                            p=belief.probabilities)
        return cls.from_states(states)

    def to_histogram(self, num_states: int) -> np.ndarray:
        return np.bincount(self.states, weights=self.weights, minlength=num_states)

    @property
    def num_particles(self) -> int:
        return self.states.size


def expected_reward(model: DiscretePomdp, belief, action: int) -> float:
    """r(b, a) = E_{x|b}[r(x, a)] for either belief representation."""
    if isinstance(belief, ExactBelief):
        return float(belief.probabilities @ model.reward[:, action])
    return float(belief.weights @ model.reward[belief.states, action])


def observation_predictive(model: DiscretePomdp, belief: ExactBelief,
                           action: int) -> np.ndarray:
    """P(z | b, a) for every observation z."""
    propagated = model.transition[action].T @ belief.probabilities
    return propagated @ model.observation


def exact_bayes_update(model: DiscretePomdp, belief: ExactBelief, action: int,
                       observation: int):
    """Full Bayes step: propagate through the transition model, condition on z.

    Returns (posterior, predictive probability of the observation).
    """
    propagated = model.transition[action].T @ belief.probabilities
    joint = propagated * model.observation[:, observation]
    evidence = float(joint.sum())
    if evidence <= PROB_TOL * PROB_TOL:
        raise ImpossibleObservationError(
            f"observation {observation} has zero probability under "
            f"(belief, action={action})")
    return ExactBelief(joint / evidence), evidence


def propagate_open_loop(model: DiscretePomdp, belief: ExactBelief,
                        actions) -> ExactBelief:
    """Push a belief through the transition model only, with no conditioning."""
    p = belief.probabilities
    for a in actions:
        p = model.transition[a].T @ p
    return ExactBelief(p)


def particle_update(model: DiscretePomdp, belief: ParticleBelief, action: int,
                    observation: int, rng: np.random.Generator) -> ParticleBelief:
    """Bootstrap particle filter step: sample transitions, reweight by likelihood."""
    cdf = np.cumsum(model.transition[action][belief.states], axis=1)
    draws = rng.random(belief.num_particles)
    next_states = (cdf < draws[:, None]).sum(axis=1)
    weights = belief.weights * model.observation[next_states, observation]
    if float(weights.sum()) <= 0.0:
        raise ParticleDepletionError(
            f"observation {observation} is impossible for every sampled particle")
    return ParticleBelief(next_states, weights)


def sample_transitions(model: DiscretePomdp, states: np.ndarray, action: int,
                       rng: np.random.Generator) -> np.ndarray:
    """Sample one successor for each state in `states` under `action`."""
    cdf = np.cumsum(model.transition[action][states], axis=1)
    draws = rng.random(states.size)
    return (cdf < draws[:, None]).sum(axis=1)


def reachable_states(model: DiscretePomdp, belief, actions) -> frozenset:
    """Exact support of the open-loop propagated state distribution.

    For particle beliefs the initial support is the particle set, which makes
    the result a superset-safe approximation of the true reachable set.
    """
    if isinstance(belief, ExactBelief):
        support = belief.probabilities > 0.0
    else:
        support = np.zeros(model.num_states, dtype=bool)
        support[np.unique(belief.states)] = True
    for a in actions:
        support = (model.transition[a][support] > 0.0).any(axis=0)
    return frozenset(np.flatnonzero(support).tolist())
