"""Tabular Q-learning over k-means state abstraction.

State key: (cluster of the standardized prefix vector, last activity, point
index). The agent acts only at decision points; the environment runs the
case between them, so one transition spans everything from one point to the
next. The reward is the scaled final profit, paid at the end of the case.

The action space is the union of the active interventions' actions. Picking
an action the current point does not allow costs ``penalty`` and the agent
then falls back to an allowed one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable, Optional, Sequence

import numpy as np

from ..core import CaseState, observe
from ..engine import EventLog, Session
from ..interventions import REGISTRY, DecisionPoint, as_sequence
from .encoding import base_vector
from .kmeans import assign, kmeans_fit


@dataclass
class QTable:
    actions: tuple[str, ...]
    alpha: float = 0.1
    gamma: float = 1.0
    values: dict = field(default_factory=dict)
    visits: dict = field(default_factory=dict)
    alpha_mode: str = "constant"  # constant | visits (1/n, floored at alpha)

    def row(self, key: Hashable) -> np.ndarray:
        row = self.values.get(key)
        if row is None:
            row = self.values[key] = np.zeros(len(self.actions))
            self.visits[key] = np.zeros(len(self.actions), dtype=int)
        return row

    def greedy(self, key: Hashable, allowed: Optional[Sequence[str]] = None) -> str:
        row = self.row(key)
        if allowed is None:
            return self.actions[int(np.argmax(row))]
        idx = [self.actions.index(a) for a in allowed]
        return self.actions[idx[int(np.argmax(row[idx]))]]

    def max_value(self, key: Hashable, allowed: Sequence[str]) -> float:
        row = self.row(key)
        return float(max(row[self.actions.index(a)] for a in allowed))

    def update(self, key: Hashable, action: str, target: float) -> float:
        """Move one entry toward ``target``; returns the step size used."""
        row = self.row(key)
        i = self.actions.index(action)
        self.visits[key][i] += 1
        step = self.alpha
        if self.alpha_mode == "visits":
            step = max(self.alpha, 1.0 / self.visits[key][i])
        row[i] += step * (target - row[i])
        return step


def q_learning_episode(
    table: QTable,
    reset: Callable[[], tuple[Hashable, Sequence[str]]],
    step: Callable[[str], tuple[Optional[Hashable], Optional[Sequence[str]], float]],
    epsilon: float,
    rng: np.random.Generator,
    penalty: float = -10.0,
) -> float:
    """Run one episode on a generic environment and update ``table``.

    ``reset() -> (state, allowed)``; ``step(a) -> (next_state, next_allowed, reward)``
    with ``next_state=None`` at the end. Returns the episode's total reward.
    """
    key, allowed = reset()
    total = 0.0
    while key is not None:
        if rng.random() < epsilon:
            action = table.actions[int(rng.integers(len(table.actions)))]
            if action not in allowed:
                table.update(key, action, penalty)
                total += penalty
                action = allowed[int(rng.integers(len(allowed)))]
        else:
            action = table.greedy(key, allowed)
        nxt, nxt_allowed, reward = step(action)
        total += reward
        if nxt is None:
            target = reward
        else:
            target = reward + table.gamma * table.max_value(nxt, nxt_allowed)
        table.update(key, action, target)
        key, allowed = nxt, nxt_allowed
    return total


class KMeansQAgent:
    def __init__(
        self,
        active,
        k: int = 20,
        alpha: float = 0.1,
        epsilon: float = 0.1,
        epsilon_min: float = 0.01,
        gamma: float = 1.0,
        reward_scale: float = 1e-3,
        penalty: float = -10.0,
        alpha_mode: str = "constant",
        seed: int = 0,
    ):
        self.active = as_sequence(active)
        actions: list[str] = []
        for kind in self.active:
            actions += [a for a in REGISTRY[kind].actions if a not in actions]
        self.table = QTable(tuple(actions), alpha, gamma, alpha_mode=alpha_mode)
        self.k = k
        self.epsilon = epsilon
        self.epsilon_min = epsilon_min
        self.reward_scale = reward_scale
        self.penalty = penalty
        self.seed = seed
        self.centroids: Optional[np.ndarray] = None
        self._mu: Optional[np.ndarray] = None
        self._sd: Optional[np.ndarray] = None

    def fit_clusters(self, log: EventLog) -> "KMeansQAgent":
        vecs = [
            base_vector(d.observation)
            for case in log.cases
            for d in case.decisions
            if d.point.kind in self.active
        ]
        X = np.array(vecs)
        self._mu = X.mean(0)
        sd = X.std(0)
        self._sd = np.where(sd > 1e-12, sd, 1.0)
        Z = (X - self._mu) / self._sd
        k = min(self.k, len(np.unique(Z, axis=0)))
        self.centroids = kmeans_fit(Z, k, seed=self.seed).centroids
        return self

    def state_key(self, state: CaseState, point: DecisionPoint) -> tuple:
        if self.centroids is None:
            raise RuntimeError("clusters not fitted")
        z = (base_vector(observe(state)) - self._mu) / self._sd
        cluster = int(assign(self.centroids, z)[0])
        return (cluster, state.last_activity.value, point.index)

    def train(self, case_nrs: Sequence[int], seed, spec=None, bank=None) -> QTable:
        rng = np.random.default_rng(self.seed)
        n = len(case_nrs)
        for e, case_nr in enumerate(case_nrs):
            frac = e / max(n - 1, 1)
            eps = self.epsilon + (self.epsilon_min - self.epsilon) * frac
            session = Session(case_nr, self.active, seed, spec, bank)

            def reset(session=session):
                if session.done:
                    return None, None
                return self.state_key(session.state, session.pending), session.pending.allowed

            def step(action, session=session):
                session.step(action)
                if session.done:
                    return None, None, session.result.profit * self.reward_scale
                return self.state_key(session.state, session.pending), session.pending.allowed, 0.0

            q_learning_episode(self.table, reset, step, eps, rng, self.penalty)
        return self.table

    def act(self, state: CaseState, point: DecisionPoint) -> str:
        return self.table.greedy(self.state_key(state, point), point.allowed)


def q_learn(active, episodes: int, alpha: float = 0.1, epsilon: float = 0.1, gamma: float = 1.0,
            k: int = 20, seed: int = 0, *, cluster_log: EventLog, env_seed=None, base_case_nr: int = 0,
            spec=None, bank=None, **kwargs) -> KMeansQAgent:
    """Fit clusters on ``cluster_log`` then learn online for ``episodes`` cases."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    agent = KMeansQAgent(active, k=k, alpha=alpha, epsilon=epsilon, gamma=gamma, seed=seed, **kwargs)
    agent.fit_clusters(cluster_log)
    agent.train(range(base_case_nr, base_case_nr + episodes), seed if env_seed is None else env_seed, spec, bank)
    return agent
