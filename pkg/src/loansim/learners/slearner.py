"""S-learner: one ridge outcome model with the candidate action as input.

The design row for (prefix, action) is ``[1, x, onehot(a), x * onehot(a)]``
on standardized prefix features ``x``. The interaction block lets the
predicted effect of an action vary with the case; without it a linear
model would recommend the same action everywhere.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from ..core import CaseState, observe
from ..engine import (
    VALIDATION_CASE_OFFSET,
    EventLog,
    Session,
)
from ..interventions import CONTACT, WAIT, DecisionPoint, InterventionKind, REGISTRY
from .encoding import BASE_DIM, base_vector
from .ridge import fit_ridge


class NotFittedError(RuntimeError):
    pass


class SLearner:
    def __init__(self, kind, lam: float = 1.0, interactions: bool = True):
        self.kind = InterventionKind(kind)
        self.actions: tuple[str, ...] = REGISTRY[self.kind].actions
        self.lam = lam
        self.interactions = interactions
        self.weights: Optional[np.ndarray] = None
        self.threshold: Optional[float] = None
        self._mu = np.zeros(BASE_DIM)
        self._sd = np.ones(BASE_DIM)

    @property
    def timed(self) -> bool:
        return REGISTRY[self.kind].depth > 1

    def _design(self, base: np.ndarray, action_idx: np.ndarray) -> np.ndarray:
        n = len(base)
        x = (base - self._mu) / self._sd
        onehot = np.zeros((n, len(self.actions)))
        onehot[np.arange(n), action_idx] = 1.0
        blocks = [np.ones((n, 1)), x, onehot]
        if self.interactions:
            blocks.append((x[:, :, None] * onehot[:, None, :]).reshape(n, -1))
        return np.hstack(blocks)

    def training_rows(self, log: EventLog) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        bases, acts, ys = [], [], []
        for case in log.cases:
            for d in case.decisions:
                if d.point.kind is self.kind:
                    bases.append(base_vector(d.observation))
                    acts.append(self.actions.index(d.action))
                    ys.append(case.profit)
        if not bases:
            raise ValueError(f"log holds no {self.kind.value} decisions")
        return np.array(bases), np.array(acts), np.array(ys)

    def fit(self, log: EventLog) -> "SLearner":
        base, acts, y = self.training_rows(log)
        self._mu = base.mean(0)
        sd = base.std(0)
        self._sd = np.where(sd > 1e-12, sd, 1.0)
        self.weights = fit_ridge(self._design(base, acts), y, self.lam)
        return self

    def predict_all(self, obs) -> np.ndarray:
        """Predicted profit for every action, in canonical order."""
        if self.weights is None:
            raise NotFittedError("model is not fitted")
        if isinstance(obs, CaseState):
            obs = observe(obs)
        base = np.repeat(base_vector(obs)[None, :], len(self.actions), axis=0)
        return self._design(base, np.arange(len(self.actions))) @ self.weights

    def uplift(self, obs) -> float:
        pred = self.predict_all(obs)
        return float(pred[self.actions.index(CONTACT)] - pred[self.actions.index(WAIT)])

    def act(self, state: CaseState, point: DecisionPoint) -> str:
        if point.kind is not self.kind:
            raise ValueError(f"model handles {self.kind.value}, not {point.kind.value}")
        if self.timed:
            if self.threshold is None:
                raise NotFittedError("trigger threshold not tuned")
            return CONTACT if self.uplift(state) > self.threshold else WAIT
        pred = self.predict_all(state)
        return self.actions[int(np.argmax(pred))]  # first action on ties


def choose_by_threshold(uplift: float, tau: float) -> str:
    return CONTACT if uplift > tau else WAIT


class PolicyMap:
    """Routes each decision point to the agent responsible for its kind."""

    def __init__(self, agents: dict):
        self.agents = {InterventionKind(k): a for k, a in agents.items()}

    def act(self, state: CaseState, point: DecisionPoint) -> str:
        return self.agents[point.kind].act(state, point)


def _validation_total(agent, case_nrs: Sequence[int], active, seed, spec, bank) -> float:
    total = []
    for c in case_nrs:
        s = Session(c, active, seed, spec, bank)
        while not s.done:
            s.step(agent.act(s.state, s.pending))
        total.append(s.result.profit)
    return float(np.sum(total))


def uplift_grid(model: SLearner, case_nrs: Iterable[int], active, seed, spec=None, bank=None, n: int = 21) -> list[float]:
    """Evenly spaced quantiles of uplift seen at every reachable timing point."""
    ups = []
    for c in case_nrs:
        s = Session(c, active, seed, spec, bank)
        while not s.done:
            if s.pending.kind is model.kind:
                ups.append(model.uplift(s.state))
                s.step(WAIT if WAIT in s.pending.allowed else s.pending.allowed[0])
            else:
                s.step(s.pending.allowed[0])
    if not ups:
        return [0.0]
    return sorted(set(float(q) for q in np.quantile(ups, np.linspace(0, 1, n))))


def tune_threshold(
    model: SLearner,
    case_nrs: Sequence[int],
    grid: Sequence[float],
    active,
    seed,
    spec=None,
    bank=None,
    others: Optional[dict] = None,
) -> float:
    """Pick the grid value with the highest total validation profit (smallest on ties)."""
    if not grid:
        raise ValueError("threshold grid is empty")
    best_tau, best_total = None, -np.inf
    for tau in sorted(grid):
        model.threshold = tau
        agent = PolicyMap({model.kind: model, **(others or {})})
        total = _validation_total(agent, case_nrs, active, seed, spec, bank)
        if total > best_total:
            best_tau, best_total = tau, total
    model.threshold = best_tau
    return best_tau


def validation_cases(n: int) -> range:
    return range(VALIDATION_CASE_OFFSET, VALIDATION_CASE_OFFSET + n)
