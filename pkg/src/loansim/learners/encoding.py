"""Aggregation encoding of a running case's prefix."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from ..core import ACTIVITIES, CaseState, Observation, observe
from ..interventions import REGISTRY

BASE_FEATURES = tuple(f"count_{a.value}" for a in ACTIVITIES) + (
    "est_quality",
    "unc_quality",
    "amount_1e4",
    "cost_1e2",
    "elapsed_10d",
    "hq_contacted",
)
BASE_DIM = len(BASE_FEATURES)

_ACTION_SETS = {a: spec.actions for spec in REGISTRY.values() for a in spec.actions}


def base_vector(obs: Union[Observation, CaseState]) -> np.ndarray:
    if isinstance(obs, CaseState):
        obs = observe(obs)
    out = np.empty(BASE_DIM)
    out[: len(obs.counts)] = obs.counts
    out[len(obs.counts):] = (
        obs.est_quality,
        obs.unc_quality,
        obs.amount / 1e4,
        obs.cost / 1e2,
        obs.elapsed / 10.0,
        1.0 if obs.hq_contacted else 0.0,
    )
    return out


def one_hot(action: str, actions: Sequence[str]) -> np.ndarray:
    vec = np.zeros(len(actions))
    vec[list(actions).index(action)] = 1.0
    return vec


def encode_prefix(
    obs: Union[Observation, CaseState], action: str, actions: Optional[Sequence[str]] = None
) -> np.ndarray:
    """Prefix features followed by the one-hot candidate action."""
    if actions is None:
        actions = _ACTION_SETS[action]
    return np.concatenate([base_vector(obs), one_hot(action, actions)])
