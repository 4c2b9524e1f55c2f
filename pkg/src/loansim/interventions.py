"""The three built-in interventions, their decision points and effects.

Actions are plain strings everywhere (``"priority"``, ``"0.08"``, ``"wait"``)
so they serialize identically in logs, CSV and the wire protocol.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Optional, Sequence

from .core import (
    PRIORITY,
    STANDARD,
    ActivityKind,
    CaseState,
    ProcessSpec,
    DEFAULT_SPEC,
    _apply_in_place,
    in_parallel_block,
    legal_next,
)
from .stochastic import StreamProvider


class InterventionKind(str, Enum):
    choose_procedure = "choose_procedure"
    set_interest_rate = "set_interest_rate"
    time_contact_hq = "time_contact_hq"

    def __str__(self) -> str:
        return self.value


CONTACT = "contact"
WAIT = "wait"


@dataclass(frozen=True)
class DecisionPoint:
    kind: InterventionKind
    index: int  # 0-based point index within the intervention
    after_event: int  # index of the event the decision follows
    allowed: tuple[str, ...]

    @property
    def ordinal(self) -> int:
        """Case-wide position used to key per-decision noise."""
        return _ORDINAL_BASE[self.kind] + self.index


_ORDINAL_BASE = {
    InterventionKind.choose_procedure: 0,
    InterventionKind.set_interest_rate: 1,
    InterventionKind.time_contact_hq: 2,
}


@dataclass(frozen=True)
class InterventionSpec:
    """An intervention: action set, declared dimensions and how it plugs in.

    ``locate`` returns the point index pending in a state, or None.
    ``effect`` mutates the state in place to carry out an action.
    """

    kind: InterventionKind
    actions: tuple[str, ...]
    width: int
    depth: int
    locate: Callable[[CaseState, ProcessSpec], Optional[int]]
    effect: Callable[[CaseState, int, str, StreamProvider, ProcessSpec], None]

    def pending(self, state: CaseState, spec: ProcessSpec = DEFAULT_SPEC) -> Optional[DecisionPoint]:
        if state.terminal:
            return None
        index = self.locate(state, spec)
        if index is None:
            return None
        return DecisionPoint(self.kind, index, len(state.events) - 1, self.actions)


# --- choose_procedure ------------------------------------------------------


def _locate_procedure(state: CaseState, spec: ProcessSpec) -> Optional[int]:
    if state.procedure is None and state.last_activity is ActivityKind.initiate_application:
        return 0
    return None


def _effect_procedure(state: CaseState, index: int, action: str, streams: StreamProvider, spec: ProcessSpec) -> None:
    state.procedure = action
    _apply_in_place(state, ActivityKind.choose_procedure, streams, spec)


# --- set_interest_rate -----------------------------------------------------

RATES = ("0.07", "0.08", "0.09")


def _locate_rate(state: CaseState, spec: ProcessSpec) -> Optional[int]:
    if state.interest_rate is None and state.last_activity is ActivityKind.validate_application:
        return 0
    return None


def _effect_rate(state: CaseState, index: int, action: str, streams: StreamProvider, spec: ProcessSpec) -> None:
    state.interest_rate = float(action)
    _apply_in_place(state, ActivityKind.calculate_offer, streams, spec)


# --- time_contact_hq -------------------------------------------------------


def _locate_hq(state: CaseState, spec: ProcessSpec) -> Optional[int]:
    if not in_parallel_block(state) or state.hq_contacted or state.hq_never:
        return None
    j = state.calls_made
    if state.hq_waits != j:
        return None
    if ActivityKind.contact_hq not in legal_next(state, spec):
        # final call left the estimate below the cancel threshold
        return None
    return j


def _effect_hq(state: CaseState, index: int, action: str, streams: StreamProvider, spec: ProcessSpec) -> None:
    if action == CONTACT:
        _apply_in_place(state, ActivityKind.contact_hq, streams, spec)
    else:
        state.hq_waits += 1
        if state.calls_made >= state.n_calls:
            state.hq_never = True


REGISTRY: dict[InterventionKind, InterventionSpec] = {}


def register(spec: InterventionSpec) -> None:
    REGISTRY[spec.kind] = spec


register(InterventionSpec(InterventionKind.choose_procedure, (STANDARD, PRIORITY), 2, 1, _locate_procedure, _effect_procedure))
register(InterventionSpec(InterventionKind.set_interest_rate, RATES, 3, 1, _locate_rate, _effect_rate))
register(InterventionSpec(InterventionKind.time_contact_hq, (CONTACT, WAIT), 2, 4, _locate_hq, _effect_hq))

# process order in which points can arise
CANONICAL_ORDER = (
    InterventionKind.choose_procedure,
    InterventionKind.time_contact_hq,
    InterventionKind.set_interest_rate,
)


class InterventionSequence(tuple):
    """Ordered, duplicate-free tuple of intervention kinds."""

    def __new__(cls, kinds: Iterable = ()):
        items = [InterventionKind(k) for k in kinds]
        if len(set(items)) != len(items):
            raise ValueError("intervention sequence contains duplicates")
        items.sort(key=CANONICAL_ORDER.index)
        return super().__new__(cls, items)

    @classmethod
    def parse(cls, text: str) -> "InterventionSequence":
        parts = [p.strip() for p in text.split(",") if p.strip()]
        try:
            return cls(parts)
        except ValueError as exc:
            raise ValueError(f"bad intervention list {text!r}: {exc}") from None

    def __str__(self) -> str:
        return ",".join(k.value for k in self)


def as_sequence(active) -> InterventionSequence:
    if isinstance(active, InterventionSequence):
        return active
    if isinstance(active, str):
        return InterventionSequence.parse(active)
    if isinstance(active, InterventionKind):
        return InterventionSequence([active])
    return InterventionSequence(active)


def pending_point(state: CaseState, spec: ProcessSpec = DEFAULT_SPEC) -> Optional[DecisionPoint]:
    """The decision point pending at the current position, active or not."""
    for kind in CANONICAL_ORDER:
        point = REGISTRY[kind].pending(state, spec)
        if point is not None:
            return point
    return None


def decision_points(state: CaseState, active, spec: ProcessSpec = DEFAULT_SPEC) -> list[DecisionPoint]:
    """Points of the active interventions still ahead of this state.

    The first entry, if its ``after_event`` equals the last event index, is
    pending now. Later HQ points assume the case keeps waiting.
    """
    active = as_sequence(active)
    if state.terminal:
        return []
    points: list[DecisionPoint] = []
    last = len(state.events) - 1
    A = ActivityKind
    for kind in active:
        spec_i = REGISTRY[kind]
        now = spec_i.pending(state, spec)
        if kind is InterventionKind.choose_procedure:
            if now is not None:
                points.append(now)
        elif kind is InterventionKind.set_interest_rate:
            if state.interest_rate is None and not (state.procedure == STANDARD and state.hq_never):
                points.append(now or DecisionPoint(kind, 0, -1, spec_i.actions))
        else:
            if state.procedure != STANDARD or state.hq_contacted or state.hq_never:
                continue
            if state.last_activity not in (A.choose_procedure, A.call_customer, A.contact_hq):
                continue
            first = state.hq_waits
            for j in range(first, state.n_calls + 1):
                if j == state.calls_made and now is None:
                    continue
                after = last if (now is not None and j == now.index) else -1
                points.append(DecisionPoint(kind, j, after, spec_i.actions))
    return points


def width_depth(kind) -> tuple[int, int]:
    s = REGISTRY[InterventionKind(kind)]
    return s.width, s.depth


def canonical_actions(kind) -> Sequence[str]:
    return REGISTRY[InterventionKind(kind)].actions


def counterfactual_branches(case_nr: int, active, seed: int, spec: ProcessSpec = DEFAULT_SPEC, bank=None) -> list[tuple]:
    """Every complete action assignment for the case, in canonical DFS order.

    Each branch is a tuple of ``(kind, point_index, action)`` triples.
    """
    from .engine import enumerate_branches

    return [branch for branch, _ in enumerate_branches(case_nr, active, seed, spec=spec, bank=bank)]
