"""Case driver: offline logs, stepped sessions, counterfactual enumeration.

All three execution paths share one loop (``_advance``). It runs the case
forward, resolving every decision point that does not belong to the caller
and stopping at the first one that does.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import (
    ActivityKind,
    CaseResult,
    CaseState,
    DEFAULT_SPEC,
    Event,
    Observation,
    ProcessSpec,
    SimulationError,
    _apply_in_place,
    client_decision,
    compute_outcome,
    init_case,
    legal_next,
    observe,
)
from .interventions import (
    REGISTRY,
    DecisionPoint,
    InterventionSequence,
    as_sequence,
    pending_point,
)
from .policies import (
    DEFAULT_BANK,
    BankPolicy,
    ExternalActionRequired,
    PolicyRegime,
    case_regime_tag,
    select_action,
)
from .stochastic import StreamProvider

logger = logging.getLogger(__name__)

# test cases live in their own case_nr namespace
TEST_CASE_OFFSET = 1_000_000_000
VALIDATION_CASE_OFFSET = 500_000_000


@dataclass(frozen=True)
class DecisionRecord:
    point: DecisionPoint
    action: str
    tag: str
    observation: Observation
    active: bool


@dataclass(frozen=True)
class _Context:
    streams: StreamProvider
    spec: ProcessSpec
    bank: BankPolicy
    background: PolicyRegime  # regime for decisions outside the active set


def _environment_step(state: CaseState, streams: StreamProvider, spec: ProcessSpec) -> None:
    A = ActivityKind
    legal = legal_next(state, spec)
    if A.receive_acceptance in legal:
        nxt = A.receive_acceptance if client_decision(state, streams, spec) == "accept" else A.receive_refusal
    elif A.call_customer in legal:
        nxt = A.call_customer
    elif A.cancel_application in legal:
        nxt = A.cancel_application
    elif len(legal) == 1:
        (nxt,) = legal
    else:  # pragma: no cover - control flow always resolves above
        raise SimulationError(f"ambiguous environment step from {sorted(legal)}")
    _apply_in_place(state, nxt, streams, spec)


def _advance(
    state: CaseState,
    active: InterventionSequence,
    ctx: _Context,
    trace: list[DecisionRecord],
    decide: Optional[Callable[[CaseState, DecisionPoint], tuple[str, str]]] = None,
) -> Optional[DecisionPoint]:
    """Run until an active point needs an outside answer, or to the end."""
    while not state.terminal:
        point = pending_point(state, ctx.spec)
        if point is None:
            _environment_step(state, ctx.streams, ctx.spec)
            continue
        is_active = point.kind in active
        if is_active:
            if decide is None:
                return point
            action, tag = decide(state, point)
        else:
            decision = select_action(state, point, ctx.background, ctx.streams, ctx.bank)
            action, tag = decision.action, decision.tag
        if action not in point.allowed:
            raise SimulationError(f"illegal action {action!r}; allowed {list(point.allowed)}")
        trace.append(DecisionRecord(point, action, tag, observe(state), is_active))
        REGISTRY[point.kind].effect(state, point.index, action, ctx.streams, ctx.spec)
    return None


def _context(streams, spec, bank, background) -> _Context:
    if not isinstance(streams, StreamProvider):
        streams = StreamProvider(int(streams))
    return _Context(streams, spec or DEFAULT_SPEC, bank or DEFAULT_BANK, background or PolicyRegime.bank())


def run_case(
    case_nr: int,
    active,
    regime: PolicyRegime,
    streams,
    spec: ProcessSpec = DEFAULT_SPEC,
    bank: BankPolicy = DEFAULT_BANK,
) -> tuple[CaseResult, list[DecisionRecord], str]:
    """Simulate one case offline; returns (result, decision trace, regime tag)."""
    if regime.variant == "external":
        raise ExternalActionRequired("external action required")
    ctx = _context(streams, spec, bank, None)
    active = as_sequence(active)
    tag = case_regime_tag(case_nr, regime, ctx.streams)

    def decide(state, point):
        d = select_action(state, point, regime, ctx.streams, ctx.bank, tag=tag)
        return d.action, d.tag

    state = init_case(case_nr, ctx.streams, ctx.spec)
    trace: list[DecisionRecord] = []
    _advance(state, active, ctx, trace, decide)
    return compute_outcome(state, ctx.spec), trace, tag


def simulate_case(
    case_nr: int,
    active,
    regime: PolicyRegime,
    streams,
    spec: ProcessSpec = DEFAULT_SPEC,
    bank: BankPolicy = DEFAULT_BANK,
) -> CaseResult:
    return run_case(case_nr, active, regime, streams, spec, bank)[0]


# --- online sessions -------------------------------------------------------


class Session:
    """One case paused at decision points of the active interventions.

    Single owner: do not call ``step`` on the same session concurrently.
    ``fork`` checkpoints the session so branches can be explored without
    re-simulating the prefix.
    """

    def __init__(self, case_nr: int, active, streams, spec=None, bank=None, background=None):
        self.active = as_sequence(active)
        self._ctx = _context(streams, spec, bank, background)
        self.case_nr = case_nr
        self.state = init_case(case_nr, self._ctx.streams, self._ctx.spec)
        self.trace: list[DecisionRecord] = []
        self.pending: Optional[DecisionPoint] = None
        self.result: Optional[CaseResult] = None
        self._resume()

    def _resume(self) -> None:
        self.pending = _advance(self.state, self.active, self._ctx, self.trace)
        if self.pending is None:
            self.result = compute_outcome(self.state, self._ctx.spec)

    @property
    def done(self) -> bool:
        return self.result is not None

    @property
    def spec(self) -> ProcessSpec:
        return self._ctx.spec

    def observation(self) -> Observation:
        return observe(self.state)

    def step(self, action: str, tag: str = "external") -> "Session":
        if self.pending is None:
            raise SimulationError("session already terminal")
        point = self.pending
        if action not in point.allowed:
            raise SimulationError(f"illegal action {action!r}; allowed {list(point.allowed)}")
        self.trace.append(DecisionRecord(point, action, tag, observe(self.state), True))
        REGISTRY[point.kind].effect(self.state, point.index, action, self._ctx.streams, self._ctx.spec)
        self._resume()
        return self

    def fork(self) -> "Session":
        new = object.__new__(Session)
        new.active = self.active
        new._ctx = self._ctx
        new.case_nr = self.case_nr
        new.state = self.state.copy()
        new.trace = list(self.trace)
        new.pending = self.pending
        new.result = self.result
        return new


def open_session(case_nr: int, active, seed, spec=None, bank=None, background=None) -> Session:
    return Session(case_nr, active, seed, spec, bank, background)


def step(session: Session, action: str) -> Session:
    return session.step(action)


def run_agent(session: Session, act: Callable[[CaseState, DecisionPoint], str]) -> CaseResult:
    """Drive a session to the end with ``act(state, point) -> action``."""
    while not session.done:
        session.step(act(session.state, session.pending))
    return session.result


# --- counterfactuals -------------------------------------------------------


def enumerate_branches(case_nr: int, active, seed, spec=None, bank=None, background=None) -> list[tuple[tuple, CaseResult]]:
    """Depth-first over every action at every active point, canonical order."""
    active = as_sequence(active)
    if not active:
        raise ValueError("counterfactual enumeration needs at least one active intervention")
    root = Session(case_nr, active, seed, spec, bank, background)
    out: list[tuple[tuple, CaseResult]] = []

    def visit(session: Session, branch: tuple) -> None:
        if session.done:
            out.append((branch, session.result))
            return
        point = session.pending
        for action in point.allowed:
            child = session.fork().step(action)
            visit(child, branch + ((point.kind.value, point.index, action),))

    visit(root, ())
    return out


def evaluate_counterfactuals(case_nr: int, active, seed, spec=None, bank=None, background=None) -> dict[tuple, CaseResult]:
    return dict(enumerate_branches(case_nr, active, seed, spec, bank, background))


def oracle_policy(case_nr: int, active, seed, spec=None, bank=None, background=None) -> tuple[tuple, float]:
    """Best branch by true profit; ties go to the earliest branch."""
    best_branch, best_profit = None, float("-inf")
    for branch, result in enumerate_branches(case_nr, active, seed, spec, bank, background):
        if result.profit > best_profit:
            best_branch, best_profit = branch, result.profit
    return best_branch, best_profit


# --- offline logs ----------------------------------------------------------


@dataclass
class CaseRecord:
    case_nr: int
    events: list[Event]
    decisions: list[DecisionRecord]
    regime_tag: str
    profit: float
    outcome: str
    quality: float  # hidden; exported only on request


@dataclass
class EventLog:
    cases: list[CaseRecord] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cases)

    @property
    def n_events(self) -> int:
        return sum(len(c.events) for c in self.cases)


def _generate_range(args) -> list[CaseRecord]:
    start, stop, regime, active, seed, spec, bank = args
    streams = StreamProvider(seed)
    records = []
    for case_nr in range(start, stop):
        result, trace, tag = run_case(case_nr, active, regime, streams, spec, bank)
        st = result.state
        records.append(
            CaseRecord(case_nr, st.events, trace, tag, result.profit, st.outcome, st.profile.quality)
        )
    return records


def generate_log(
    n_cases: int,
    delta: float,
    active,
    seed: int,
    base_case_nr: int = 0,
    spec: ProcessSpec = DEFAULT_SPEC,
    bank: BankPolicy = DEFAULT_BANK,
    workers: int = 1,
) -> EventLog:
    """Simulate ``n_cases`` consecutive cases under mixed(delta).

    ``workers > 1`` shards by case_nr across processes; the merged log is
    identical to the single-process one.
    """
    if n_cases < 1:
        raise ValueError("n_cases must be at least 1")
    active = as_sequence(active)
    regime = PolicyRegime.mixed(delta)
    stop = base_case_nr + n_cases
    if workers <= 1:
        cases = _generate_range((base_case_nr, stop, regime, active, seed, spec, bank))
    else:
        size = -(-n_cases // workers)
        shards = [
            (s, min(s + size, stop), regime, active, seed, spec, bank)
            for s in range(base_case_nr, stop, size)
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cases = [rec for part in pool.map(_generate_range, shards) for rec in part]
    meta = {
        "seed": seed,
        "delta": delta,
        "active": str(active),
        "n_cases": n_cases,
        "base_case_nr": base_case_nr,
    }
    logger.debug("generated %d cases (%s)", n_cases, meta)
    return EventLog(cases, meta)
