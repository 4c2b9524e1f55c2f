"""Loan-application process: control flow, client dynamics and profit.

Flow (standard procedure)::

    initiate_application -> choose_procedure
        -> parallel( A: call_customer x K  |  B: optional contact_hq )
        -> cancel_application
         | validate_application -> calculate_offer -> receive_acceptance / receive_refusal

The priority procedure skips the parallel block entirely and never cancels.
Branch B starts at the branch-A timestamp of the chosen timing point, so HQ
contact can finish before, overlap, or start after individual calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Optional

from . import stochastic as rs
from .stochastic import StreamProvider


class ActivityKind(str, Enum):
    initiate_application = "initiate_application"
    choose_procedure = "choose_procedure"
    call_customer = "call_customer"
    contact_hq = "contact_hq"
    validate_application = "validate_application"
    calculate_offer = "calculate_offer"
    receive_acceptance = "receive_acceptance"
    receive_refusal = "receive_refusal"
    cancel_application = "cancel_application"

    def __str__(self) -> str:
        return self.value


ACTIVITIES = tuple(ActivityKind)
_ORDINAL = {a: i for i, a in enumerate(ACTIVITIES)}

STANDARD = "standard"
PRIORITY = "priority"


class SimulationError(RuntimeError):
    """Raised when an operation is attempted in a state that does not allow it."""


@dataclass(frozen=True)
class ProcessSpec:
    """Every tunable constant of the environment.

    Durations are (low, high) in days and drawn uniformly; low == high means
    a fixed duration. Costs are EUR.
    """

    # client draws
    amount_median: float = 20_000.0
    amount_log_sigma: float = 0.5
    amount_min: float = 5_000.0
    amount_max: float = 150_000.0
    quality_a: float = 2.0
    quality_b: float = 2.0
    unc_low: float = 0.1
    unc_high: float = 0.5
    # customer-contact loop
    loop_probs: tuple[float, ...] = (0.3, 0.4, 0.3)
    unc_decay: float = 0.6
    # durations and base costs
    initiate_duration: tuple[float, float] = (0.1, 0.5)
    initiate_cost: float = 10.0
    choose_duration: tuple[float, float] = (0.1, 0.1)
    choose_cost: float = 5.0
    call_duration: tuple[float, float] = (1.0, 3.0)
    call_cost: float = 50.0
    hq_duration: tuple[float, float] = (3.0, 6.0)
    hq_base_cost: float = 100.0
    hq_unc_cost: float = 400.0
    validate_duration: tuple[float, float] = (1.0, 2.0)
    validate_cost: float = 25.0
    offer_duration: tuple[float, float] = (0.2, 0.2)
    offer_cost: float = 10.0
    cancel_duration: tuple[float, float] = (0.1, 0.1)
    cancel_cost: float = 10.0
    priority_surcharge: float = 5000.0
    # client acceptance: z = base - rate_coef*(r - rate_ref) - time_coef*t - amount_coef*A/1000
    accept_base: float = 5.0
    accept_rate_coef: float = 55.0
    accept_rate_ref: float = 0.05
    accept_time_coef: float = 0.10
    accept_amount_coef: float = 0.03
    # pricing and profit
    risk_free_rate: float = 0.03
    discount_quality_coef: float = 0.05
    discount_unc_coef: float = 0.10
    interest_years: float = 5.0
    quality_profit_base: float = 0.5
    # "term": interest paid yearly over interest_years, each year discounted;
    # "process": flat interest_years * revenue, discounted over process days only
    discounting: str = "process"
    cancel_threshold: float = 0.3

    def __post_init__(self) -> None:
        if self.discounting not in ("term", "process"):
            raise ValueError(f"unknown discounting mode {self.discounting!r}")
        if len(self.loop_probs) != 3:
            raise ValueError("loop_probs must cover 1, 2 and 3 calls")
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name.endswith("_duration"):
                if not 0 <= v[0] <= v[1]:
                    raise ValueError(f"{f.name} must satisfy 0 <= low <= high")
            elif f.name.endswith("_cost") and v < 0:
                raise ValueError(f"{f.name} must be nonnegative")

    @property
    def max_calls(self) -> int:
        return len(self.loop_probs)

    def updated(self, **changes) -> "ProcessSpec":
        return replace(self, **changes)


DEFAULT_SPEC = ProcessSpec()

# branch membership inside the parallel block
BRANCH_OF = {ActivityKind.call_customer: "A", ActivityKind.contact_hq: "B"}


@dataclass(frozen=True)
class ClientProfile:
    amount: float
    quality: float
    unc_quality_0: float


@dataclass(frozen=True)
class Event:
    activity: ActivityKind
    start: float
    end: float
    cost: float
    branch: str
    # observable attributes recorded with the event
    cum_cost: float
    amount: float
    est_quality: float
    unc_quality: float
    interest_rate: Optional[float]
    discount_factor: Optional[float]


@dataclass
class CaseState:
    case_nr: int
    profile: ClientProfile
    n_calls: int  # loop length K; environment-side, never shown to policies
    clock: float = 0.0
    a_clock: float = 0.0  # end of the latest main/branch-A activity
    events: list[Event] = field(default_factory=list)
    cost: float = 0.0
    amount: float = 0.0
    est_quality: float = 0.0
    unc_quality: float = 0.0
    interest_rate: Optional[float] = None
    discount_factor: Optional[float] = None
    procedure: Optional[str] = None
    hq_contacted: bool = False
    hq_end: Optional[float] = None
    hq_waits: int = 0  # timing points passed without contacting HQ
    hq_never: bool = False
    calls_made: int = 0
    terminal: bool = False
    outcome: Optional[str] = None  # accepted | refused | canceled

    def copy(self) -> "CaseState":
        new = replace(self)
        new.events = list(self.events)
        return new

    @property
    def last_activity(self) -> Optional[ActivityKind]:
        return self.events[-1].activity if self.events else None

    def count(self, activity: ActivityKind) -> int:
        return sum(1 for e in self.events if e.activity is activity)


@dataclass(frozen=True)
class CaseResult:
    case_nr: int
    profit: float
    accepted: bool
    canceled: bool
    total_cost: float
    elapsed: float
    state: CaseState


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _clip01(x: float) -> float:
    return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


def _duration_slot(activity: ActivityKind, instance: int = 0) -> int:
    # stable occurrence index per activity instance, independent of ordering
    return _ORDINAL[activity] * 8 + instance


def _activity_params(spec: ProcessSpec, activity: ActivityKind) -> tuple[tuple[float, float], float]:
    A = ActivityKind
    table = {
        A.initiate_application: (spec.initiate_duration, spec.initiate_cost),
        A.choose_procedure: (spec.choose_duration, spec.choose_cost),
        A.call_customer: (spec.call_duration, spec.call_cost),
        A.contact_hq: (spec.hq_duration, spec.hq_base_cost),
        A.validate_application: (spec.validate_duration, spec.validate_cost),
        A.calculate_offer: (spec.offer_duration, spec.offer_cost),
        A.cancel_application: (spec.cancel_duration, spec.cancel_cost),
        A.receive_acceptance: ((0.0, 0.0), 0.0),
        A.receive_refusal: ((0.0, 0.0), 0.0),
    }
    return table[activity]


def _sample_duration(streams: StreamProvider, case_nr: int, bounds: tuple[float, float], slot: int) -> float:
    low, high = bounds
    if low == high:
        return low
    return rs.uniform_range(streams.uniform(case_nr, "duration", slot), low, high)


def estimate_quality(streams: StreamProvider, case_nr: int, quality: float, unc: float, occurrence: int) -> float:
    """Bank's noisy view of the true quality; occurrence 0 is the initial estimate."""
    purpose = "case-init" if occurrence == 0 else "call-redraw"
    occ = 3 if occurrence == 0 else occurrence
    return _clip01(rs.normal(streams.uniform(case_nr, purpose, occ), quality, unc))


def draw_profile(case_nr: int, streams: StreamProvider, spec: ProcessSpec = DEFAULT_SPEC) -> ClientProfile:
    amount = rs.lognormal(
        streams.uniform(case_nr, "case-init", 0), math.log(spec.amount_median), spec.amount_log_sigma
    )
    amount = min(max(amount, spec.amount_min), spec.amount_max)
    quality = rs.beta(streams.uniform(case_nr, "case-init", 1), spec.quality_a, spec.quality_b)
    unc0 = rs.uniform_range(streams.uniform(case_nr, "case-init", 2), spec.unc_low, spec.unc_high)
    return ClientProfile(amount, quality, unc0)


def _record(state: CaseState, activity: ActivityKind, start: float, end: float, cost: float, branch: str) -> None:
    state.cost += cost
    state.events.append(
        Event(
            activity, start, end, cost, branch,
            state.cost, state.amount, state.est_quality, state.unc_quality,
            state.interest_rate, state.discount_factor,
        )
    )
    if end > state.clock:
        state.clock = end


def init_case(case_nr: int, streams: StreamProvider, spec: ProcessSpec = DEFAULT_SPEC) -> CaseState:
    """Draw the client and record ``initiate_application``."""
    if case_nr < 0:
        raise ValueError("case_nr must be nonnegative")
    profile = draw_profile(case_nr, streams, spec)
    k = 1 + rs.categorical(streams.uniform(case_nr, "loop-count", 0), spec.loop_probs)
    state = CaseState(case_nr=case_nr, profile=profile, n_calls=k)
    state.amount = profile.amount
    state.unc_quality = profile.unc_quality_0
    state.est_quality = estimate_quality(streams, case_nr, profile.quality, profile.unc_quality_0, 0)
    bounds, cost = _activity_params(spec, ActivityKind.initiate_application)
    dur = _sample_duration(streams, case_nr, bounds, _duration_slot(ActivityKind.initiate_application))
    _record(state, ActivityKind.initiate_application, 0.0, dur, cost, "main")
    state.a_clock = dur
    return state


def in_parallel_block(state: CaseState) -> bool:
    if state.procedure != STANDARD or state.terminal:
        return False
    return state.last_activity in (ActivityKind.choose_procedure, ActivityKind.call_customer, ActivityKind.contact_hq)


def legal_next(state: CaseState, spec: ProcessSpec = DEFAULT_SPEC) -> set[ActivityKind]:
    """Activities the control flow enables next."""
    A = ActivityKind
    if state.terminal:
        raise SimulationError("case already terminal")
    last = state.last_activity
    if last is A.initiate_application:
        return {A.choose_procedure}
    if last is A.validate_application:
        return {A.calculate_offer}
    if last is A.calculate_offer:
        return {A.receive_acceptance, A.receive_refusal}
    if state.procedure == PRIORITY:
        return {A.validate_application}
    # standard procedure, inside the parallel block
    enabled: set[ActivityKind] = set()
    if state.calls_made < state.n_calls:
        enabled.add(A.call_customer)
        if not state.hq_contacted and not state.hq_never:
            enabled.add(A.contact_hq)
        return enabled
    # loop exhausted
    if state.est_quality < spec.cancel_threshold or state.hq_never:
        return {A.cancel_application}
    if state.hq_contacted:
        return {A.validate_application}
    return {A.contact_hq, A.cancel_application}


def discount_factor(est_quality: float, unc_quality: float, spec: ProcessSpec = DEFAULT_SPEC) -> float:
    return (
        spec.risk_free_rate
        + spec.discount_quality_coef * (1.0 - est_quality)
        + spec.discount_unc_coef * unc_quality
    )


def _apply_in_place(state: CaseState, activity: ActivityKind, streams: StreamProvider, spec: ProcessSpec) -> None:
    A = ActivityKind
    bounds, cost = _activity_params(spec, activity)
    case_nr = state.case_nr

    if activity is A.call_customer:
        dur = _sample_duration(streams, case_nr, bounds, _duration_slot(activity, state.calls_made))
        start = state.a_clock
        state.calls_made += 1
        state.unc_quality = _clip01(state.unc_quality * spec.unc_decay)
        state.est_quality = estimate_quality(
            streams, case_nr, state.profile.quality, state.unc_quality, state.calls_made
        )
        state.a_clock = start + dur
        _record(state, activity, start, start + dur, cost, "A")
        return

    if activity is A.contact_hq:
        dur = _sample_duration(streams, case_nr, bounds, _duration_slot(activity))
        start = state.a_clock
        cost = spec.hq_base_cost + spec.hq_unc_cost * state.unc_quality
        state.hq_contacted = True
        state.hq_end = start + dur
        _record(state, activity, start, start + dur, cost, "B")
        return

    # everything else runs on the main line, after any open branches join
    start = state.a_clock
    if state.hq_end is not None and state.hq_end > start:
        start = state.hq_end
    if activity is A.choose_procedure:
        if state.procedure is None:
            raise SimulationError("procedure must be chosen before choose_procedure is recorded")
        if state.procedure == PRIORITY:
            cost += spec.priority_surcharge
    elif activity is A.calculate_offer:
        if state.interest_rate is None:
            raise SimulationError("interest rate must be set before calculate_offer")
        state.discount_factor = discount_factor(state.est_quality, state.unc_quality, spec)
    dur = _sample_duration(streams, case_nr, bounds, _duration_slot(activity))
    state.a_clock = start + dur
    _record(state, activity, start, start + dur, cost, "main")
    if activity is A.cancel_application:
        state.terminal, state.outcome = True, "canceled"
    elif activity is A.receive_acceptance:
        state.terminal, state.outcome = True, "accepted"
    elif activity is A.receive_refusal:
        state.terminal, state.outcome = True, "refused"


def apply_activity(
    state: CaseState, activity: ActivityKind, streams: StreamProvider, spec: ProcessSpec = DEFAULT_SPEC
) -> CaseState:
    """Return a new state with ``activity`` executed; the input is left untouched."""
    if activity not in legal_next(state, spec):
        raise SimulationError(f"activity not enabled: {activity}")
    new = state.copy()
    _apply_in_place(new, activity, streams, spec)
    return new


def acceptance_probability(rate: float, elapsed: float, amount: float, spec: ProcessSpec = DEFAULT_SPEC) -> float:
    z = (
        spec.accept_base
        - spec.accept_rate_coef * (rate - spec.accept_rate_ref)
        - spec.accept_time_coef * elapsed
        - spec.accept_amount_coef * (amount / 1000.0)
    )
    return sigmoid(z)


def client_decision(state: CaseState, streams: StreamProvider, spec: ProcessSpec = DEFAULT_SPEC) -> str:
    """'accept' or 'refuse', from the case's dedicated client-decision draw."""
    if state.interest_rate is None:
        raise SimulationError("client decision requires an interest rate")
    p = acceptance_probability(state.interest_rate, state.clock, state.amount, spec)
    u = streams.uniform(state.case_nr, "client-decision", 0)
    return "accept" if rs.bernoulli(u, p) else "refuse"


def accepted_profit(
    amount: float, rate: float, quality: float, discount: float, elapsed: float, total_cost: float,
    spec: ProcessSpec = DEFAULT_SPEC,
) -> float:
    yearly = amount * rate * (spec.quality_profit_base + quality)
    delay = (1.0 + discount) ** (elapsed / 365.0)
    if spec.discounting == "process":
        return yearly * spec.interest_years / delay - total_cost
    years = spec.interest_years
    annuity = years if discount == 0 else (1.0 - (1.0 + discount) ** -years) / discount
    return yearly * annuity / delay - total_cost


def compute_outcome(state: CaseState, spec: ProcessSpec = DEFAULT_SPEC) -> CaseResult:
    if not state.terminal:
        raise SimulationError("case is not terminal")
    accepted = state.outcome == "accepted"
    if accepted:
        profit = accepted_profit(
            state.amount, state.interest_rate, state.profile.quality,
            state.discount_factor, state.clock, state.cost, spec,
        )
    else:
        profit = -state.cost
    return CaseResult(
        case_nr=state.case_nr,
        profit=profit,
        accepted=accepted,
        canceled=state.outcome == "canceled",
        total_cost=state.cost,
        elapsed=state.clock,
        state=state,
    )


@dataclass(frozen=True)
class Observation:
    """What a policy may see at a decision: the observable prefix summary."""

    counts: tuple[int, ...]  # per ActivityKind, in declaration order
    est_quality: float
    unc_quality: float
    amount: float
    cost: float
    elapsed: float
    hq_contacted: bool
    last_activity: Optional[ActivityKind]


def observe(state: CaseState) -> Observation:
    counts = [0] * len(ACTIVITIES)
    for e in state.events:
        counts[_ORDINAL[e.activity]] += 1
    return Observation(
        tuple(counts),
        state.est_quality,
        state.unc_quality,
        state.amount,
        state.cost,
        state.a_clock,
        state.hq_contacted,
        state.last_activity,
    )
