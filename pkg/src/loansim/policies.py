"""Data-gathering regimes: the bank's rules, uniform random, and their mixture."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import PRIORITY, STANDARD, CaseState
from .interventions import CONTACT, WAIT, DecisionPoint, InterventionKind
from .stochastic import StreamProvider


@dataclass(frozen=True)
class BankPolicy:
    """Thresholds of the bank's hand-written rules (observables only)."""

    priority_max_unc: float = 0.25
    priority_max_amount: float = float("inf")
    low_rate_min_est: float = 0.8
    mid_rate_min_est: float = 0.6
    hq_min_est: float = 0.4
    hq_min_calls: int = 1


DEFAULT_BANK = BankPolicy()


def bank_action(state: CaseState, point: DecisionPoint, bank: BankPolicy = DEFAULT_BANK) -> str:
    kind = point.kind
    if kind is InterventionKind.choose_procedure:
        if state.unc_quality < bank.priority_max_unc and state.amount < bank.priority_max_amount:
            return PRIORITY
        return STANDARD
    if kind is InterventionKind.set_interest_rate:
        if state.est_quality >= bank.low_rate_min_est:
            return "0.07"
        if state.est_quality >= bank.mid_rate_min_est:
            return "0.08"
        return "0.09"
    if point.index >= bank.hq_min_calls and state.est_quality >= bank.hq_min_est:
        return CONTACT
    return WAIT


@dataclass(frozen=True)
class PolicyRegime:
    variant: str  # bank | random | mixed | external
    delta: float = 1.0
    salt: int = 0  # decorrelates random choices between repetitions

    def __post_init__(self) -> None:
        if self.variant not in ("bank", "random", "mixed", "external"):
            raise ValueError(f"unknown regime {self.variant!r}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")

    @classmethod
    def bank(cls) -> "PolicyRegime":
        return cls("bank")

    @classmethod
    def random(cls, salt: int = 0) -> "PolicyRegime":
        return cls("random", 0.0, salt)

    @classmethod
    def mixed(cls, delta: float, salt: int = 0) -> "PolicyRegime":
        return cls("mixed", delta, salt)


@dataclass(frozen=True)
class PolicyDecision:
    point: DecisionPoint
    action: str
    tag: str  # bank | rct


class ExternalActionRequired(RuntimeError):
    pass


def case_regime_tag(case_nr: int, regime: PolicyRegime, streams: StreamProvider) -> str:
    """Which rule governs every decision of this case: 'bank' or 'rct'."""
    if regime.variant == "bank":
        return "bank"
    if regime.variant == "random":
        return "rct"
    if regime.variant == "mixed":
        # one draw per case, so a case never mixes the two rules
        u = streams.uniform(case_nr, "regime", regime.salt)
        return "bank" if u < regime.delta else "rct"
    raise ExternalActionRequired("external action required")


def random_action(state: CaseState, point: DecisionPoint, streams: StreamProvider, salt: int = 0) -> str:
    u = streams.uniform(state.case_nr, "policy-noise", salt * 64 + point.ordinal)
    return point.allowed[min(int(u * len(point.allowed)), len(point.allowed) - 1)]


def select_action(
    state: CaseState,
    point: DecisionPoint,
    regime: PolicyRegime,
    streams: StreamProvider,
    bank: BankPolicy = DEFAULT_BANK,
    tag: Optional[str] = None,
) -> PolicyDecision:
    if tag is None:
        tag = case_regime_tag(state.case_nr, regime, streams)
    if tag == "bank":
        action = bank_action(state, point, bank)
    else:
        action = random_action(state, point, streams, regime.salt)
    return PolicyDecision(point, action, tag)
