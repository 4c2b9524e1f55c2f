"""Loan-application process simulator for prescriptive process monitoring."""

from .core import DEFAULT_SPEC, ActivityKind, CaseResult, CaseState, ProcessSpec, SimulationError
from .engine import EventLog, Session, enumerate_branches, evaluate_counterfactuals, generate_log, oracle_policy
from .interventions import InterventionKind, InterventionSequence
from .policies import DEFAULT_BANK, BankPolicy, PolicyRegime, bank_action
from .stochastic import StreamProvider

__all__ = [
    "DEFAULT_SPEC",
    "ActivityKind",
    "CaseResult",
    "CaseState",
    "ProcessSpec",
    "SimulationError",
    "EventLog",
    "Session",
    "enumerate_branches",
    "evaluate_counterfactuals",
    "generate_log",
    "oracle_policy",
    "InterventionKind",
    "InterventionSequence",
    "DEFAULT_BANK",
    "BankPolicy",
    "PolicyRegime",
    "bank_action",
    "StreamProvider",
]

__version__ = "0.1.0"
