from __future__ import annotations

import numpy as np

from loansim.engine import Session
from loansim.stochastic import StreamProvider


def find_case(pred, seed: int = 42, start: int = 0, limit: int = 5000, active=("time_contact_hq",)):
    """First case_nr whose fresh session satisfies ``pred(session)``."""
    for c in range(start, start + limit):
        s = Session(c, active, StreamProvider(seed))
        if pred(s):
            return c
    raise LookupError("no matching case")


def drive(session: Session, *actions: str) -> Session:
    for a in actions:
        session.step(a)
    return session


def chain_env(rng):
    """Three-state chain: "exit" pays a state payout and ends, "advance" costs 1."""
    payout = (3.5, 2.0, 0.0)
    cur = {}

    def reset():
        cur["s"] = int(rng.integers(3))
        return cur["s"], ("exit", "advance")

    def step(a):
        s = cur["s"]
        if a == "exit":
            return None, None, payout[s]
        if s == 2:
            return None, None, 5.0
        cur["s"] = s + 1
        return s + 1, ("exit", "advance"), -1.0

    return reset, step, payout


def chain_value_iteration(payout):
    V = np.zeros(3)
    for _ in range(50):
        V = np.array([max(payout[s], (5.0 if s == 2 else -1.0 + V[s + 1])) for s in range(3)])
    return ["exit" if payout[s] >= (5.0 if s == 2 else -1.0 + V[s + 1]) else "advance" for s in range(3)]
