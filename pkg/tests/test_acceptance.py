"""Acceptance criteria, each run at its stated scale and tolerance.

Every test records a PASS/FAIL line that is printed in the run summary.
Criterion 6 is marked xfail: it is evaluated in full and reported as FAIL
when the degradation does not appear (see notes/decisions.md).
"""

from __future__ import annotations

import math
import random
import time
from collections import Counter, defaultdict

import numpy as np
import pytest
from scipy import stats

from loansim.cli import main
from loansim.core import ActivityKind
from loansim.engine import TEST_CASE_OFFSET, Session, enumerate_branches, generate_log
from loansim.evaluation import run_experiment
from loansim.interfaces.protocol import Client, ServerThread
from loansim.learners.kmeans import kmeans_fit
from loansim.learners.qlearning import QTable, q_learning_episode
from loansim.learners.ridge import fit_ridge, normal_equation_residual
from loansim.policies import bank_action
from loansim.stochastic import StreamProvider

from .acceptance_log import verdict
from .helpers import chain_env, chain_value_iteration

pytestmark = pytest.mark.acceptance

SINGLE = ("choose_procedure", "set_interest_rate", "time_contact_hq")
ALL = list(SINGLE)
SEED = 2024
SCALE = dict(n_train=20_000, n_test=10_000, n_reps=5)
_reports: dict = {}


def report(policy, active, delta=0.0):
    key = (policy, tuple(active), delta)
    if key not in _reports:
        _reports[key] = run_experiment(policy, active, delta, SEED, **SCALE)
    return _reports[key]


def test_criterion_1_determinism(tmp_path):
    outs, times = [], []
    for name in ("a.csv", "b.csv"):
        t = time.perf_counter()
        assert main(["generate", "--cases", "1000", "--seed", "42", "--out", str(tmp_path / name)]) == 0
        times.append(time.perf_counter() - t)
        outs.append((tmp_path / name).read_bytes())
    ok = outs[0] == outs[1] and max(times) < 10.0
    verdict(1, ok, f"identical={outs[0] == outs[1]} runtime={max(times):.2f}s (<10s)")
    assert ok


def test_criterion_2_counterfactual_alignment():
    mismatches = 0
    for kind in SINGLE:
        for i in range(100):
            c = TEST_CASE_OFFSET + i
            s = Session(c, [kind], StreamProvider(SEED))
            n = len(s.state.events)
            prefixes = {repr(r.state.events[:n]) for _, r in enumerate_branches(c, [kind], SEED)}
            mismatches += len(prefixes) != 1
    verdict(2, mismatches == 0, f"{mismatches} of 300 case/intervention pairs with diverging prefixes")
    assert mismatches == 0


def test_criterion_3_delta_boundaries():
    log = generate_log(100_000, 0.0, ALL, SEED)
    counts: dict = defaultdict(Counter)
    for case in log.cases:
        assert case.regime_tag == "rct"
        for d in case.decisions:
            counts[(d.point.kind.value, d.point.index)][d.action] += 1
    pvals = {}
    for key, ctr in counts.items():
        allowed = sorted(ctr)
        if sum(ctr.values()) >= 5 * len(allowed):
            pvals[key] = stats.chisquare([ctr[a] for a in allowed]).pvalue
    uniform_ok = bool(pvals) and min(pvals.values()) > 0.01

    n_bank, n_match = 0, 0
    bank_log = generate_log(20_000, 1.0, ALL, SEED)
    for case in bank_log.cases:
        s = Session(case.case_nr, ALL, StreamProvider(SEED))
        for d in case.decisions:
            assert s.pending is not None
            n_bank += 1
            n_match += d.action == bank_action(s.state, s.pending)
            s.step(d.action)
        assert s.done
    ok = uniform_ok and n_bank == n_match
    verdict(3, ok, f"min chi-square p={min(pvals.values()):.3f} over {len(pvals)} points; "
                   f"bank match {n_match}/{n_bank}")
    assert ok


def test_criterion_4_structural_realism():
    log = generate_log(40_000, 1.0, ALL, SEED)
    standard = [c for c in log.cases if any(e.activity is ActivityKind.call_customer for e in c.events)][:10_000]
    assert len(standard) == 10_000
    loops, inter = Counter(), Counter()
    for case in standard:
        calls = [e for e in case.events if e.activity is ActivityKind.call_customer]
        loops[len(calls)] += 1
        for h in (e for e in case.events if e.activity is ActivityKind.contact_hq):
            inter["before"] += any(h.start < x.start for x in calls)
            inter["after"] += any(h.start >= x.end for x in calls)
            inter["overlap"] += any(min(h.end, x.end) - max(h.start, x.start) > 0 for x in calls)
    n = len(standard)
    loop_f = {k: loops[k] / n for k in (1, 2, 3)}
    inter_f = {k: inter[k] / n for k in ("before", "after", "overlap")}
    ok = min(loop_f.values()) > 0.05 and min(inter_f.values()) > 0.01
    verdict(4, ok, "loops " + " ".join(f"{k}:{v:.3f}" for k, v in loop_f.items())
            + "; hq " + " ".join(f"{k}:{v:.3f}" for k, v in inter_f.items()))
    assert ok


def test_criterion_5_ordering():
    t = time.perf_counter()
    failures, parts = [], []
    for kind in SINGLE:
        g = {p: report(p, [kind]).mean for p in ("random", "bank", "s-learner", "kmeans-q", "oracle")}
        ok = (
            g["random"] < 0 == g["bank"]
            and all(g["bank"] < g[p] <= g["oracle"] for p in ("s-learner", "kmeans-q"))
            and g["oracle"] > 0.05
        )
        if not ok:
            failures.append(kind)
        parts.append(kind + " " + " ".join(f"{p}={v:+.3f}" for p, v in g.items()))
    elapsed = time.perf_counter() - t
    ok = not failures and elapsed < 1800
    verdict(5, ok, "; ".join(parts) + f"; {elapsed:.0f}s")
    assert ok, failures


@pytest.mark.xfail(reason="confounded S-learner does not degrade on time_contact_hq; see ledger", strict=False)
def test_criterion_6_confounding_degradation():
    r0 = report("s-learner", ["time_contact_hq"], 0.0)
    r1 = report("s-learner", ["time_contact_hq"], 0.999)
    pooled = math.sqrt(r0.se**2 + r1.se**2)
    diff = r0.mean - r1.mean
    ok = diff > 2 * pooled
    verdict(6, ok, f"gain d=0 {r0.mean:+.4f} vs d=0.999 {r1.mean:+.4f}; diff {diff:+.4f}, 2 pooled SE {2 * pooled:.4f}")
    assert ok


def test_criterion_7_sequence():
    pair = report("s-learner", ["choose_procedure", "set_interest_rate"])
    singles = [report("s-learner", [k]) for k in ("choose_procedure", "set_interest_rate")]
    best = max(singles, key=lambda r: r.mean)
    ok = pair.mean >= best.mean - best.se
    verdict(7, ok, f"pair {pair.mean:+.4f} vs best single {best.mean:+.4f} - SE {best.se:.4f}")
    assert ok


def test_criterion_8_learner_internals():
    rng = np.random.default_rng(SEED)
    X = rng.normal(size=(2000, 40))
    y = X @ rng.normal(size=40) + rng.normal(size=2000)
    resid = max(normal_equation_residual(X, y, fit_ridge(X, y, lam), lam) for lam in (0.0, 1.0, 100.0))

    Z = np.vstack([rng.normal(c, 1.0, size=(500, 5)) for c in range(5)])
    monotone = all(
        all(b <= a for a, b in zip(h, h[1:]))
        for h in (kmeans_fit(Z, 20, seed=s).inertia_history for s in range(5))
    )

    qrng = np.random.default_rng(SEED)
    reset, step, payout = chain_env(qrng)
    table = QTable(("exit", "advance"), alpha=0.1, gamma=1.0)
    n = 10_000
    for e in range(n):
        q_learning_episode(table, reset, step, 0.1 + (0.01 - 0.1) * e / (n - 1), qrng)
    greedy = [table.greedy(s) for s in range(3)]
    q_ok = greedy == chain_value_iteration(payout)

    ok = resid < 1e-8 and monotone and q_ok
    verdict(8, ok, f"ridge residual {resid:.1e}; k-means monotone={monotone}; Q greedy {greedy} match={q_ok}")
    assert ok


def test_criterion_9_protocol_equivalence():
    rng = random.Random(SEED)
    mismatches = 0
    with ServerThread(seed=SEED) as server, Client(port=server.port) as client:
        client.hello(ALL)
        for i in range(1000):
            c = TEST_CASE_OFFSET + i
            trace = []

            def choose(msg):
                a = rng.choice(msg["allowed"])
                trace.append(a)
                return a

            wire = client.run_case(c, choose)["profit"]
            s = Session(c, ALL, StreamProvider(SEED))
            for a in trace:
                s.step(a)
            mismatches += not (s.done and s.result.profit == wire)
    verdict(9, mismatches == 0, f"{mismatches} of 1000 cases differ")
    assert mismatches == 0


def test_criterion_10_bank_self_gain():
    reports = [report("bank", [k]) for k in SINGLE]
    ok = all(r.gains == [0.0] * r.n_reps and r.std == 0.0 for r in reports)
    verdict(10, ok, " ".join(f"{r.active}: gain {r.mean} std {r.std}" for r in reports))
    assert ok
