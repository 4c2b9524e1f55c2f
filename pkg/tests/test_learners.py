from __future__ import annotations

import numpy as np
import pytest

from loansim.core import ACTIVITIES, ActivityKind, Observation
from loansim.engine import generate_log
from loansim.interventions import DecisionPoint, InterventionKind, REGISTRY
from loansim.learners.encoding import BASE_DIM, base_vector, encode_prefix
from loansim.learners.kmeans import assign, kmeans_fit
from loansim.learners.qlearning import KMeansQAgent, QTable, q_learn, q_learning_episode
from loansim.learners.ridge import fit_ridge, normal_equation_residual
from loansim.learners.slearner import NotFittedError, SLearner, choose_by_threshold, tune_threshold
from loansim.stochastic import StreamProvider

from .helpers import chain_env, chain_value_iteration

K = InterventionKind


def _obs(**kw) -> Observation:
    base = dict(counts=(0,) * len(ACTIVITIES), est_quality=0.5, unc_quality=0.3, amount=20_000.0,
                cost=0.0, elapsed=0.0, hq_contacted=False, last_activity=None)
    base.update(kw)
    return Observation(**base)


# --- encoding --------------------------------------------------------------


def test_empty_prefix_encoding():
    v = base_vector(_obs())
    assert v.shape == (BASE_DIM,)
    assert (v[: len(ACTIVITIES)] == 0).all() and v[BASE_DIM - 2] == 0.0


def test_call_count_feature():
    counts = [0] * len(ACTIVITIES)
    counts[ACTIVITIES.index(ActivityKind.call_customer)] = 2
    v = base_vector(_obs(counts=tuple(counts)))
    assert v[ACTIVITIES.index(ActivityKind.call_customer)] == 2


def test_action_only_changes_one_hot_block():
    o = _obs(est_quality=0.7)
    a, b = encode_prefix(o, "standard"), encode_prefix(o, "priority")
    assert (a[:BASE_DIM] == b[:BASE_DIM]).all()
    assert list(a[BASE_DIM:]) == [1.0, 0.0] and list(b[BASE_DIM:]) == [0.0, 1.0]


# --- ridge -----------------------------------------------------------------


def test_ridge_identity_examples():
    assert np.allclose(fit_ridge(np.eye(2), [2, 4], 0.0), [2, 4])
    assert np.allclose(fit_ridge(np.eye(2), [2, 4], 1.0), [1, 2])


def test_ridge_rank_deficient():
    X = np.array([[1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(ValueError, match="rank-deficient"):
        fit_ridge(X, [1, 2], 0.0)


def test_ridge_normal_equation_residual():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(500, 30))
    y = X @ rng.normal(size=30) + rng.normal(size=500)
    for lam in (0.0, 1.0, 100.0):
        w = fit_ridge(X, y, lam)
        assert normal_equation_residual(X, y, w, lam) < 1e-8


def test_ridge_matches_lstsq_oracle():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(80, 5))
    y = rng.normal(size=80)
    lam = 2.5
    # augmented least squares is an independent route to the ridge solution
    Xa = np.vstack([X, np.sqrt(lam) * np.eye(5)])
    ya = np.concatenate([y, np.zeros(5)])
    assert np.allclose(fit_ridge(X, y, lam), np.linalg.lstsq(Xa, ya, rcond=None)[0])


# --- k-means ---------------------------------------------------------------


def test_kmeans_single_cluster_is_mean():
    X = np.random.default_rng(2).normal(size=(50, 3))
    res = kmeans_fit(X, 1)
    assert np.allclose(res.centroids[0], X.mean(0))


def test_kmeans_two_separated_points():
    res = kmeans_fit([[0.0, 0.0], [10.0, 10.0]], 2)
    assert sorted(map(tuple, res.centroids)) == [(0.0, 0.0), (10.0, 10.0)]


def test_kmeans_inertia_non_increasing():
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(c, 1.0, size=(200, 4)) for c in (0, 3, 6, 9)])
    for seed in range(5):
        h = kmeans_fit(X, 6, seed=seed).inertia_history
        assert all(b <= a for a, b in zip(h, h[1:]))


def test_kmeans_too_many_clusters():
    with pytest.raises(ValueError):
        kmeans_fit([[1.0], [1.0], [2.0]], 3)


def test_kmeans_assign_nearest():
    res = kmeans_fit([[0.0], [0.1], [5.0], [5.1]], 2)
    assert assign(res.centroids, [[0.05]])[0] == assign(res.centroids, [[0.0]])[0]


# --- S-learner -------------------------------------------------------------


def test_slearner_argmax_and_ties():
    m = SLearner("choose_procedure")
    m.weights = np.zeros(1)
    m.predict_all = lambda obs: np.array([100.0, 80.0])
    point = DecisionPoint(K.choose_procedure, 0, 0, REGISTRY[K.choose_procedure].actions)
    assert m.act(_obs(), point) == "standard"
    m.predict_all = lambda obs: np.array([50.0, 50.0])
    assert m.act(_obs(), point) == "standard"


def test_threshold_rule():
    assert choose_by_threshold(5.0, 10.0) == "wait"
    assert choose_by_threshold(11.0, 10.0) == "contact"


def test_unfitted_model_raises():
    m = SLearner("set_interest_rate")
    with pytest.raises(NotFittedError):
        m.predict_all(_obs())


def test_timed_model_needs_threshold():
    log = generate_log(300, 0.0, ["time_contact_hq"], 1)
    m = SLearner("time_contact_hq").fit(log)
    point = DecisionPoint(K.time_contact_hq, 0, 0, ("contact", "wait"))
    with pytest.raises(NotFittedError):
        m.act(_obs(), point)


def test_fit_and_predict_finite():
    log = generate_log(500, 0.0, ["set_interest_rate"], 2)
    m = SLearner("set_interest_rate").fit(log)
    assert np.isfinite(m.weights).all()
    assert m.predict_all(_obs()).shape == (3,)


def test_tune_threshold_single_and_best():
    log = generate_log(600, 0.0, ["time_contact_hq"], 4)
    m = SLearner("time_contact_hq").fit(log)
    cases = range(50)
    assert tune_threshold(m, cases, [7.0], ["time_contact_hq"], 4) == 7.0
    grid = [-1e9, 0.0, 500.0, 1e9]
    best = tune_threshold(m, cases, grid, ["time_contact_hq"], 4)
    from loansim.learners.slearner import PolicyMap, _validation_total

    totals = {}
    for tau in grid:
        m.threshold = tau
        totals[tau] = _validation_total(PolicyMap({"time_contact_hq": m}), cases, ["time_contact_hq"], 4, None, None)
    assert totals[best] == max(totals.values())
    assert best == min(t for t in grid if totals[t] == totals[best])


def test_tune_threshold_empty_grid():
    m = SLearner("time_contact_hq")
    with pytest.raises(ValueError):
        tune_threshold(m, range(3), [], ["time_contact_hq"], 0)


# --- Q-learning ------------------------------------------------------------


def test_update_changes_one_entry():
    t = QTable(("a", "b"), alpha=0.1)
    t.row("s")[:] = [2.0, 3.0]
    before = {k: v.copy() for k, v in t.values.items()}
    t.update("s", "b", 10.0)
    assert t.values["s"][0] == before["s"][0]
    assert t.values["s"][1] == pytest.approx(3.0 + 0.1 * (10.0 - 3.0))


def test_bandit_toy_converges():
    t = QTable(("x", "y"), alpha=0.1, gamma=0.0)
    rng = np.random.default_rng(0)
    rewards = {"x": 1.0, "y": 0.0}
    state = {}

    def reset():
        state["done"] = False
        return "only", ("x", "y")

    def step(a):
        return None, None, rewards[a]

    for _ in range(2000):
        q_learning_episode(t, reset, step, 0.5, rng)
    assert t.values["only"] == pytest.approx([1.0, 0.0], abs=1e-6)
    assert t.greedy("only") == "x"


def test_chain_toy_matcheschain_value_iteration():
    rng = np.random.default_rng(7)
    reset, step, payout = chain_env(rng)
    t = QTable(("exit", "advance"), alpha=0.1, gamma=1.0)
    n = 10_000
    for e in range(n):
        eps = 0.1 + (0.01 - 0.1) * e / (n - 1)
        q_learning_episode(t, reset, step, eps, rng)
    assert [t.greedy(s) for s in range(3)] == chain_value_iteration(payout) == ["exit", "advance", "advance"]


def test_zero_epsilon_is_deterministic():
    def run():
        rng = np.random.default_rng(3)
        reset, step, _ = chain_env(rng)
        t = QTable(("exit", "advance"))
        for _ in range(100):
            q_learning_episode(t, reset, step, 0.0, rng)
        return {k: v.tolist() for k, v in t.values.items()}

    assert run() == run()


def test_illegal_exploration_is_penalized():
    t = QTable(("a", "b", "c"), alpha=1.0)
    rng = np.random.default_rng(0)
    reset = lambda: ("s", ("a",))  # noqa: E731
    step = lambda a: (None, None, 1.0)  # noqa: E731
    for _ in range(200):
        q_learning_episode(t, reset, step, 1.0, rng, penalty=-10.0)
    assert t.values["s"][0] == 1.0
    assert t.values["s"][1] == -10.0 and t.values["s"][2] == -10.0


def test_kmeans_q_agent_end_to_end():
    log = generate_log(400, 0.0, ["choose_procedure"], 5)
    agent = q_learn(["choose_procedure"], 300, k=5, seed=1, cluster_log=log, env_seed=5)
    assert len(agent.centroids) == 5
    assert all(np.isfinite(v).all() for v in agent.table.values.values())
    with pytest.raises(ValueError):
        q_learn(["choose_procedure"], 0, cluster_log=log)


def test_q_agent_requires_clusters():
    agent = KMeansQAgent(["choose_procedure"])
    from loansim.engine import Session

    s = Session(0, ["choose_procedure"], StreamProvider(1))
    with pytest.raises(RuntimeError):
        agent.act(s.state, s.pending)
