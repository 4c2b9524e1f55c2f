"""Gain metric and the repeated train/test experiment runner."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from scipy import stats

from .core import DEFAULT_SPEC, CaseState, ProcessSpec
from .engine import TEST_CASE_OFFSET, VALIDATION_CASE_OFFSET, Session, generate_log, oracle_policy
from .interventions import DecisionPoint, as_sequence
from .learners.qlearning import KMeansQAgent
from .learners.slearner import PolicyMap, SLearner, tune_threshold, uplift_grid
from .policies import DEFAULT_BANK, BankPolicy, bank_action, random_action
from .stochastic import StreamProvider

logger = logging.getLogger(__name__)

POLICIES = ("random", "bank", "oracle", "s-learner", "kmeans-q", "external")


def gain(policy_profits: Sequence[float], bank_profits: Sequence[float]) -> float:
    if len(policy_profits) != len(bank_profits):
        raise ValueError("profit lists cover different case sets")
    base = math.fsum(bank_profits)
    if base == 0:
        raise ValueError("degenerate baseline")
    return (math.fsum(policy_profits) - base) / abs(base)


@dataclass
class GainReport:
    policy: str
    active: str
    delta: float
    gains: list[float]
    n_test: int
    n_reps: int = field(init=False)

    def __post_init__(self) -> None:
        self.n_reps = len(self.gains)
        if self.n_reps < 1:
            raise ValueError("a report needs at least one repetition")

    @property
    def mean(self) -> float:
        return math.fsum(self.gains) / self.n_reps

    @property
    def std(self) -> float:
        if self.n_reps < 2:
            return 0.0
        m = self.mean
        return math.sqrt(math.fsum((g - m) ** 2 for g in self.gains) / (self.n_reps - 1))

    @property
    def se(self) -> float:
        return self.std / math.sqrt(self.n_reps)

    def ci(self, level: float = 0.95) -> tuple[float, float]:
        if self.n_reps < 2:
            return self.mean, self.mean
        h = float(stats.t.ppf(0.5 + level / 2, self.n_reps - 1)) * self.se
        return self.mean - h, self.mean + h

    def row(self) -> str:
        return f"{self.policy:10s} {self.active:45s} {self.delta:6.3f} {self.mean:+.3f} {self.std:.3f}"


# --- agents ----------------------------------------------------------------


class BankAgent:
    def __init__(self, bank: BankPolicy = DEFAULT_BANK):
        self.bank = bank

    def act(self, state: CaseState, point: DecisionPoint) -> str:
        return bank_action(state, point, self.bank)


class RandomAgent:
    """Uniform over allowed actions, keyed on the case so runs are reproducible."""

    def __init__(self, streams: StreamProvider, salt: int = 0):
        self.streams = streams
        self.salt = salt

    def act(self, state: CaseState, point: DecisionPoint) -> str:
        return random_action(state, point, self.streams, self.salt)


def rollout(agent, case_nrs: Sequence[int], active, streams, spec=None, bank=None) -> list[float]:
    profits = []
    for c in case_nrs:
        s = Session(c, active, streams, spec, bank)
        while not s.done:
            s.step(agent.act(s.state, s.pending))
        profits.append(s.result.profit)
    return profits


def test_cases(n: int) -> range:
    return range(TEST_CASE_OFFSET, TEST_CASE_OFFSET + n)


@dataclass
class ExperimentConfig:
    n_train: int = 100_000
    n_val: int = 1_000
    n_test: int = 10_000
    n_reps: int = 5
    lam: float = 1.0
    grid_size: int = 21
    k: int = 20
    alpha: float = 0.01  # floor of the 1/n step size
    epsilon: float = 0.1
    epsilon_min: float = 0.01
    gamma: float = 1.0
    alpha_mode: str = "visits"
    q_episodes: Optional[int] = None  # defaults to n_train
    workers: int = 1


def train_s_learner(active, log, val_streams, cfg: ExperimentConfig, spec, bank) -> PolicyMap:
    models = {kind: SLearner(kind, cfg.lam).fit(log) for kind in active}
    val = range(VALIDATION_CASE_OFFSET, VALIDATION_CASE_OFFSET + cfg.n_val)
    for kind, model in models.items():
        if model.timed:
            others = {k: m for k, m in models.items() if k is not kind and not m.timed}
            grid = uplift_grid(model, val, active, val_streams, spec, bank, cfg.grid_size)
            tune_threshold(model, val, grid, active, val_streams, spec, bank, others)
    return PolicyMap(models)


def train_kmeans_q(active, log, train_streams, cfg: ExperimentConfig, spec, bank, seed: int) -> KMeansQAgent:
    agent = KMeansQAgent(
        active, k=cfg.k, alpha=cfg.alpha, epsilon=cfg.epsilon, epsilon_min=cfg.epsilon_min,
        gamma=cfg.gamma, alpha_mode=cfg.alpha_mode, seed=seed,
    )
    agent.fit_clusters(log)
    episodes = cfg.q_episodes or cfg.n_train
    # online episodes run on fresh cases after the offline log's range
    agent.train(range(cfg.n_train, cfg.n_train + episodes), train_streams, spec, bank)
    return agent


class _Cache:
    """Bank and oracle test profits depend only on (seed, active, n_test, Θ)."""

    def __init__(self):
        self._store: dict = {}

    def get(self, key, fn):
        if key not in self._store:
            self._store[key] = fn()
        return self._store[key]


_CACHE = _Cache()


def run_experiment(
    policy: str,
    active,
    delta_train: float = 0.0,
    seed: int = 0,
    config: Optional[ExperimentConfig] = None,
    spec: ProcessSpec = DEFAULT_SPEC,
    bank: BankPolicy = DEFAULT_BANK,
    agent_factory: Optional[Callable] = None,
    **overrides,
) -> GainReport:
    """Train ``policy`` per repetition and score it on the shared test set.

    ``agent_factory(rep, log)`` supplies the agent for ``policy='external'``;
    it must return an object with ``act(state, point) -> action``.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    cfg = config or ExperimentConfig()
    if overrides:
        cfg = ExperimentConfig(**{**cfg.__dict__, **overrides})
    if cfg.n_reps < 1:
        raise ValueError("n_reps must be at least 1")
    active = as_sequence(active)
    streams = StreamProvider(seed)
    cases = test_cases(cfg.n_test)
    key = (seed, active, cfg.n_test, spec, bank)
    bank_profits = _CACHE.get(("bank",) + key, lambda: rollout(BankAgent(bank), cases, active, streams, spec, bank))

    gains = []
    if policy == "oracle":
        oracle = _CACHE.get(
            ("oracle",) + key, lambda: [oracle_policy(c, active, streams, spec, bank)[1] for c in cases]
        )
        gains = [gain(oracle, bank_profits)] * cfg.n_reps
    for rep in range(cfg.n_reps if policy != "oracle" else 0):
        rep_streams = streams.child(rep)
        if policy == "bank":
            agent = BankAgent(bank)
        elif policy == "random":
            agent = RandomAgent(streams, salt=rep + 1)
        else:
            log = None
            if policy in ("s-learner", "kmeans-q") or agent_factory is not None:
                log = generate_log(cfg.n_train, delta_train, active, rep_streams.global_seed, 0, spec, bank, cfg.workers)
            if policy == "s-learner":
                agent = train_s_learner(active, log, rep_streams, cfg, spec, bank)
            elif policy == "kmeans-q":
                agent = train_kmeans_q(active, log, rep_streams, cfg, spec, bank, seed=rep_streams.global_seed)
            else:
                if agent_factory is None:
                    raise ValueError("external policy needs an agent_factory")
                agent = agent_factory(rep, log)
        profits = rollout(agent, cases, active, streams, spec, bank)
        gains.append(gain(profits, bank_profits))
        logger.info("%s %s rep %d gain %+.4f", policy, active, rep, gains[-1])
    return GainReport(policy, str(active), delta_train, gains, cfg.n_test)


def delta_sweep(policy: str, active, deltas: Sequence[float], seed: int = 0, **kwargs) -> list[GainReport]:
    for d in deltas:
        if not 0.0 <= d <= 1.0:
            raise ValueError(f"delta {d} outside [0, 1]")
    return [run_experiment(policy, active, d, seed, **kwargs) for d in deltas]


BENCHMARK_ACTIVE = (
    ("choose_procedure",),
    ("set_interest_rate",),
    ("time_contact_hq",),
    ("choose_procedure", "set_interest_rate"),
)


def benchmark(
    seed: int = 0,
    deltas: Sequence[float] = (0.0,),
    policies: Sequence[str] = ("random", "bank", "s-learner", "kmeans-q", "oracle"),
    actives=BENCHMARK_ACTIVE,
    **kwargs,
) -> list[GainReport]:
    out = []
    for active in actives:
        for delta in deltas:
            for p in policies:
                out.append(run_experiment(p, active, delta, seed, **kwargs))
    return out


def format_table(reports: Sequence[GainReport]) -> str:
    lines = [f"{'policy':10s} {'interventions':45s} {'delta':>6s} {'gain':>6s} {'stdev':>5s}"]
    lines += [r.row() for r in reports]
    return "\n".join(lines)
