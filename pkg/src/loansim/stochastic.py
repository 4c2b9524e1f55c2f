"""Counter-based random streams keyed by case and purpose.

Every draw is a pure function of ``(global_seed, case_nr, purpose, occurrence)``.
Nothing is consumed sequentially, so two simulations of the same case that
diverge at some decision still see identical noise for every draw they share.
This is what makes counterfactual branches directly comparable.

Each sampler below consumes a fixed number of uniforms from its key (one,
via inverse-CDF transforms), so occurrence indices never drift between
branches.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from statistics import NormalDist
from typing import Sequence

from scipy.special import betaincinv

PURPOSES = (
    "case-init",
    "loop-count",
    "call-redraw",
    "duration",
    "client-decision",
    "regime",
    "policy-noise",
)
_PURPOSE_IDS = {name: i for i, name in enumerate(PURPOSES)}

_MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)
_STD_NORMAL = NormalDist()
_pack = struct.Struct("<QqBqH").pack


@dataclass(frozen=True, order=True)
class StreamKey:
    case_nr: int
    purpose: str
    occurrence: int = 0

    def __post_init__(self) -> None:
        if self.purpose not in _PURPOSE_IDS:
            raise ValueError(f"unknown stream purpose {self.purpose!r}")


@dataclass(frozen=True)
class StreamProvider:
    """Stateless uniform source; ``draw`` never depends on call order."""

    global_seed: int

    def uniform(self, case_nr: int, purpose: str, occurrence: int = 0, sub: int = 0) -> float:
        """Uniform in the open interval (0, 1)."""
        try:
            pid = _PURPOSE_IDS[purpose]
        except KeyError:
            raise ValueError(f"unknown stream purpose {purpose!r}") from None
        digest = hashlib.blake2b(
            _pack(self.global_seed & _MASK64, case_nr, pid, occurrence, sub), digest_size=8
        ).digest()
        # top 53 bits, shifted half a step so 0 is never returned
        return ((int.from_bytes(digest, "little") >> 11) + 0.5) * _INV_2_53

    def draw(self, key: StreamKey) -> float:
        return self.uniform(key.case_nr, key.purpose, key.occurrence)

    def child(self, index: int) -> "StreamProvider":
        """Derive an independent provider, e.g. one per experiment repetition."""
        digest = hashlib.blake2b(
            _pack(self.global_seed & _MASK64, index, 255, 0, 0), digest_size=8
        ).digest()
        return StreamProvider(int.from_bytes(digest, "little"))


def draw_uniform(provider: StreamProvider, key: StreamKey) -> float:
    return provider.draw(key)


# --- samplers: each maps exactly one uniform to a variate -------------------


def normal(u: float, mu: float = 0.0, sigma: float = 1.0) -> float:
    if sigma < 0 or not math.isfinite(sigma):
        raise ValueError(f"invalid normal sigma {sigma}")
    if sigma == 0:
        return mu
    return mu + sigma * _STD_NORMAL.inv_cdf(u)


def lognormal(u: float, log_mu: float, log_sigma: float) -> float:
    return math.exp(normal(u, log_mu, log_sigma))


def beta(u: float, a: float, b: float) -> float:
    if a <= 0 or b <= 0:
        raise ValueError(f"invalid beta parameters ({a}, {b})")
    return float(betaincinv(a, b, u))


def bernoulli(u: float, p: float) -> bool:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"invalid bernoulli p {p}")
    return u < p


def categorical(u: float, probs: Sequence[float]) -> int:
    """Index drawn by inverse CDF over ``probs``."""
    if not probs or any(p < 0 for p in probs):
        raise ValueError("invalid categorical probabilities")
    total = math.fsum(probs)
    if not math.isclose(total, 1.0, rel_tol=1e-9, abs_tol=1e-12):
        raise ValueError(f"categorical probabilities sum to {total}, not 1")
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


def uniform_range(u: float, low: float, high: float) -> float:
    if high < low:
        raise ValueError(f"invalid range [{low}, {high}]")
    return low + (high - low) * u


class Samplers:
    """Distribution draws bound to one stream key (one uniform per draw)."""

    __slots__ = ("_u",)

    def __init__(self, provider: StreamProvider, key: StreamKey):
        self._u = provider.draw(key)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        return normal(self._u, mu, sigma)

    def lognormal(self, log_mu: float, log_sigma: float) -> float:
        return lognormal(self._u, log_mu, log_sigma)

    def beta(self, a: float, b: float) -> float:
        return beta(self._u, a, b)

    def bernoulli(self, p: float) -> bool:
        return bernoulli(self._u, p)

    def categorical(self, probs: Sequence[float]) -> int:
        return categorical(self._u, probs)

    def uniform_range(self, low: float, high: float) -> float:
        return uniform_range(self._u, low, high)


def derive_samplers(provider: StreamProvider, key: StreamKey) -> Samplers:
    return Samplers(provider, key)
