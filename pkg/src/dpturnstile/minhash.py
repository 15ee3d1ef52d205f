"""Continual distinct elements on strict turnstile streams via lsb bucketing.

Each replica hashes the universe ``[n] -> [n]`` with a pairwise independent
hash, keeps one private counter per lsb bucket ``0..K``, and reports
``2^l`` for the largest bucket whose noisy count exceeds ``tau``. The
estimator reports the lower median over ``m`` replicas.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .counter import CounterBank, NoiseFloor, noise_floor
from .hashing import HashBank, ceil_log2, lsb_bucket
from .metrics import ErrorProfile
from .privacy import NoiseSource, PrivacyBudget, compose
from .stream import Stream

REPLICA_FACTOR = 8
HASH_CACHE = 1 << 16


def lower_median(values) -> float:
    v = np.sort(np.asarray(values), axis=0)
    return v[(len(v) - 1) // 2]


@dataclass(frozen=True)
class MinHashConfig:
    rho: float
    T: int
    n: int
    replicas: int | None = None  # default REPLICA_FACTOR * ceil(log2 T)
    gamma: float | None = None  # default 1/T
    tau: float | None = None  # override the noise floor (tests, ablations)

    @property
    def K(self) -> int:
        return ceil_log2(self.n)

    @property
    def m(self) -> int:
        if self.replicas is not None:
            return self.replicas
        return max(1, REPLICA_FACTOR * ceil_log2(self.T))

    @property
    def replica_rho(self) -> float:
        return self.rho / self.m

    @property
    def counter_rho(self) -> float:
        # a neighboring change reaches at most two counters of a replica
        return self.replica_rho / 2

    def noise_floor(self) -> NoiseFloor:
        gamma = self.gamma if self.gamma is not None else 1.0 / max(self.T, 2)
        return noise_floor(self.T, self.counter_rho, B=self.K + 1, gamma=gamma)

    @property
    def threshold(self) -> float:
        return self.tau if self.tau is not None else self.noise_floor().tau


class MinHashEstimator:
    """Median of ``m`` MinHash subroutines; ``step`` returns the release."""

    def __init__(self, config: MinHashConfig, seed: int = 0):
        if config.T < 1 or config.n < 1:
            raise ValueError("T and n must be positive")
        if not (config.rho > 0):
            raise ValueError(f"rho must be positive, got {config.rho}")
        if not math.isinf(config.rho) and config.rho > math.log2(max(config.T, 2)) ** 4:
            warnings.warn("rho exceeds log^4 T; the accuracy guarantee assumes a smaller rho", stacklevel=2)
        self.config = config
        self.seed = seed
        self.m, self.K = config.m, config.K
        self.universe = 1 << self.K
        self.tau = config.threshold
        self.hashes = HashBank(self.m, 2, self.universe, seed, "minhash", "h")
        self.counters = CounterBank(self.m * (self.K + 1), config.T, config.counter_rho,
                                    NoiseSource(seed, "minhash", "noise"))
        self._rows = np.arange(self.m)
        self._buckets = lru_cache(maxsize=HASH_CACHE)(self._bucket_uncached)
        self.outputs = np.ones(self.m, dtype=np.int64)
        self.t = 0

    def _bucket_uncached(self, element: int) -> np.ndarray:
        return lsb_bucket(self.hashes.at(element), self.universe)

    def buckets(self, element: int) -> np.ndarray:
        """lsb bucket of ``element`` in each replica."""
        return self._buckets(int(element))

    def bucket_estimates(self) -> np.ndarray:
        """Noisy bucket counts, shape ``(m, K + 1)``."""
        return self.counters.estimates.reshape(self.m, self.K + 1)

    def bucket_exact(self) -> np.ndarray:
        return self.counters.exact.reshape(self.m, self.K + 1)

    def step(self, element: int, sign: int) -> int:
        if sign not in (-1, 0, 1):
            raise ValueError(f"sign must be in {{-1, 0, 1}}, got {sign}")
        k = self.buckets(element)
        self.counters.update_sparse(self._rows * (self.K + 1) + k, sign)
        self.t += 1
        above = self.bucket_estimates() > self.tau
        # largest index above the threshold, 0 if none
        last = self.K - np.argmax(above[:, ::-1], axis=1)
        ell = np.where(above.any(axis=1), last, 0)
        self.outputs = np.left_shift(1, ell)
        return int(lower_median(self.outputs))

    def run(self, stream: Stream) -> np.ndarray:
        return np.array([self.step(a, s) for a, s in stream], dtype=np.int64)

    def counter_updates(self, stream: Stream) -> np.ndarray:
        """Update sequence of every counter, shape ``(m, K + 1, len(stream))``.

        Depends only on the hashes, never on noise.
        """
        seq = np.zeros((self.m, self.K + 1, len(stream)), dtype=np.int64)
        for t, (a, s) in enumerate(stream):
            seq[self._rows, self.buckets(a), t] = s
        return seq

    def budgets(self) -> list[PrivacyBudget]:
        """Charged budget per counter pair: two counters per replica."""
        per_counter = PrivacyBudget(self.config.counter_rho)
        return [per_counter] * (2 * self.m)

    def composed_budget(self) -> PrivacyBudget:
        return compose(self.budgets())

    def state_words(self) -> int:
        return self.counters.state_words() + self.hashes.words() + self.m + 2


class MinHashSubroutine(MinHashEstimator):
    """A single replica at budget ``rho``; its output is the replica estimate."""

    def __init__(self, rho: float, T: int, n: int, seed: int = 0, tau: float | None = None,
                 gamma: float | None = None):
        super().__init__(MinHashConfig(rho, T, n, replicas=1, gamma=gamma, tau=tau), seed)


def minhash_error_bound(rho: float, T: int, n: int, replicas: int | None = None,
                        gamma: float | None = None) -> tuple[float, float]:
    """Concrete (alpha, beta) = (24 tau, 1) from ``D/(6 tau) <= Dhat <= 4 D + 1``."""
    tau = MinHashConfig(rho, T, n, replicas=replicas, gamma=gamma).threshold
    return 24.0 * tau, 1.0


def lemma_profile(tau: float) -> ErrorProfile:
    """Profile (6 tau, 4, 0, 1); ``p`` is floored at 1 for tiny thresholds."""
    return ErrorProfile(max(1.0, 6.0 * tau), 4.0, 0.0, 1.0)
