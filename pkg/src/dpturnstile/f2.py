"""Continual F2 estimation through a Rademacher random projection.

Row ``i`` of the projection is a k-wise independent sign hash scaled by
``1/sqrt(m)``; counter ``i`` tracks ``sqrt(m) (A x_t)_i`` so every update it
sees is in {-1, 0, +1}. The release is ``(1/m) sum_i C[i]^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .counter import CounterBank, noise_floor
from .hashing import HashBank, ceil_log2, default_k
from .privacy import NoiseSource, PrivacyBudget, compose
from .stream import Stream

C1 = 12.0
SIGN_CACHE = 2048


@dataclass(frozen=True)
class F2Config:
    rho: float
    T: int
    alpha: float
    C1: float = C1
    k: int | None = None  # hash independence, default ceil(log2 T) + 1
    gamma: float | None = None  # default 1/T
    rows: int | None = None  # override m

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not (self.rho > 0):
            raise ValueError(f"rho must be positive, got {self.rho}")

    @property
    def alpha0(self) -> float:
        return self.alpha / 5.0

    @property
    def m(self) -> int:
        if self.rows is not None:
            return self.rows
        return math.ceil(self.C1 * max(1, ceil_log2(self.T)) / self.alpha0**2)

    @property
    def independence(self) -> int:
        return self.k if self.k is not None else default_k(self.T)

    @property
    def counter_rho(self) -> float:
        return self.rho / self.m

    def counter_tau(self) -> float:
        """Uniform error bound of every counter (projected units times sqrt(m))."""
        gamma = self.gamma if self.gamma is not None else 1.0 / max(self.T, 2)
        return noise_floor(self.T, self.counter_rho, B=self.m, gamma=gamma).tau

    @property
    def lam(self) -> float:
        """Per-coordinate error bound on the projected vector ``A x_t``."""
        return self.counter_tau() / math.sqrt(self.m)


def f2_error_bound(rho: float, T: int, alpha: float, **kwargs) -> float:
    """Additive term ``10 lam^2 m / alpha`` of the accuracy guarantee."""
    cfg = F2Config(rho, T, alpha, **kwargs)
    return 10.0 * cfg.lam**2 * cfg.m / alpha


class F2Estimator:
    def __init__(self, config: F2Config, seed: int = 0):
        self.config = config
        self.m = config.m
        self.signs = HashBank(self.m, config.independence, 2, seed, "f2", "rows")
        self.counters = CounterBank(self.m, config.T, config.counter_rho, NoiseSource(seed, "f2", "noise"))
        self._column = lru_cache(maxsize=SIGN_CACHE)(self._column_uncached)
        self.value = 0.0

    def _column_uncached(self, element: int) -> np.ndarray:
        col = 2 * self.signs.at(element).astype(np.int8) - 1
        col.flags.writeable = False
        return col

    def column(self, element: int) -> np.ndarray:
        """``sqrt(m) A[:, element]`` as a vector of signs."""
        return self._column(int(element))

    def step(self, element: int, sign: int) -> float:
        if sign not in (-1, 0, 1):
            raise ValueError(f"sign must be in {{-1, 0, 1}}, got {sign}")
        if sign == 0:
            est = self.counters._advance(np.zeros(self.m, dtype=np.int8))
        else:
            col = self.column(element)
            est = self.counters._advance(col if sign == 1 else -col)
        self.value = max(0.0, float(np.dot(est, est)) / self.m)
        return self.value

    def run(self, stream: Stream) -> np.ndarray:
        return np.array([self.step(a, s) for a, s in stream])

    def projected_exact(self) -> np.ndarray:
        """Noise-free counter values ``sqrt(m) A x_t``."""
        return self.counters.exact

    def budgets(self) -> list[PrivacyBudget]:
        return [PrivacyBudget(self.config.counter_rho)] * self.m

    def composed_budget(self) -> PrivacyBudget:
        return compose(self.budgets())

    def state_words(self) -> int:
        return self.counters.state_words() + self.signs.words() + 1
