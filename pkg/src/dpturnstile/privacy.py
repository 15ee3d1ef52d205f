"""zCDP budget arithmetic, (eps, delta) translation and seeded Gaussian noise."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import numpy as np


@dataclass(frozen=True)
class PrivacyBudget:
    """A rho-zCDP budget. ``rho = inf`` is the noise-free sentinel."""

    rho: float

    def __post_init__(self):
        if not (self.rho >= 0):
            raise ValueError(f"rho must be non-negative, got {self.rho}")

    def __add__(self, other: "PrivacyBudget") -> "PrivacyBudget":
        return PrivacyBudget(self.rho + other.rho)

    def split(self, parts: int) -> list["PrivacyBudget"]:
        if parts < 1:
            raise ValueError("parts must be >= 1")
        return [PrivacyBudget(self.rho / parts)] * parts

    @property
    def noiseless(self) -> bool:
        return math.isinf(self.rho)


@dataclass(frozen=True)
class ApproxDP:
    epsilon: float
    delta: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError(f"epsilon must be non-negative, got {self.epsilon}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")


def compose(budgets: Iterable[PrivacyBudget]) -> PrivacyBudget:
    """Sequential composition: zCDP parameters add."""
    return PrivacyBudget(math.fsum(b.rho for b in budgets))


def zcdp_to_approx(rho: Union[PrivacyBudget, float], delta: float) -> ApproxDP:
    """Translate rho-zCDP to (rho + 2 sqrt(rho ln(1/delta)), delta)-DP."""
    r = rho.rho if isinstance(rho, PrivacyBudget) else float(rho)
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if r < 0:
        raise ValueError("rho must be non-negative")
    return ApproxDP(r + 2.0 * math.sqrt(r * math.log(1.0 / delta)), delta)


def approx_to_zcdp(target: ApproxDP) -> PrivacyBudget:
    """Largest rho whose translation at ``target.delta`` is ``target.epsilon``.

    Solves ``rho + 2 sqrt(rho L) = eps`` with ``L = ln(1/delta)``, which gives
    ``sqrt(rho) = sqrt(L + eps) - sqrt(L)``. The root is evaluated in the
    cancellation-free form ``eps / (sqrt(L + eps) + sqrt(L))``.
    """
    eps = target.epsilon
    if eps == 0:
        return PrivacyBudget(0.0)
    L = math.log(1.0 / target.delta)
    root = eps / (math.sqrt(L + eps) + math.sqrt(L))
    return PrivacyBudget(root * root)


def resolve_budget(
    rho: Optional[float] = None,
    epsilon: Optional[float] = None,
    delta: Optional[float] = None,
) -> PrivacyBudget:
    """Accept exactly one of ``rho`` or ``(epsilon, delta)``."""
    if rho is not None and (epsilon is not None or delta is not None):
        raise ValueError("specify either rho or (epsilon, delta), not both")
    if rho is not None:
        if rho <= 0:
            raise ValueError("rho must be positive")
        return PrivacyBudget(float(rho))
    if epsilon is None or delta is None:
        raise ValueError("specify either rho or both epsilon and delta")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return approx_to_zcdp(ApproxDP(float(epsilon), float(delta)))


def _component_key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def seed_sequence(seed: int, *path) -> np.random.SeedSequence:
    """Derive an independent seed sequence for ``(seed, component path)``."""
    return np.random.SeedSequence(
        entropy=int(seed) & (2**64 - 1),
        spawn_key=tuple(_component_key(p) for p in path),
    )


def make_rng(seed: int, *path) -> np.random.Generator:
    # Philox is counter based, so every component gets its own cheap stream.
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *path)))


class NoiseSource:
    """Seeded Gaussian sampler; one per component, single owner."""

    def __init__(self, seed: int, *path):
        self.seed = int(seed)
        self.path = tuple(path)
        self._rng = make_rng(self.seed, *self.path)

    def spawn(self, *component) -> "NoiseSource":
        return NoiseSource(self.seed, *self.path, *component)

    def gaussian(self, sigma: float, size=None, out=None):
        """Draw from N(0, sigma^2) as ``sigma * standard_normal``.

        With ``out`` (a float64 array) the samples are written in place.
        """
        if not (sigma > 0):
            raise ValueError(f"sigma must be positive, got {sigma}")
        if out is not None:
            self._rng.standard_normal(out=out)
            out *= sigma
            return out
        return sigma * self._rng.standard_normal(size)

    def standard_normal(self, size=None, out=None):
        """Unit-variance draws; callers that scale later save a pass."""
        if out is not None:
            return self._rng.standard_normal(out=out)
        return self._rng.standard_normal(size)
