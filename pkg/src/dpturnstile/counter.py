"""Gaussian binary tree mechanism for continual counting under rho-zCDP.

At step ``t`` the dyadic node at level ``lsb(t)`` closes: it absorbs the
partial sums of all lower levels plus the new update, receives one Gaussian
draw, and is frozen. The release at ``t`` is the sum of the frozen noisy
nodes at the set bits of ``t``. Only the exact running total and one noise
value per level are stored.

Calibration: one event-level change moves a single update by at most 2 and
touches one node per level, so the squared L2 sensitivity is ``4H`` and the
per-node variance is ``4H / (2 rho) = 2H / rho``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hashing import ceil_log2, lsb
from .privacy import NoiseSource

NOISE_OFF = math.inf


class CapacityError(RuntimeError):
    """Raised when a counter receives more than ``T`` updates."""


def tree_height(T: int) -> int:
    """Number of levels ``ceil(log2 T) + 1``."""
    if T < 1:
        raise ValueError(f"capacity must be positive, got {T}")
    return ceil_log2(T) + 1


def node_sigma(T: int, rho: float) -> float:
    if math.isinf(rho):
        return 0.0
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return math.sqrt(2.0 * tree_height(T) / rho)


@dataclass(frozen=True)
class NoiseFloor:
    tau: float
    gamma: float


def noise_floor(T: int, rho: float, B: int = 1, gamma: float = 0.01) -> NoiseFloor:
    """Uniform error bound over ``T`` releases of ``B`` counters.

    Each release is a sum of at most ``H`` independent ``N(0, 2H/rho)``
    draws, so its standard deviation is at most ``H sqrt(2/rho)``; a Gaussian
    tail with a union bound over ``T * B`` releases gives failure ``gamma``.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if T < 1 or B < 1:
        raise ValueError("T and B must be positive")
    if math.isinf(rho):
        return NoiseFloor(0.0, gamma)
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    H = tree_height(T)
    tau = H * math.sqrt(2.0 / rho) * math.sqrt(2.0 * math.log(2.0 * T * B / gamma))
    return NoiseFloor(tau, gamma)


def _check_rho(rho: float):
    if not (rho > 0 or math.isinf(rho)):
        raise ValueError(f"rho must be positive (or inf to disable noise), got {rho}")


class ContinualCounter:
    """Streaming binary tree counter over updates in {-1, 0, +1}.

    A release is the exact prefix total plus the noise of the frozen nodes
    covering ``[1, t]``. When level ``i`` closes, every lower level is in the
    cover of ``t - 1`` and leaves it, so their noise is simply subtracted.
    Noise is kept in units of ``sigma`` and scaled once per release.
    """

    def __init__(self, T: int, rho: float, noise: NoiseSource | None = None, record: bool = False):
        _check_rho(rho)
        self.T = int(T)
        self.H = tree_height(T)
        self.rho = float(rho)
        self.sigma = node_sigma(T, rho)
        if self.sigma > 0 and noise is None:
            raise ValueError("a noise source is required unless noise is off")
        self._noise = noise
        self._total = 0
        self._level_noise = [0.0] * self.H
        self._noise_sum = 0.0
        self.t = 0
        self._estimate = 0.0
        # (level, closing step, exact node sum) for sensitivity instrumentation
        self.node_log = [] if record else None
        self._psum = [0] * self.H if record else None

    def update(self, b: int) -> float:
        if self.t >= self.T:
            raise CapacityError(f"counter capacity {self.T} exhausted")
        if b not in (-1, 0, 1):
            raise ValueError(f"update must be in {{-1, 0, 1}}, got {b}")
        self.t += 1
        i = lsb(self.t)
        self._total += b
        if self.sigma > 0:
            if i:
                self._noise_sum -= sum(self._level_noise[:i])
            self._level_noise[i] = float(self._noise.standard_normal(1)[0])
            self._noise_sum += self._level_noise[i]
        self._estimate = self._noise_sum * self.sigma + self._total
        if self.node_log is not None:
            node = b + sum(self._psum[:i])
            self._psum[:i] = [0] * i
            self._psum[i] = node
            self.node_log.append((i, self.t, node))
        return self._estimate

    @property
    def estimate(self) -> float:
        return self._estimate

    @property
    def exact(self) -> int:
        return self._total

    def state_words(self) -> int:
        # per-level noise, plus total, noise sum, release and step
        return len(self._level_noise) + 4


class CounterBank:
    """``width`` independent tree counters advanced in lockstep.

    Equivalent to ``width`` separate :class:`ContinualCounter` objects fed the
    same timestep, but each step costs a handful of vector operations. Noise
    for all counters closing a node is drawn as one vector.
    """

    def __init__(self, width: int, T: int, rho: float, noise: NoiseSource | None = None, record: bool = False):
        _check_rho(rho)
        if width < 1:
            raise ValueError("width must be positive")
        self.width = int(width)
        self.T = int(T)
        self.H = tree_height(T)
        self.rho = float(rho)
        self.sigma = node_sigma(T, rho)
        if self.sigma > 0 and noise is None:
            raise ValueError("a noise source is required unless noise is off")
        self._noise = noise
        self._total = np.zeros(self.width, dtype=np.int64)
        self._level_noise = np.zeros((self.H, self.width), dtype=np.float64)
        self._noise_sum = np.zeros(self.width, dtype=np.float64)
        self._estimates = np.zeros(self.width, dtype=np.float64)
        self.t = 0
        self.node_log = [] if record else None
        self._psum = np.zeros((self.H, self.width), dtype=np.int64) if record else None

    def update(self, values) -> np.ndarray:
        """Advance every counter by one step; returns the current releases.

        The returned array is the bank's live buffer; copy it to keep it.
        """
        values = np.asarray(values)
        if values.shape != (self.width,):
            raise ValueError(f"expected {self.width} updates, got shape {values.shape}")
        if values.size and (values.max() > 1 or values.min() < -1):
            raise ValueError("updates must be in {-1, 0, 1}")
        return self._advance(values)

    def _advance(self, values) -> np.ndarray:
        if self.t >= self.T:
            raise CapacityError(f"counter capacity {self.T} exhausted")
        self.t += 1
        i = lsb(self.t)
        self._total += values
        if self.sigma > 0:
            if i:
                self._noise_sum -= self._level_noise[:i].sum(axis=0)
            self._noise.standard_normal(out=self._level_noise[i])
            self._noise_sum += self._level_noise[i]
            np.multiply(self._noise_sum, self.sigma, out=self._estimates)
            self._estimates += self._total
        else:
            self._estimates[...] = self._total
        if self.node_log is not None:
            node = self._psum[i]
            np.sum(self._psum[:i], axis=0, out=node)
            node += values
            self._psum[:i] = 0
            self.node_log.append((i, self.t, node.copy()))
        return self._estimates

    def update_sparse(self, index, values) -> np.ndarray:
        """Step with zeros everywhere except ``values`` at ``index``."""
        values = np.asarray(values)
        if values.size and (values.max() > 1 or values.min() < -1):
            raise ValueError("updates must be in {-1, 0, 1}")
        full = np.zeros(self.width, dtype=np.int64)
        full[index] = values
        return self._advance(full)

    @property
    def estimates(self) -> np.ndarray:
        return self._estimates

    @property
    def exact(self) -> np.ndarray:
        """Noise-free prefix sums."""
        return self._total.copy()

    def state_words(self) -> int:
        return self._level_noise.size + self._total.size + self._noise_sum.size + self._estimates.size + 1
