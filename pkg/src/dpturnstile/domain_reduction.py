"""Distinct elements on general turnstile streams by signed domain reduction.

For every level ``i`` and replica ``j`` the universe is hashed into ``2^i``
buckets with random signs; one private counter per bucket tracks the signed
bucket sum. A level is reported when the coordinate-wise median (over
replicas) of the absolute noisy sums has a coordinate of at least ``C' tau``.

Also here: Monte-Carlo validators for the three domain-reduction lemmas and
the combinator that turns a base estimator with sublinear additive error into
a ``(1 + eta)``-multiplicative one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Protocol

import numpy as np

from .counter import CounterBank, noise_floor
from .hashing import HashBank, ceil_log2, default_k, horner
from .metrics import ErrorProfile
from .minhash import lower_median
from .privacy import NoiseSource, PrivacyBudget, compose, make_rng
from .stream import Stream

REPLICA_FACTOR = 2
C_PRIME = 3.0
MAX_LEVEL = 20
HASH_CACHE = 1 << 16


class HypothesisViolation(ValueError):
    """Parameters fall outside a lemma's or theorem's stated hypothesis."""


@dataclass(frozen=True)
class DomainReductionConfig:
    rho: float
    T: int
    replicas: int | None = None  # default REPLICA_FACTOR * ceil(log2 T)
    c_prime: float = C_PRIME
    max_level: int = MAX_LEVEL
    gamma: float | None = None  # default 1/T
    tau: float | None = None
    k: int | None = None  # hash independence, default ceil(log2 T) + 1

    @property
    def L(self) -> int:
        return max(1, min(ceil_log2(self.T), self.max_level))

    @property
    def J(self) -> int:
        if self.replicas is not None:
            return self.replicas
        return max(1, REPLICA_FACTOR * ceil_log2(self.T))

    @property
    def structure_rho(self) -> float:
        return self.rho / (self.L * self.J)

    @property
    def counter_rho(self) -> float:
        # one neighboring change reaches at most two counters of a structure
        return self.structure_rho / 2

    @property
    def num_counters(self) -> int:
        return self.J * ((1 << (self.L + 1)) - 2)

    @property
    def threshold(self) -> float:
        if self.tau is not None:
            return self.tau
        gamma = self.gamma if self.gamma is not None else 1.0 / max(self.T, 2)
        return noise_floor(self.T, self.counter_rho, B=self.num_counters, gamma=gamma).tau


class DomainReductionEstimator:
    def __init__(self, config: DomainReductionConfig, seed: int = 0):
        if not (config.rho > 0):
            raise ValueError(f"rho must be positive, got {config.rho}")
        self.config = config
        self.L, self.J = config.L, config.J
        self.tau = config.threshold
        k = config.k if config.k is not None else default_k(config.T)
        levels = np.repeat(np.arange(1, self.L + 1), self.J)  # structure order: level-major
        self.sizes = np.left_shift(1, levels)
        self.h = HashBank(len(levels), k, self.sizes, seed, "dr", "h")
        self.g = HashBank(len(levels), k, 2, seed, "dr", "g")
        # counters of level i, replica j occupy offset[i, j] + [0, 2^i)
        starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.offsets = starts
        self.level_start = [int(starts[(i - 1) * self.J]) for i in range(1, self.L + 1)]
        self.counters = CounterBank(config.num_counters, config.T, config.counter_rho,
                                    NoiseSource(seed, "dr", "noise"))
        self._route = lru_cache(maxsize=HASH_CACHE)(self._route_uncached)
        self.level = 0
        self.t = 0

    def _route_uncached(self, element: int):
        idx = self.offsets + self.h.at(element).astype(np.int64)
        sgn = 2 * self.g.at(element).astype(np.int64) - 1
        return idx, sgn

    def route(self, element: int):
        """Counter index and sign for ``element`` in every structure."""
        return self._route(int(element))

    def level_medians(self, values=None) -> list[np.ndarray]:
        """Coordinate-wise lower median over replicas of |counter|, per level."""
        v = np.abs(self.counters.estimates if values is None else values)
        out = []
        for i in range(1, self.L + 1):
            size = 1 << i
            block = v[self.level_start[i - 1] : self.level_start[i - 1] + self.J * size]
            block = block.reshape(self.J, size)
            out.append(np.partition(block, (self.J - 1) // 2, axis=0)[(self.J - 1) // 2])
        return out

    def select_level(self, medians, c_prime: float | None = None) -> int:
        """Largest level whose max median coordinate reaches ``C' tau`` (0 if none)."""
        bar = (self.config.c_prime if c_prime is None else c_prime) * self.tau
        best = 0
        for i, med in enumerate(medians, start=1):
            top = float(med.max())
            if top >= bar and top > 0:
                best = i
        return best

    def _fast_level(self) -> int:
        """Same answer as ``select_level(level_medians())`` without sorting.

        The lower median of a column reaches the bar iff at least
        ``J - (J - 1) // 2`` of its entries do.
        """
        bar = self.config.c_prime * self.tau
        v = np.abs(self.counters.estimates)
        hit = v >= bar if bar > 0 else v > 0
        need = self.J - (self.J - 1) // 2
        for i in range(self.L, 0, -1):
            size = 1 << i
            start = self.level_start[i - 1]
            block = hit[start : start + self.J * size].reshape(self.J, size)
            if block.sum(axis=0).max() >= need:
                return i
        return 0

    def step(self, element: int, sign: int) -> int:
        if sign not in (-1, 0, 1):
            raise ValueError(f"sign must be in {{-1, 0, 1}}, got {sign}")
        idx, sgn = self.route(element)
        self.counters.update_sparse(idx, sgn * sign)
        self.t += 1
        self.level = self._fast_level()
        return 1 << self.level

    def run(self, stream: Stream) -> np.ndarray:
        return np.array([self.step(a, s) for a, s in stream], dtype=np.int64)

    def reduced_exact(self, x: np.ndarray) -> np.ndarray:
        """From-scratch signed bucket sums of frequency vector ``x`` (element a at x[a-1])."""
        out = np.zeros(self.counters.width, dtype=np.int64)
        for a in np.flatnonzero(x) + 1:
            idx, sgn = self.route(int(a))
            out[idx] += sgn * x[a - 1]
        return out

    def counter_updates(self, stream: Stream) -> np.ndarray:
        """Per-counter update sequences, shape ``(num_counters, len(stream))``."""
        seq = np.zeros((self.counters.width, len(stream)), dtype=np.int64)
        for t, (a, s) in enumerate(stream):
            idx, sgn = self.route(a)
            seq[idx, t] = sgn * s
        return seq

    def structure_of(self, counter: np.ndarray) -> np.ndarray:
        """(level, replica) structure id of each counter index."""
        return np.searchsorted(self.offsets, counter, side="right") - 1

    def budgets(self) -> list[PrivacyBudget]:
        return [PrivacyBudget(self.config.structure_rho)] * (self.L * self.J)

    def composed_budget(self) -> PrivacyBudget:
        return compose(self.budgets())

    def state_words(self) -> int:
        return self.counters.state_words() + self.h.words() + self.g.words()


def dr_error_profile(rho: float, T: int, c: float = 1.0) -> ErrorProfile:
    """``(c log^5 T / rho, c log^5 T / rho, 0, c log^10 T / rho^2)`` from the level-selection proof."""
    lg = math.log2(max(T, 2))
    mult = max(1.0, c * lg**5 / rho)
    return ErrorProfile(mult, mult, 0.0, c * lg**10 / rho**2)


# Lemma validators ---------------------------------------------------------


def _support(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64)
    return np.flatnonzero(x), x


def _random_maps(rng, keys: np.ndarray, m: int, k: int, signed: bool):
    """One draw of a k-wise ``h: keys -> [m]`` (and signs ``g``)."""
    hc = rng.integers(0, (1 << 61) - 1, size=k, dtype=np.uint64)
    h = (horner(hc, keys) % np.uint64(m)).astype(np.int64)
    if not signed:
        return h, None
    gc = rng.integers(0, (1 << 61) - 1, size=k, dtype=np.uint64)
    g = 2 * (horner(gc, keys) % np.uint64(2)).astype(np.int64) - 1
    return h, g


def _report(hypothesis: str, trials: int, empirical: float, bound: float, **extra) -> dict:
    return {"hypothesis": hypothesis, "trials": trials, "empirical": empirical, "bound": bound, **extra}


def lemma1_validate(x, m: int, ell: float, trials: int, seed: int = 0, n: int | None = None,
                    coordinate: int = 0, k: int = 8) -> dict:
    """Fraction of draws where bucket ``coordinate`` has |signed sum| >= sqrt(ell)/1000."""
    supp, x = _support(x)
    n = n or len(x)
    nnz = len(supp)
    if not (1 <= m <= nnz / ell) or ell < 100 * math.log2(max(n, 2)):
        raise HypothesisViolation(
            f"need 1 <= m <= ||x||_0 / ell and ell >= 100 log n (m={m}, ||x||_0={nnz}, ell={ell}, n={n})")
    rng = make_rng(seed, "lemma1")
    keys = (supp + 1).astype(np.uint64)
    vals = x[supp]
    bar = math.sqrt(ell) / 1000
    hits = 0
    for _ in range(trials):
        h, g = _random_maps(rng, keys, m, k, signed=True)
        hits += abs(int(np.sum(g[h == coordinate] * vals[h == coordinate]))) >= bar
    return _report("m <= ||x||_0/ell, ell >= 100 log n", trials, hits / trials, 0.97,
                   threshold=bar, m=m, ell=ell, nnz=nnz)


def lemma2_validate(x, m: int, trials: int, seed: int = 0, n: int | None = None, ell: float | None = None,
                    coordinate: int = 0, k: int = 8) -> dict:
    """Fraction of draws where bucket ``coordinate`` is nonzero."""
    supp, x = _support(x)
    n = n or len(x)
    nnz = len(supp)
    ell = ell if ell is not None else 100 * math.log2(max(n, 2))
    if ell < 100 * math.log2(max(n, 2)) or m < ell * nnz:
        raise HypothesisViolation(f"need m >= ell ||x||_0 with ell >= 100 log n (m={m}, ||x||_0={nnz}, ell={ell})")
    rng = make_rng(seed, "lemma2")
    keys = (supp + 1).astype(np.uint64)
    vals = x[supp]
    hits = 0
    for _ in range(trials):
        if nnz == 0:
            continue
        h, g = _random_maps(rng, keys, m, k, signed=True)
        hits += int(np.sum(g[h == coordinate] * vals[h == coordinate])) != 0
    return _report("m >= ell ||x||_0, ell >= 100 log n", trials, hits / trials, 0.01,
                   expected=min(1.0, nnz / m), m=m, ell=ell, nnz=nnz)


def lemma3_validate(x, m: int, ell: float, ell_prime: float, trials: int, seed: int = 0, k: int = 8) -> dict:
    """Fraction of draws with ``||x||_0 >= ||f_h(x)||_0 >= (1 - 1/ell) ||x||_0``."""
    supp, x = _support(x)
    nnz = len(supp)
    if ell < 1 or ell_prime < 1 or m < nnz * ell * ell_prime:
        raise HypothesisViolation(f"need m >= ||x||_0 ell ell' (m={m}, ||x||_0={nnz}, ell={ell}, ell'={ell_prime})")
    rng = make_rng(seed, "lemma3")
    keys = (supp + 1).astype(np.uint64)
    vals = x[supp]
    hits = upper_ok = 0
    for _ in range(trials):
        h, _ = _random_maps(rng, keys, m, k, signed=False)
        buckets, inverse = np.unique(h, return_inverse=True)
        sums = np.bincount(inverse, weights=vals, minlength=len(buckets))
        reduced = int(np.count_nonzero(sums))
        upper_ok += reduced <= nnz
        hits += nnz >= reduced >= (1 - 1 / ell) * nnz
    return _report("m >= ||x||_0 ell ell'", trials, hits / trials, 1 - 1 / ell_prime,
                   upper_fraction=upper_ok / trials, m=m, ell=ell, ell_prime=ell_prime, nnz=nnz)


# Reduction combinator -----------------------------------------------------


class BaseBank(Protocol):
    """``copies`` instances of a continual distinct-elements estimator on a reduced domain."""

    advertised_additive: float

    def update(self, buckets: np.ndarray, sign: int) -> None: ...

    def estimates(self) -> np.ndarray: ...


BaseFactory = Callable[[int, int, float, int], BaseBank]  # (domain, copies, rho_each, seed)


class BaseCalibrationError(RuntimeError):
    pass


class MockBaseBank:
    """Exact reduced distinct count plus bounded noise of magnitude ``domain^exponent``.

    Satisfies the base hypothesis non-privately; it is a test double.
    """

    def __init__(self, domain: int, copies: int, rho_each: float, seed: int, exponent: float = 0.5):
        self.domain, self.copies = domain, copies
        self.advertised_additive = float(domain) ** exponent
        self._freq: list[dict] = [dict() for _ in range(copies)]
        self._count = np.zeros(copies, dtype=np.int64)
        self._rng = make_rng(seed, "mockbase", domain)

    def update(self, buckets, sign):
        if sign == 0:
            return
        for c, b in enumerate(buckets.tolist()):
            f = self._freq[c]
            old = f.get(b, 0)
            new = old + sign
            if new:
                f[b] = new
            else:
                f.pop(b, None)
            self._count[c] += (new != 0) - (old != 0)

    def exact(self) -> np.ndarray:
        return self._count.copy()

    def estimates(self):
        noise = self._rng.uniform(-self.advertised_additive, self.advertised_additive, self.copies)
        return self._count + noise


def calibrate(factory: BaseFactory, domain: int = 64, T: int = 512, seed: int = 0) -> float:
    """Run one base copy on a random general-turnstile stream; raise if it breaks its advertised error."""
    base = factory(domain, 1, 1.0, seed)
    rng = make_rng(seed, "calibrate")
    freq = np.zeros(domain, dtype=np.int64)
    worst = 0.0
    for _ in range(T):
        b = int(rng.integers(domain))
        s = int(rng.choice([-1, 1]))
        freq[b] += s
        base.update(np.array([b]), s)
        err = abs(float(base.estimates()[0]) - np.count_nonzero(freq))
        worst = max(worst, err)
        if err > base.advertised_additive + 1e-9:
            raise BaseCalibrationError(
                f"base error {err:.3g} exceeds advertised {base.advertised_additive:.3g}")
    return worst


@dataclass
class ReductionCombinator:
    """Multiplicative ``1 + eta`` estimates from a base with sublinear additive error.

    ``side`` is a coarse estimator (``step(element, sign) -> power of two``)
    with multiplicative slack ``side_slack``. At each step the level
    ``m' >= c_select * side * side_slack / eta`` is chosen and the median of
    the base copies on that level is released.
    """

    base_factory: BaseFactory
    side: object
    rho: float
    T: int
    n: int
    eta: float
    side_slack: float
    seed: int = 0
    replicas: int | None = None
    c_select: float = 4.0
    max_level: int = MAX_LEVEL
    side_share: float = 0.5
    k: int | None = None
    calibrate_base: bool = True
    levels: list = field(init=False)

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise ValueError("eta must lie in (0, 1)")
        if self.calibrate_base:
            calibrate(self.base_factory, seed=self.seed)
        self.J = self.replicas or max(1, REPLICA_FACTOR * ceil_log2(self.T))
        # the side estimate never exceeds the universe rounded up to a power of two
        widest = self.c_select * (1 << ceil_log2(self.n)) * self.side_slack / self.eta
        self.top = max(1, min(self.max_level, ceil_log2(math.ceil(widest))))
        k = self.k or default_k(self.T)
        n_levels = self.top + 1
        self.base_rho = self.rho * (1 - self.side_share) / (n_levels * self.J)
        self.maps = [HashBank(self.J, k, 1 << i, self.seed, "combinator", i) for i in range(n_levels)]
        self.levels = [self.base_factory(1 << i, self.J, self.base_rho, self.seed + 7919 * i)
                       for i in range(n_levels)]
        self.t = 0
        self.level = 0

    def select_level(self, side_estimate: float) -> int:
        target = self.c_select * side_estimate * self.side_slack / self.eta
        return min(self.top, max(0, math.ceil(math.log2(max(target, 1.0)))))

    def step(self, element: int, sign: int) -> float:
        side = self.side.step(element, sign)
        for maps, base in zip(self.maps, self.levels):
            base.update(maps.at(element).astype(np.int64), sign)
        self.t += 1
        self.level = self.select_level(side)
        return float(lower_median(self.levels[self.level].estimates()))

    def budgets(self) -> list[PrivacyBudget]:
        side = PrivacyBudget(self.rho * self.side_share)
        return [side] + [PrivacyBudget(self.base_rho)] * (len(self.levels) * self.J)

    def composed_budget(self) -> PrivacyBudget:
        return compose(self.budgets())
