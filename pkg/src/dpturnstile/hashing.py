"""k-wise independent polynomial hashing over the Mersenne field 2^61 - 1.

Scalar evaluation uses Python integers. The vectorized path splits operands
into 32-bit halves so every partial product fits in ``uint64``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .privacy import make_rng

P = (1 << 61) - 1
_P64 = np.uint64(P)
_MASK32 = np.uint64(0xFFFFFFFF)
_MASK29 = np.uint64((1 << 29) - 1)
_S3 = np.uint64(3)
_S29 = np.uint64(29)
_S32 = np.uint64(32)
_S61 = np.uint64(61)


def _fold(x):
    x = (x & _P64) + (x >> _S61)
    return np.where(x >= _P64, x - _P64, x)


def _mul_lazy(a, b_hi, b_lo):
    """a * b reduced to below 2^61 + 8, for a < 2^62 + 8 and b < P split in halves.

    Partial products: hh < 2^59, mid < 2^63, so the weighted sum stays
    below 2^64 and a single fold suffices.
    """
    a_hi, a_lo = a >> _S32, a & _MASK32
    hh = a_hi * b_hi  # weight 2^64 == 8 (mod P)
    mid = a_hi * b_lo + a_lo * b_hi  # weight 2^32
    ll = a_lo * b_lo
    r = (
        (hh << _S3)
        + (mid >> _S29)
        + ((mid & _MASK29) << _S32)
        + (ll >> _S61)
        + (ll & _P64)
    )
    return (r & _P64) + (r >> _S61)


def _mul_small(a, b):
    """a * b reduced to below 2^61 + 2^34, for a < 2^62 + 2^34 and b < 2^32.

    hi = (a >> 32) * b < 2^63 carries weight 2^32; lo = (a & mask) * b < 2^64.
    """
    hi = (a >> _S32) * b
    lo = (a & _MASK32) * b
    r = (hi >> _S29) + ((hi & _MASK29) << _S32) + (lo & _P64) + (lo >> _S61)
    return (r & _P64) + (r >> _S61)


def mulmod(a, b):
    """(a * b) mod P for uint64 arrays with entries below P."""
    b = np.asarray(b, dtype=np.uint64)
    return _fold(_mul_lazy(np.asarray(a, dtype=np.uint64), b >> _S32, b & _MASK32))


def horner(coeffs, keys):
    """Evaluate polynomials mod P.

    ``coeffs`` has shape ``(..., k)`` with the constant term first; ``keys``
    broadcasts against ``coeffs[..., 0]``. Intermediate values are kept only
    partially reduced; the result is in ``[0, P)``.
    """
    coeffs = np.asarray(coeffs, dtype=np.uint64)
    x = np.asarray(keys, dtype=np.uint64) % _P64
    shape = np.broadcast_shapes(coeffs[..., -1].shape, x.shape)
    acc = np.broadcast_to(coeffs[..., -1], shape).copy()
    if x.size and int(x.max()) <= 0xFFFFFFFF:
        step = lambda a: _mul_small(a, x)  # noqa: E731
    else:
        x_hi, x_lo = x >> _S32, x & _MASK32
        step = lambda a: _mul_lazy(a, x_hi, x_lo)  # noqa: E731
    for c in range(coeffs.shape[-1] - 2, -1, -1):
        acc = step(acc)
        acc += coeffs[..., c]
    return _fold(_fold(acc))


def _draw_coefficients(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, P, size=shape, dtype=np.uint64)


@dataclass(frozen=True)
class PolyHash:
    """A single k-wise independent hash ``[0, 2^60) -> [0, m)``."""

    coefficients: tuple
    output_range: int

    def __post_init__(self):
        if len(self.coefficients) < 1:
            raise ValueError("need at least one coefficient")
        if not (1 <= self.output_range <= P):
            raise ValueError(f"output range must lie in [1, P], got {self.output_range}")

    @classmethod
    def random(cls, k: int, m: int, seed: int, *path) -> "PolyHash":
        rng = make_rng(seed, "polyhash", *path)
        coeffs = _draw_coefficients(rng, k)
        return cls(tuple(int(c) for c in coeffs), m)

    @property
    def degree(self) -> int:
        """Independence parameter k (number of coefficients)."""
        return len(self.coefficients)

    def __call__(self, key: int) -> int:
        acc = 0
        for c in reversed(self.coefficients):
            acc = (acc * key + c) % P
        return acc % self.output_range

    def evaluate(self, keys) -> np.ndarray:
        coeffs = np.array(self.coefficients, dtype=np.uint64)
        return horner(coeffs, keys) % np.uint64(self.output_range)


@dataclass(frozen=True)
class SignHash:
    """Rademacher hash realized as a range-2 polynomial hash."""

    poly: PolyHash

    def __post_init__(self):
        if self.poly.output_range != 2:
            raise ValueError("sign hash needs output range 2")

    @classmethod
    def random(cls, k: int, seed: int, *path) -> "SignHash":
        return cls(PolyHash.random(k, 2, seed, "sign", *path))

    def __call__(self, key: int) -> int:
        return 2 * self.poly(key) - 1

    def evaluate(self, keys) -> np.ndarray:
        return 2 * self.poly.evaluate(keys).astype(np.int64) - 1


class HashBank:
    """``rows`` independent k-wise polynomial hashes evaluated together.

    ``ranges`` may be a scalar or one range per row. ``at(key)`` returns the
    vector of all row outputs for one key.
    """

    def __init__(self, rows: int, k: int, ranges, seed: int, *path):
        if rows < 1 or k < 1:
            raise ValueError("rows and k must be positive")
        self.rows = rows
        self.k = k
        self.ranges = np.broadcast_to(np.asarray(ranges, dtype=np.uint64), (rows,)).copy()
        if np.any(self.ranges < 1):
            raise ValueError("ranges must be positive")
        rng = make_rng(seed, "hashbank", *path)
        self.coefficients = _draw_coefficients(rng, (rows, k))

    def row(self, i: int) -> PolyHash:
        return PolyHash(tuple(int(c) for c in self.coefficients[i]), int(self.ranges[i]))

    def at(self, key: int) -> np.ndarray:
        return horner(self.coefficients, np.uint64(key)) % self.ranges

    def table(self, keys) -> np.ndarray:
        """Outputs for many keys, shape ``(rows, len(keys))``."""
        keys = np.asarray(keys, dtype=np.uint64)
        raw = horner(self.coefficients[:, None, :], keys[None, :])
        return raw % self.ranges[:, None]

    def words(self) -> int:
        return self.rows * self.k


def default_k(T: int) -> int:
    """``ceil(log2 T) + 1``, the independence used by the log T-wise hashes."""
    return ceil_log2(T) + 1


def ceil_log2(x: int) -> int:
    if x < 1:
        raise ValueError("x must be positive")
    return (int(x) - 1).bit_length()


def lsb(a: int) -> int:
    """Zero-indexed position of the lowest set bit of a positive integer."""
    a = int(a)
    if a <= 0:
        raise ValueError(f"lsb undefined for {a}")
    return (a & -a).bit_length() - 1


def lsb_array(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.uint64)
    if np.any(a == 0):
        raise ValueError("lsb undefined for 0")
    low = a & (~a + np.uint64(1))
    # powers of two below 2^62 are exact in float64
    return np.frexp(low.astype(np.float64))[1].astype(np.int64) - 1


def lsb_bucket(values, n: int) -> np.ndarray:
    """lsb of hash outputs in ``[0, n)`` with the zero output read as ``n``."""
    v = np.asarray(values, dtype=np.uint64)
    v = np.where(v == 0, np.uint64(n), v)
    return lsb_array(v)


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def universe_exponent(n: int) -> int:
    """K such that ``2^K`` is the smallest power of two at least ``n``."""
    return ceil_log2(n)
