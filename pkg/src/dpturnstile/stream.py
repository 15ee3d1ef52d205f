"""Turnstile streams, the exact ground-truth oracle, generators and file I/O."""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple

import numpy as np

from .privacy import make_rng

MAX_T = 2**31
DENSE_LIMIT = 10**7


class Model(enum.Enum):
    INSERTION_ONLY = "insertion"
    STRICT_TURNSTILE = "strict"
    GENERAL_TURNSTILE = "general"


class GeneratorKind(enum.Enum):
    UNIFORM_INSERT_DELETE = "uniform"
    SINGLETON_HEAVY = "singleton-heavy"
    PHASED_GROW_SHRINK = "phased"
    F2_LOWER_BOUND = "f2-lowerbound"


class StreamFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class StrictTurnstileViolation(ValueError):
    def __init__(self, t: int, element: int):
        self.t = t
        self.element = element
        super().__init__(f"frequency of element {element} went negative at timestep {t}")


class StreamUpdate(NamedTuple):
    element: int
    sign: int


@dataclass(frozen=True)
class StreamMeta:
    n: int
    T: int
    model: Model = Model.GENERAL_TURNSTILE

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"universe size must be >= 1, got {self.n}")
        if not (1 <= self.T <= MAX_T):
            raise ValueError(f"stream length must lie in [1, 2^31], got {self.T}")


@dataclass
class Stream:
    """A finite update sequence stored column-wise."""

    elements: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.signs = np.asarray(self.signs, dtype=np.int64)
        if self.elements.shape != self.signs.shape or self.elements.ndim != 1:
            raise ValueError("elements and signs must be 1-d arrays of equal length")

    @classmethod
    def from_updates(cls, updates) -> "Stream":
        updates = list(updates)
        return cls([u[0] for u in updates], [u[1] for u in updates])

    def __len__(self) -> int:
        return len(self.elements)

    def __iter__(self) -> Iterator[StreamUpdate]:
        for a, s in zip(self.elements.tolist(), self.signs.tolist()):
            yield StreamUpdate(a, s)

    def __getitem__(self, t) -> StreamUpdate:
        return StreamUpdate(int(self.elements[t]), int(self.signs[t]))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Stream)
            and np.array_equal(self.elements, other.elements)
            and np.array_equal(self.signs, other.signs)
        )

    def replace(self, t: int, update: StreamUpdate) -> "Stream":
        """Copy with the zero-indexed update ``t`` swapped (an event-level neighbor)."""
        e, s = self.elements.copy(), self.signs.copy()
        e[t], s[t] = update
        return Stream(e, s)


class ExactOracle:
    """Exact frequency vector with O(1) maintenance of D_t and F2_t."""

    def __init__(self, n: int, model: Model = Model.GENERAL_TURNSTILE):
        self.n = int(n)
        self.model = model
        self._dense = self.n <= DENSE_LIMIT
        self._x = np.zeros(self.n + 1, dtype=np.int64) if self._dense else {}
        self.t = 0
        self.distinct = 0
        self.f2 = 0
        self.total = 0

    def frequency(self, element: int) -> int:
        if self._dense:
            return int(self._x[element])
        return self._x.get(element, 0)

    def update(self, u: StreamUpdate) -> "ExactOracle":
        a, s = int(u[0]), int(u[1])
        if not (1 <= a <= self.n):
            raise ValueError(f"element {a} outside universe [1, {self.n}] at timestep {self.t + 1}")
        if s not in (-1, 0, 1):
            raise ValueError(f"sign {s} not in {{-1, 0, 1}} at timestep {self.t + 1}")
        self.t += 1
        old = self.frequency(a)
        new = old + s
        if self.model is not Model.GENERAL_TURNSTILE and new < 0:
            raise StrictTurnstileViolation(self.t, a)
        if self.model is Model.INSERTION_ONLY and s != 1:
            raise ValueError(f"insertion-only stream has sign {s} at timestep {self.t}")
        if self._dense:
            self._x[a] = new
        elif new:
            self._x[a] = new
        else:
            self._x.pop(a, None)
        self.distinct += (new != 0) - (old != 0)
        self.f2 += 2 * old * s + s * s
        self.total += s
        return self

    def vector(self) -> np.ndarray:
        """Frequencies of elements 1..n (index 0 is element 1)."""
        if self._dense:
            return self._x[1:].copy()
        x = np.zeros(self.n, dtype=np.int64)
        for a, v in self._x.items():
            x[a - 1] = v
        return x


def oracle_update(oracle: ExactOracle, u: StreamUpdate) -> ExactOracle:
    return oracle.update(u)


def replay(stream: Stream, meta: StreamMeta):
    """Exact (distinct, F2, prefix total) series for every prefix."""
    oracle = ExactOracle(meta.n, meta.model)
    T = len(stream)
    distinct = np.empty(T, dtype=np.int64)
    f2 = np.empty(T, dtype=np.int64)
    total = np.empty(T, dtype=np.int64)
    for t, u in enumerate(stream):
        oracle.update(u)
        distinct[t], f2[t], total[t] = oracle.distinct, oracle.f2, oracle.total
    return distinct, f2, total


class _PresentSet:
    """Set with O(1) insert, delete and uniform sampling."""

    def __init__(self):
        self.items: list[int] = []
        self.pos: dict[int, int] = {}

    def __len__(self):
        return len(self.items)

    def __contains__(self, a):
        return a in self.pos

    def add(self, a: int):
        if a not in self.pos:
            self.pos[a] = len(self.items)
            self.items.append(a)

    def discard(self, a: int):
        i = self.pos.pop(a, None)
        if i is None:
            return
        last = self.items.pop()
        if i < len(self.items):
            self.items[i] = last
            self.pos[last] = i

    def sample(self, rng) -> int:
        return self.items[int(rng.integers(len(self.items)))]


def _fresh_element(rng, n: int, present, avoid: int = 0) -> int:
    # rejection sampling; callers keep the present set below n
    while True:
        a = int(rng.integers(1, n + 1))
        if a != avoid and a not in present:
            return a


def _uniform_insert_delete(meta: StreamMeta, rng, p_insert: float):
    n, T = meta.n, meta.T
    if meta.model is Model.INSERTION_ONLY:
        return rng.integers(1, n + 1, size=T), np.ones(T, dtype=np.int64)
    if meta.model is Model.GENERAL_TURNSTILE:
        signs = np.where(rng.random(T) < p_insert, 1, -1)
        return rng.integers(1, n + 1, size=T), signs
    freq: dict[int, int] = {}
    present = _PresentSet()
    elements = np.empty(T, dtype=np.int64)
    signs = np.empty(T, dtype=np.int64)
    for t in range(T):
        if len(present) == 0 or rng.random() < p_insert:
            a, s = int(rng.integers(1, n + 1)), 1
        else:
            a, s = present.sample(rng), -1
        f = freq.get(a, 0) + s
        freq[a] = f
        if f > 0:
            present.add(a)
        else:
            present.discard(a)
        elements[t], signs[t] = a, s
    return elements, signs


def _singleton_heavy(meta: StreamMeta, rng, heavy_fraction: float):
    """Element 1 receives most insertions; the rest are fresh singletons.

    Under turnstile models some singletons are deleted again later.
    """
    n, T = meta.n, meta.T
    if n < 2:
        raise ValueError("singleton-heavy generator needs n >= 2")
    present = _PresentSet()
    elements = np.empty(T, dtype=np.int64)
    signs = np.empty(T, dtype=np.int64)
    deletes = meta.model is not Model.INSERTION_ONLY
    for t in range(T):
        r = rng.random()
        if r < heavy_fraction:
            a, s = 1, 1
        elif deletes and len(present) and r < heavy_fraction + (1 - heavy_fraction) / 4:
            a, s = present.sample(rng), -1
            present.discard(a)
        elif len(present) < n - 1:
            a, s = _fresh_element(rng, n, present, avoid=1), 1
            present.add(a)
        else:
            a, s = 1, 1
        elements[t], signs[t] = a, s
    return elements, signs


def _phased_grow_shrink(meta: StreamMeta, rng, peak: int):
    """Insert ``peak`` fresh elements once each, delete them all, repeat."""
    n, T = meta.n, meta.T
    if meta.model is Model.INSERTION_ONLY:
        raise ValueError("phased grow/shrink streams need deletions; insertion-only model given")
    if not (1 <= peak <= n):
        raise ValueError(f"peak must lie in [1, n], got {peak}")
    elements = np.empty(T, dtype=np.int64)
    signs = np.empty(T, dtype=np.int64)
    t = 0
    while t < T:
        batch = rng.choice(n, size=peak, replace=False) + 1
        grow = min(peak, T - t)
        elements[t : t + grow], signs[t : t + grow] = batch[:grow], 1
        t += grow
        shrink = min(grow, T - t)
        elements[t : t + shrink], signs[t : t + shrink] = rng.permutation(batch[:grow])[:shrink], -1
        t += shrink
    return elements, signs


def f2_lowerbound_pair(T: int) -> tuple[Stream, Stream]:
    """T copies of (1, +1), and the neighbor whose last update is (2, +1)."""
    if T < 1:
        raise ValueError("T must be positive")
    s = Stream(np.ones(T, dtype=np.int64), np.ones(T, dtype=np.int64))
    return s, s.replace(T - 1, StreamUpdate(2, 1))


def gen_stream(
    kind: GeneratorKind | str,
    meta: StreamMeta,
    seed: int,
    *,
    p_insert: float = 0.6,
    heavy_fraction: float = 0.5,
    peak: int | None = None,
) -> Stream:
    """Deterministic stream of ``meta.T`` updates over ``[1, meta.n]``."""
    kind = GeneratorKind(kind)
    rng = make_rng(seed, "stream", kind.value)
    if kind is GeneratorKind.UNIFORM_INSERT_DELETE:
        elements, signs = _uniform_insert_delete(meta, rng, p_insert)
    elif kind is GeneratorKind.SINGLETON_HEAVY:
        elements, signs = _singleton_heavy(meta, rng, heavy_fraction)
    elif kind is GeneratorKind.PHASED_GROW_SHRINK:
        elements, signs = _phased_grow_shrink(meta, rng, peak or max(1, min(meta.n, meta.T) // 2))
    else:
        if meta.n < 2:
            raise ValueError("the F2 lower-bound instance needs n >= 2")
        return f2_lowerbound_pair(meta.T)[0]
    return Stream(elements, signs)


_MODEL_NAMES = {m.value: m for m in Model}


def _parse_header(line: str) -> StreamMeta:
    if not line.startswith("#"):
        raise StreamFormatError("missing '# n=<int> T=<int> model=<...>' header", 1)
    fields = {}
    for tok in line[1:].split():
        key, sep, value = tok.partition("=")
        if not sep:
            raise StreamFormatError(f"bad header token {tok!r}", 1)
        fields[key] = value
    try:
        n, T = int(fields["n"]), int(fields["T"])
        model = _MODEL_NAMES[fields["model"]]
    except (KeyError, ValueError) as exc:
        raise StreamFormatError(f"bad header: {exc}", 1) from None
    try:
        return StreamMeta(n, T, model)
    except ValueError as exc:
        raise StreamFormatError(str(exc), 1) from None


def parse_stream(text: str | io.TextIOBase) -> tuple[StreamMeta, Stream]:
    lines = text.splitlines() if isinstance(text, str) else text.read().splitlines()
    if not lines:
        raise StreamFormatError("empty stream file")
    meta = _parse_header(lines[0])
    elements, signs = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise StreamFormatError(f"expected 't,element,sign', got {line!r}", lineno)
        try:
            t, a, s = (int(p) for p in parts)
        except ValueError:
            raise StreamFormatError(f"non-integer field in {line!r}", lineno) from None
        if t != len(elements) + 1:
            raise StreamFormatError(f"timestep {t} out of order (expected {len(elements) + 1})", lineno)
        if s not in (-1, 0, 1):
            raise StreamFormatError(f"sign {s} not in {{-1, 0, 1}}", lineno)
        if not (1 <= a <= meta.n):
            raise StreamFormatError(f"element {a} outside [1, {meta.n}]", lineno)
        elements.append(a)
        signs.append(s)
    if len(elements) != meta.T:
        raise StreamFormatError(f"header declares T={meta.T} but file has {len(elements)} updates")
    stream = Stream(elements, signs)
    validate(stream, meta)
    return meta, stream


def validate(stream: Stream, meta: StreamMeta) -> None:
    """Raise if the stream violates its declared model."""
    if meta.model is Model.INSERTION_ONLY and np.any(stream.signs != 1):
        t = int(np.argmax(stream.signs != 1)) + 1
        raise StreamFormatError(f"insertion-only stream has a non-positive sign at timestep {t}")
    if meta.model is Model.STRICT_TURNSTILE:
        oracle = ExactOracle(meta.n, meta.model)
        for u in stream:
            oracle.update(u)


def format_stream(meta: StreamMeta, stream: Stream) -> str:
    buf = io.StringIO()
    buf.write(f"# n={meta.n} T={meta.T} model={meta.model.value}\n")
    for t, (a, s) in enumerate(zip(stream.elements.tolist(), stream.signs.tolist()), start=1):
        buf.write(f"{t},{a},{s}\n")
    return buf.getvalue()


def write_stream(meta: StreamMeta, stream: Stream, path) -> None:
    if len(stream) != meta.T:
        raise ValueError(f"meta declares T={meta.T} but stream has {len(stream)} updates")
    Path(path).write_text(format_stream(meta, stream), encoding="utf-8", newline="\n")


def read_stream(path) -> tuple[StreamMeta, Stream]:
    return parse_stream(Path(path).read_text(encoding="utf-8"))
