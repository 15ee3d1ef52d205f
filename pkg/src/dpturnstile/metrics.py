"""Mixed multiplicative/additive error: envelope checks and beta measurement.

An estimate sequence satisfies the profile ``(p, q, r, s)`` when
``Y_t / p - r <= Yhat_t <= q Y_t + s`` at every step; its error is then
``(alpha, beta) = (p q, r + s)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

SLACK = 1e-9
GRID_SPLITS = 17


class TraceFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass
class EstimatorTrace:
    exact: np.ndarray
    estimate: np.ndarray

    def __post_init__(self):
        self.exact = np.asarray(self.exact, dtype=np.float64)
        self.estimate = np.asarray(self.estimate, dtype=np.float64)
        if self.exact.shape != self.estimate.shape or self.exact.ndim != 1:
            raise ValueError("exact and estimate must be 1-d arrays of equal length")

    def __len__(self):
        return len(self.exact)

    def scaled(self, c: float) -> "EstimatorTrace":
        return EstimatorTrace(self.exact * c, self.estimate * c)


@dataclass(frozen=True)
class ErrorProfile:
    p: float
    q: float
    r: float = 0.0
    s: float = 0.0

    def __post_init__(self):
        if self.p < 1 or self.q < 1:
            raise ValueError(f"p and q must be >= 1, got p={self.p}, q={self.q}")
        if self.r < 0 or self.s < 0:
            raise ValueError(f"r and s must be >= 0, got r={self.r}, s={self.s}")

    @property
    def alpha(self) -> float:
        return self.p * self.q

    @property
    def beta(self) -> float:
        return self.r + self.s

    def bounds(self, exact):
        exact = np.asarray(exact, dtype=np.float64)
        return exact / self.p - self.r, self.q * exact + self.s


@dataclass(frozen=True)
class EnvelopeResult:
    passed: bool
    first_violation: int | None  # 1-indexed timestep
    violations: int

    def __bool__(self):
        return self.passed


def verify_envelope(trace: EstimatorTrace, profile: ErrorProfile, slack: float = SLACK) -> EnvelopeResult:
    lo, hi = profile.bounds(trace.exact)
    bad = (trace.estimate < lo - slack) | (trace.estimate > hi + slack)
    count = int(bad.sum())
    first = int(np.argmax(bad)) + 1 if count else None
    return EnvelopeResult(count == 0, first, count)


def _beta_at(trace: EstimatorTrace, p: float, q: float) -> tuple[float, float]:
    if len(trace) == 0:
        return 0.0, 0.0
    r = float(np.max(np.maximum(0.0, trace.exact / p - trace.estimate)))
    s = float(np.max(np.maximum(0.0, trace.estimate - q * trace.exact)))
    return r, s


def minimal_beta(trace: EstimatorTrace, alpha: float, refine: bool = False) -> tuple[float, ErrorProfile]:
    """Smallest beta for ``alpha`` under the split ``p = q = sqrt(alpha)``.

    This is an upper bound on the best beta over all splits ``p q = alpha``.
    With ``refine`` the split is also searched over a log-spaced grid of
    ``GRID_SPLITS`` values of ``p`` in ``[1, alpha]``, which can only lower it.
    """
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    root = math.sqrt(alpha)
    r, s = _beta_at(trace, root, root)
    best = ErrorProfile(root, root, r, s)
    if refine:
        for p in np.geomspace(1.0, alpha, GRID_SPLITS):
            p = float(p)
            q = max(1.0, alpha / p)
            r, s = _beta_at(trace, p, q)
            if r + s < best.beta:
                best = ErrorProfile(p, q, r, s)
    return best.beta, best


def success_rate(traces, profile: ErrorProfile) -> float:
    traces = list(traces)
    if not traces:
        raise ValueError("success_rate needs at least one trace")
    return sum(bool(verify_envelope(tr, profile)) for tr in traces) / len(traces)


def report(trace: EstimatorTrace, alpha: float | None = None, profile: ErrorProfile | None = None,
           refine: bool = False) -> dict:
    """JSON-ready summary with keys alpha, beta, p, q, r, s, violations, success_rate."""
    if (alpha is None) == (profile is None):
        raise ValueError("give exactly one of alpha or profile")
    if profile is None:
        _, profile = minimal_beta(trace, alpha, refine=refine)
    result = verify_envelope(trace, profile)
    out = {"alpha": profile.alpha, "beta": profile.beta, **asdict(profile)}
    out.update(violations=result.violations, first_violation=result.first_violation,
               success_rate=1.0 if result.passed else 0.0)
    return out


def format_trace(trace: EstimatorTrace) -> str:
    buf = io.StringIO()
    buf.write("t,exact,estimate\n")
    for t, (y, yhat) in enumerate(zip(trace.exact.tolist(), trace.estimate.tolist()), start=1):
        buf.write(f"{t},{_fmt(y)},{_fmt(yhat)}\n")
    return buf.getvalue()


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() and abs(v) < 2**53 else repr(float(v))


def write_trace(trace: EstimatorTrace, path) -> None:
    Path(path).write_text(format_trace(trace), encoding="utf-8", newline="\n")


def read_trace(path) -> EstimatorTrace:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "exact", "estimate"]:
            raise TraceFormatError("expected header 't,exact,estimate'", 1)
        exact, estimate = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceFormatError(f"expected 3 columns, got {len(row)}", lineno)
            try:
                t, y, yhat = int(row[0]), float(row[1]), float(row[2])
            except ValueError:
                raise TraceFormatError(f"non-numeric field in {row!r}", lineno) from None
            if t != len(exact) + 1:
                raise TraceFormatError(f"timestep {t} out of order", lineno)
            exact.append(y)
            estimate.append(yhat)
    return EstimatorTrace(exact, estimate)
