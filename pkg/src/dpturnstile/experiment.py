"""Run configuration, estimator construction, traces and manifests."""

from __future__ import annotations

import hashlib
import json
import math
import platform
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .counter import ContinualCounter, noise_floor
from .domain_reduction import DomainReductionConfig, DomainReductionEstimator, HypothesisViolation
from .f2 import F2Config, F2Estimator
from .metrics import EstimatorTrace, format_trace
from .minhash import MinHashConfig, MinHashEstimator
from .privacy import NoiseSource, PrivacyBudget, make_rng, resolve_budget, zcdp_to_approx
from .stream import GeneratorKind, Model, Stream, StreamMeta, gen_stream, read_stream, replay

ESTIMATORS = ("minhash", "domain-reduction", "f2", "counter")
BUDGET_TOLERANCE = 1e-12


class BudgetOverspend(RuntimeError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    n: int
    T: int
    model: str = "strict"
    peak: int | None = None

    def build(self, seed: int) -> tuple[StreamMeta, Stream]:
        meta = StreamMeta(self.n, self.T, Model(self.model))
        return meta, gen_stream(GeneratorKind(self.kind), meta, seed, peak=self.peak)


@dataclass(frozen=True)
class RunConfig:
    estimator: str
    seed: int = 0
    rho: float | None = None
    epsilon: float | None = None
    delta: float | None = None
    stream: str | None = None
    generator: GeneratorSpec | None = None
    alpha: float = 0.25
    c_prime: float | None = None
    max_level: int | None = None
    replicas: int | None = None
    noise_off: bool = False
    trials: int = 1

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}; choose from {', '.join(ESTIMATORS)}")
        if (self.stream is None) == (self.generator is None):
            raise ValueError("give exactly one of a stream file or a generator spec")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        self.budget()  # validates the privacy specification

    def budget(self) -> PrivacyBudget:
        return resolve_budget(self.rho, self.epsilon, self.delta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        if d.get("generator") is not None:
            d["generator"] = GeneratorSpec(**d["generator"])
        return cls(**d)


def trial_seed(seed: int, index: int) -> int:
    """Independent 63-bit seed for trial ``index``; trial 0 keeps ``seed``."""
    if index == 0:
        return seed
    return int(make_rng(seed, "trial", index).integers(0, 2**63 - 1))


def load_stream(cfg: RunConfig, seed: int) -> tuple[StreamMeta, Stream]:
    if cfg.stream is not None:
        return read_stream(cfg.stream)
    return cfg.generator.build(seed)


def check_model(estimator: str, meta: StreamMeta) -> bool:
    """Raise for hypothesis violations; return False if only a soft tag applies."""
    if estimator == "minhash" and meta.model is Model.GENERAL_TURNSTILE:
        raise HypothesisViolation(
            "minhash estimator requires a strict turnstile stream (accuracy is proved only on strict turnstile streams)")
    if estimator == "f2" and meta.model is Model.GENERAL_TURNSTILE:
        warnings.warn("F2 accuracy is stated for strict turnstile streams; run tagged outside hypothesis", stacklevel=2)
        return False
    return True


class _CounterEstimator:
    """Continual count of the signed update total."""

    def __init__(self, T: int, rho: float, seed: int):
        self.counter = ContinualCounter(T, rho, NoiseSource(seed, "counter", "noise"))
        self.tau = noise_floor(T, rho, B=1, gamma=1.0 / max(T, 2)).tau
        self.rho = rho

    def step(self, element: int, sign: int) -> float:
        return self.counter.update(sign)

    def composed_budget(self) -> PrivacyBudget:
        return PrivacyBudget(self.rho)


def build_estimator(cfg: RunConfig, meta: StreamMeta, seed: int):
    rho = math.inf if cfg.noise_off else cfg.budget().rho
    T = meta.T
    if cfg.estimator == "minhash":
        return MinHashEstimator(MinHashConfig(rho, T, meta.n, replicas=cfg.replicas), seed)
    if cfg.estimator == "domain-reduction":
        kw = {}
        if cfg.c_prime is not None:
            kw["c_prime"] = cfg.c_prime
        if cfg.max_level is not None:
            kw["max_level"] = cfg.max_level
        return DomainReductionEstimator(DomainReductionConfig(rho, T, replicas=cfg.replicas, **kw), seed)
    if cfg.estimator == "f2":
        return F2Estimator(F2Config(rho, T, cfg.alpha, rows=cfg.replicas), seed)
    return _CounterEstimator(T, rho, seed)


def audit_budget(cfg: RunConfig, est) -> float:
    composed = est.composed_budget().rho
    if cfg.noise_off:
        return composed
    target = cfg.budget().rho
    if composed > target * (1 + BUDGET_TOLERANCE):
        raise BudgetOverspend(f"composed budget {composed!r} exceeds requested rho {target!r}")
    return composed


def exact_series(cfg: RunConfig, meta: StreamMeta, stream: Stream) -> np.ndarray:
    distinct, f2, total = replay(stream, meta)
    if cfg.estimator in ("minhash", "domain-reduction"):
        return distinct
    return f2 if cfg.estimator == "f2" else total


def run_trial(cfg: RunConfig, index: int) -> dict:
    """Run one trial; returns the trace and its metadata (picklable)."""
    seed = trial_seed(cfg.seed, index)
    meta, stream = load_stream(cfg, seed)
    in_hypothesis = check_model(cfg.estimator, meta)
    est = build_estimator(cfg, meta, seed)
    composed = audit_budget(cfg, est)
    estimates = np.array([est.step(a, s) for a, s in stream], dtype=np.float64)
    trace = EstimatorTrace(exact_series(cfg, meta, stream), estimates)
    text = format_trace(trace)
    info = {
        "index": index,
        "seed": seed,
        "composed_rho": composed,
        "in_hypothesis": in_hypothesis,
        "trace_sha256": hashlib.sha256(text.encode()).hexdigest(),
    }
    info.update(_noise_params(est))
    return {"trace": text, "info": info}


def _noise_params(est) -> dict:
    if isinstance(est, F2Estimator):
        return {"lambda": est.config.lam, "counter_tau": est.config.counter_tau(), "m": est.m}
    if isinstance(est, MinHashEstimator):
        return {"tau": est.tau, "m": est.m, "K": est.K}
    if isinstance(est, DomainReductionEstimator):
        return {"tau": est.tau, "L": est.L, "J": est.J}
    return {"tau": est.tau}


def run_trials(cfg: RunConfig, jobs: int = 1) -> list[dict]:
    if jobs == 1 or cfg.trials == 1:
        return [run_trial(cfg, i) for i in range(cfg.trials)]
    from joblib import Parallel, delayed

    return Parallel(n_jobs=jobs)(delayed(run_trial)(cfg, i) for i in range(cfg.trials))


def trace_paths(out: Path, trials: int) -> list[Path]:
    if trials == 1:
        return [out]
    return [out / f"trace_{i:04d}.csv" for i in range(trials)]


def manifest(cfg: RunConfig, results: list[dict], paths: list[Path]) -> dict:
    budget = None if cfg.noise_off else cfg.budget().rho
    stream_info = None
    if cfg.stream is not None:
        stream_info = {"path": cfg.stream, "sha256": hashlib.sha256(Path(cfg.stream).read_bytes()).hexdigest()}
    approx = None
    if budget is not None and cfg.delta is not None:
        approx = asdict(zcdp_to_approx(budget, cfg.delta))
    return {
        "config": cfg.to_dict(),
        "rho": budget,
        "approx_dp": approx,
        "stream": stream_info,
        "trials": [dict(r["info"], trace=str(p)) for r, p in zip(results, paths)],
        "versions": {"dpturnstile": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }


def write_run(cfg: RunConfig, out, jobs: int = 1, manifest_path=None) -> dict:
    out = Path(out)
    results = run_trials(cfg, jobs)
    if cfg.trials > 1:
        out.mkdir(parents=True, exist_ok=True)
    paths = trace_paths(out, cfg.trials)
    for r, p in zip(results, paths):
        p.write_text(r["trace"], encoding="utf-8", newline="\n")
    man = manifest(cfg, results, paths)
    if manifest_path is None:
        manifest_path = out / "manifest.json" if cfg.trials > 1 else out.with_suffix(".manifest.json")
    Path(manifest_path).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return man


def replay_manifest(path, out, jobs: int = 1) -> tuple[dict, bool]:
    """Re-run a manifest; returns the new manifest and whether every trace hash matches."""
    old = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = RunConfig.from_dict(old["config"])
    new = write_run(cfg, out, jobs)
    same = [t["trace_sha256"] for t in old["trials"]] == [t["trace_sha256"] for t in new["trials"]]
    return new, same


def with_overrides(cfg: RunConfig, **kw) -> RunConfig:
    return replace(cfg, **kw)
