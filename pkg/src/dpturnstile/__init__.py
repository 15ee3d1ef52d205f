"""Differentially private continual estimators for turnstile streams."""

__version__ = "0.1.0"

from .counter import ContinualCounter, CounterBank, noise_floor
from .domain_reduction import DomainReductionConfig, DomainReductionEstimator, HypothesisViolation
from .f2 import F2Config, F2Estimator, f2_error_bound
from .metrics import ErrorProfile, EstimatorTrace, minimal_beta, success_rate, verify_envelope
from .minhash import MinHashConfig, MinHashEstimator
from .privacy import PrivacyBudget, approx_to_zcdp, zcdp_to_approx
from .stream import Model, Stream, StreamMeta, gen_stream

__all__ = [
    "ContinualCounter", "CounterBank", "noise_floor",
    "DomainReductionConfig", "DomainReductionEstimator", "HypothesisViolation",
    "F2Config", "F2Estimator", "f2_error_bound",
    "ErrorProfile", "EstimatorTrace", "minimal_beta", "success_rate", "verify_envelope",
    "MinHashConfig", "MinHashEstimator",
    "PrivacyBudget", "approx_to_zcdp", "zcdp_to_approx",
    "Model", "Stream", "StreamMeta", "gen_stream",
]
