"""MinHash estimator on grow-then-shrink streams: envelope success rate and minimal beta.

    python scripts/minhash_envelope.py --T 4096 --peak 1000 --seeds 20
"""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from dpturnstile.metrics import EstimatorTrace, minimal_beta, verify_envelope
from dpturnstile.minhash import MinHashConfig, MinHashEstimator, lemma_profile
from dpturnstile.stream import Model, StreamMeta, gen_stream, replay


@dataclass
class EnvelopeConfig:
    T: int = 4096
    n: int = 4096
    peak: int = 1000
    rho: float = 1.0
    seeds: int = 20
    alpha: float = 24.0  # for the minimal-beta column


def run(cfg: EnvelopeConfig) -> dict:
    meta = StreamMeta(cfg.n, cfg.T, Model.STRICT_TURNSTILE)
    passed, betas, tau = 0, [], None
    for seed in range(cfg.seeds):
        stream = gen_stream("phased", meta, seed, peak=cfg.peak)
        est = MinHashEstimator(MinHashConfig(cfg.rho, cfg.T, cfg.n), seed)
        tr = EstimatorTrace(replay(stream, meta)[0], est.run(stream))
        tau = est.tau
        passed += bool(verify_envelope(tr, lemma_profile(est.tau)))
        betas.append(minimal_beta(tr, cfg.alpha)[0])
    return {"config": asdict(cfg), "tau": tau, "success_rate": passed / cfg.seeds,
            "beta_median": float(np.median(betas)), "beta_max": float(np.max(betas))}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    for f, default in asdict(EnvelopeConfig()).items():
        ap.add_argument(f"--{f}", type=type(default), default=default)
    print(json.dumps(run(EnvelopeConfig(**vars(ap.parse_args()))), indent=2))


if __name__ == "__main__":
    main()
