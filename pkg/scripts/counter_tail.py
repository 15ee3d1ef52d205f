"""Empirical max error of the tree counter against its uniform bound tau.

    python scripts/counter_tail.py --T 1024 --trials 2000 --rho 1.0
"""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from dpturnstile.counter import CounterBank, noise_floor
from dpturnstile.privacy import NoiseSource


@dataclass
class TailConfig:
    T: int = 1024
    rho: float = 1.0
    trials: int = 2000
    gamma: float = 0.01
    seed: int = 0


def max_errors(cfg: TailConfig) -> np.ndarray:
    # trials independent counters run side by side as one bank on an all-zero stream;
    # the error is data independent, so zeros lose nothing
    bank = CounterBank(cfg.trials, cfg.T, cfg.rho, NoiseSource(cfg.seed, "counter-tail"))
    zeros = np.zeros(cfg.trials, dtype=np.int64)
    worst = np.zeros(cfg.trials)
    for _ in range(cfg.T):
        np.maximum(worst, np.abs(bank.update(zeros)), out=worst)
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    for f, default in asdict(TailConfig()).items():
        ap.add_argument(f"--{f}", type=type(default), default=default)
    cfg = TailConfig(**vars(ap.parse_args()))
    tau = noise_floor(cfg.T, cfg.rho, 1, cfg.gamma).tau
    worst = max_errors(cfg)
    print(json.dumps({
        "config": asdict(cfg),
        "tau": tau,
        "within_tau": float(np.mean(worst <= tau)),
        "target": 1 - cfg.gamma,
        "quantiles": {str(q): float(np.quantile(worst, q)) for q in (0.5, 0.9, 0.99)},
    }, indent=2))


if __name__ == "__main__":
    main()
