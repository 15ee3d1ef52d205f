"""How the F2 additive bound moves with rho and alpha, plus a small empirical check.

    python scripts/f2_scaling.py --T 4096 --empirical-T 256 --seeds 5
"""

import argparse
import json
from dataclasses import asdict, dataclass

import numpy as np

from dpturnstile.f2 import F2Config, F2Estimator, f2_error_bound
from dpturnstile.stream import Model, StreamMeta, gen_stream, replay


@dataclass
class ScalingConfig:
    T: int = 4096
    alpha: float = 0.25
    empirical_T: int = 256
    empirical_n: int = 64
    seeds: int = 5


def table(cfg: ScalingConfig) -> list[dict]:
    rows = []
    for rho in (0.25, 1.0, 4.0):
        for alpha in (cfg.alpha, cfg.alpha / 2):
            c = F2Config(rho, cfg.T, alpha)
            rows.append({"rho": rho, "alpha": alpha, "m": c.m, "lambda": c.lam,
                         "bound": f2_error_bound(rho, cfg.T, alpha)})
    return rows


def empirical(cfg: ScalingConfig) -> dict:
    T, alpha = cfg.empirical_T, 0.5
    meta = StreamMeta(cfg.empirical_n, T, Model.STRICT_TURNSTILE)
    bound = f2_error_bound(1.0, T, alpha)
    worst = []
    for seed in range(cfg.seeds):
        stream = gen_stream("uniform", meta, seed)
        f2 = replay(stream, meta)[1]
        out = F2Estimator(F2Config(1.0, T, alpha), seed).run(stream)
        worst.append(float(np.max(np.abs(out - f2) - alpha * f2)))
    return {"T": T, "alpha": alpha, "bound": bound, "worst_excess": max(worst)}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    for f, default in asdict(ScalingConfig()).items():
        ap.add_argument(f"--{f.replace('_', '-')}", dest=f, type=type(default), default=default)
    cfg = ScalingConfig(**vars(ap.parse_args()))
    print(json.dumps({"config": asdict(cfg), "bounds": table(cfg), "empirical": empirical(cfg)}, indent=2))


if __name__ == "__main__":
    main()
