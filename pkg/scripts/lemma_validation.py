"""Monte-Carlo sweep of the three domain-reduction lemmas over support sizes.

    python scripts/lemma_validation.py --trials 500
"""

import argparse
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from dpturnstile.domain_reduction import lemma1_validate, lemma2_validate, lemma3_validate


@dataclass
class SweepConfig:
    n: int = 2**14
    supports: tuple = (2000, 5000, 10_000)
    trials: int = 500
    seed: int = 0


def vector(n, nnz, seed, signed=True):
    rng = np.random.default_rng(seed)
    x = np.zeros(n, dtype=np.int64)
    idx = rng.choice(n, nnz, replace=False)
    x[idx] = rng.choice([-1, 1], nnz) if signed else 1
    return x


def sweep(cfg: SweepConfig) -> list[dict]:
    ell = 100 * math.log2(cfg.n)
    rows = []
    for nnz in cfg.supports:
        x = vector(cfg.n, nnz, cfg.seed)
        m1 = max(1, int(nnz // ell))
        rows.append({"lemma": 1, "nnz": nnz, "m": m1, **lemma1_validate(x, m1, ell, cfg.trials, cfg.seed)})
        m2 = math.ceil(ell * nnz)
        rows.append({"lemma": 2, "nnz": nnz, "m": m2, **lemma2_validate(x, m2, cfg.trials, cfg.seed)})
        m3 = nnz * 100
        rows.append({"lemma": 3, "nnz": nnz, "m": m3, **lemma3_validate(x, m3, 10, 10, cfg.trials, cfg.seed)})
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=SweepConfig.n)
    ap.add_argument("--supports", type=int, nargs="+", default=list(SweepConfig.supports))
    ap.add_argument("--trials", type=int, default=SweepConfig.trials)
    ap.add_argument("--seed", type=int, default=SweepConfig.seed)
    args = ap.parse_args()
    cfg = SweepConfig(args.n, tuple(args.supports), args.trials, args.seed)
    print(json.dumps({"config": asdict(cfg), "results": sweep(cfg)}, indent=2))


if __name__ == "__main__":
    main()
