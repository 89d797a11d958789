"""Factor size and factorization time against N at fixed rho and lambda.

    python3 scripts/scaling.py --sizes 4000,16000,64000
"""

import argparse
import time
from dataclasses import asdict, dataclass

import numpy as np

from klchol import (KernelModel, PointSet, aggregate_supernodes, build_pattern, factorize_aggregated,
                    factorize_plain, reverse_maximin)


@dataclass
class Config:
    sizes: str = "4000,16000,64000"
    dim: int = 2
    rho: float = 2.0
    lam: float = 1.5
    range: float = 0.5
    reps: int = 3
    threads: int = 1
    seed: int = 0


def best_of(fn, reps):
    out, best = None, np.inf
    for _ in range(reps):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return out, best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f, v in asdict(Config()).items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    cfg = Config(**vars(ap.parse_args()))
    k = KernelModel("matern32", cfg.range)
    print(f"{'N':>8} {'t_order':>8} {'nnz/N':>7} {'t_plain':>8} {'agg nnz/N':>9} {'t_agg':>8}")
    for n in map(int, cfg.sizes.split(",")):
        P = PointSet(np.random.Generator(np.random.Philox(cfg.seed)).random((n, cfg.dim)))
        t = time.perf_counter()
        o = reverse_maximin(P)
        t_order = time.perf_counter() - t
        S = build_pattern(o, P, cfg.rho, cfg.threads)
        part = aggregate_supernodes(S, o, cfg.lam)
        _, t_plain = best_of(lambda: factorize_plain(k, P, o, S, cfg.threads), cfg.reps)
        F, t_agg = best_of(lambda: factorize_aggregated(k, P, o, part, cfg.threads), cfg.reps)
        print(f"{n:8d} {t_order:8.2f} {S.nnz / n:7.2f} {t_plain:8.3f} {F.nnz / n:9.2f} {t_agg:8.3f}", flush=True)


if __name__ == "__main__":
    main()
