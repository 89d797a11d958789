"""Empirical coverage of posterior intervals on draws from the exact prior.

    python3 scripts/coverage.py --draws 200 --mode first
"""

import argparse
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from klchol import KernelModel, predict_first, predict_last_batched, predict_streaming
from klchol.oracle import dense_sample


@dataclass
class Config:
    nx: int = 40
    ny: int = 25
    n_pred: int = 50
    range: float = 0.2
    rho: float = 4.0
    lam: float = 1.3
    level: float = 0.9
    draws: int = 200
    mode: str = "first"
    seed: int = 8


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    for f, v in asdict(Config()).items():
        ap.add_argument(f"--{f}", type=type(v), default=v)
    cfg = Config(**vars(ap.parse_args()))
    g = (np.arange(cfg.nx) + 0.5) / cfg.nx, (np.arange(cfg.ny) + 0.5) / cfg.ny
    Xt = np.stack(np.meshgrid(*g, indexing="ij"), -1).reshape(-1, 2)
    Xp = np.random.Generator(np.random.Philox(cfg.seed + 1)).random((cfg.n_pred, 2))
    k = KernelModel("matern32", cfg.range)
    X = np.vstack([Xt, Xp])
    Z = dense_sample(k.matrix(X, X), cfg.seed, size=cfg.draws)
    q = norm.ppf(0.5 + cfg.level / 2)
    predict = {"first": predict_first, "last": predict_last_batched, "streaming": predict_streaming}[cfg.mode]
    nt, hits = len(Xt), 0
    for z in Z:
        r = predict(k, Xt, Xp, z[:nt], rho=cfg.rho, lam=cfg.lam)
        hits += int(np.sum(np.abs(z[nt:] - r.mean) <= q * r.sd))
    print(f"mode={cfg.mode} rho={cfg.rho} coverage={hits / (cfg.draws * cfg.n_pred):.4f} "
          f"(nominal {cfg.level})")


if __name__ == "__main__":
    main()
