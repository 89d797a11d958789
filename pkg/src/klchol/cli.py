"""Command-line driver: ``klchol {order,factorize,loglik,predict,benchmark}``.

Exit codes: 0 success, 1 input parse error, 2 numerical breakdown,
3 configuration error, 4 benchmark time budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import io as kio
from . import oracle
from .factor import FactorizationError, factorize_aggregated, factorize_plain, kl_objective, log_likelihood
from .kernels import FAMILIES, KernelError, KernelModel
from .noise import PRECON_PATTERNS, ConvergenceError, build_noisy_model, solve_sigma
from .ordering import OrderingError, PointSet, box_boundary, reverse_maximin
from .predict import predict_first, predict_last_batched, predict_streaming
from .sparsity import PatternError, aggregate_supernodes, build_pattern

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3, 4
COMMANDS = ("order", "factorize", "loglik", "predict", "benchmark")
MODES = ("first", "last", "streaming")


class ConfigError(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    pass


@dataclass
class RunConfig:
    command: str
    points: Optional[str] = None
    obs: Optional[str] = None
    pred_points: Optional[str] = None
    kernel: str = "matern32"
    range: float = 1.0
    variance: float = 1.0
    rho: float = 3.0
    lam: float = 1.5
    threads: int = 1
    seed: int = 0
    out: str = "."
    dense_check: bool = False
    nugget: Optional[str] = None
    precon: str = "L"
    cg_tol: float = 1e-8
    cg_maxiter: int = 50
    mode: str = "first"
    batch_size: int = 1
    write_cov: bool = False
    jitter: float = 0.0
    boundary: str = "none"
    ordering: str = "maximin"
    sizes: List[int] = field(default_factory=lambda: [1000, 4000, 16000])
    dim: int = 2
    time_budget: Optional[float] = None

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.kernel not in FAMILIES:
            raise ConfigError(f"unknown kernel {self.kernel!r}; choose from {', '.join(FAMILIES)}")
        if not (self.range > 0 and self.variance > 0):
            raise ConfigError("--range and --variance must be positive")
        if not self.rho >= 1:
            raise ConfigError("--rho must be >= 1")
        if not self.lam >= 1:
            raise ConfigError("--lambda must be >= 1")
        if self.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if self.precon not in PRECON_PATTERNS:
            raise ConfigError(f"--precon must be one of {PRECON_PATTERNS}")
        if self.mode not in MODES:
            raise ConfigError(f"--mode must be one of {MODES}")
        if self.batch_size < 1 or self.cg_maxiter < 1 or not self.cg_tol > 0:
            raise ConfigError("--batch-size, --cg-maxiter and --cg-tol must be positive")
        if self.jitter < 0:
            raise ConfigError("--jitter must be >= 0")
        if self.ordering != "maximin":
            raise ConfigError("only --ordering maximin is supported")
        self.boundary_fn()
        if self.command != "benchmark" and not self.points:
            raise ConfigError("--points is required")
        if self.command in ("loglik", "predict") and not self.obs:
            raise ConfigError("--obs is required")
        if self.command == "predict":
            if not self.pred_points:
                raise ConfigError("--pred-points is required")
            if self.nugget is not None:
                raise ConfigError("--nugget is not supported with predict")
        if self.command == "benchmark" and (not self.sizes or min(self.sizes) < 1 or self.dim < 1):
            raise ConfigError("--sizes and --dim must be positive")

    def kernel_model(self) -> KernelModel:
        return KernelModel(self.kernel, self.range, self.variance)

    def boundary_fn(self):
        if self.boundary == "none":
            return None
        if self.boundary.startswith("box:"):
            try:
                lo, hi = (float(v) for v in self.boundary[4:].split(","))
            except ValueError:
                raise ConfigError(f"bad --boundary {self.boundary!r}; use box:lo,hi") from None
            if not lo < hi:
                raise ConfigError("--boundary box:lo,hi needs lo < hi")
            return box_boundary(lo, hi)
        raise ConfigError(f"bad --boundary {self.boundary!r}; use none or box:lo,hi")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    a = common.add_argument
    a("--points")
    a("--obs")
    a("--pred-points", dest="pred_points")
    a("--kernel", default="matern32")
    a("--range", type=float, default=1.0)
    a("--variance", type=float, default=1.0)
    a("--rho", type=float, default=3.0)
    a("--lambda", dest="lam", type=float, default=1.5)
    a("--threads", type=int, default=1)
    a("--seed", type=int, default=0)
    a("--out", default=".")
    a("--dense-check", dest="dense_check", action="store_true")
    a("--nugget", help="noise variance: a number or a CSV file with one value per point")
    a("--precon", default="L")
    a("--cg-tol", dest="cg_tol", type=float, default=1e-8)
    a("--cg-maxiter", dest="cg_maxiter", type=int, default=50)
    a("--mode", default="first")
    a("--batch-size", dest="batch_size", type=int, default=1)
    a("--write-cov", dest="write_cov", action="store_true", help="also write posterior covariance CSV")
    a("--jitter", type=float, default=0.0)
    a("--boundary", default="none", help="none or box:lo,hi")
    a("--ordering", default="maximin")
    a("--sizes", type=lambda s: [int(v) for v in s.split(",")], default=[1000, 4000, 16000])
    a("--dim", type=int, default=2)
    a("--time-budget", dest="time_budget", type=float, help="seconds allowed per benchmark step")
    p = argparse.ArgumentParser(prog="klchol", description="Sparse inverse Cholesky factors for kernel matrices")
    sub = p.add_subparsers(dest="command", required=True)
    for c in COMMANDS:
        sub.add_parser(c, parents=[common])
    return p


def parse_config(argv=None) -> RunConfig:
    ns = _parser().parse_args(argv)
    return RunConfig(**vars(ns))


# ---------------------------------------------------------------- pipeline

def _load_points(cfg: RunConfig, path) -> PointSet:
    return PointSet(kio.read_points(path), cfg.boundary_fn())


def _nugget(cfg: RunConfig, n: int):
    if cfg.nugget is None:
        return None
    try:
        v = float(cfg.nugget)
    except ValueError:
        return kio.read_values(cfg.nugget, n)
    if not v > 0:
        raise ConfigError("--nugget must be positive")
    return np.full(n, v)


def _check_dense(cfg: RunConfig, n: int):
    if cfg.dense_check and n > oracle.MAX_DENSE_N:
        raise ConfigError(f"--dense-check refused for N={n} > {oracle.MAX_DENSE_N}")


def _factor(cfg: RunConfig, pts: PointSet):
    t0 = time.perf_counter()
    order = reverse_maximin(pts)
    pattern = build_pattern(order, pts, cfg.rho, cfg.threads)
    part = aggregate_supernodes(pattern, order, cfg.lam)
    F = factorize_aggregated(cfg.kernel_model(), pts, order, part, cfg.threads, cfg.jitter)
    stats = {"n": len(pts), "nnz": F.nnz, "nnz_plain": pattern.nnz, "n_supernodes": part.n_supernodes,
             "max_block": part.max_block(), "wall_time_ms": 1e3 * (time.perf_counter() - t0)}
    return order, pattern, part, F, stats


def _dense_check_factor(cfg, pts, F) -> dict:
    theta = cfg.kernel_model().matrix(pts.coords, pts.coords)
    L = F.to_dense()
    p = F.ordering.perm
    approx = np.empty_like(theta)
    approx[np.ix_(p, p)] = np.linalg.inv(L @ L.T)
    return {"kl": kl_objective(F, theta),
            "fro_error": float(np.linalg.norm(approx - theta) / np.linalg.norm(theta)),
            "mean_rmse": None, "cov_maxabs": None}


def _out(cfg: RunConfig, name: str) -> Path:
    d = Path(cfg.out)
    d.mkdir(parents=True, exist_ok=True)
    return d / name


def cmd_order(cfg: RunConfig) -> int:
    pts = _load_points(cfg, cfg.points)
    kio.write_ordering(_out(cfg, "ordering.csv"), reverse_maximin(pts))
    return EXIT_OK


def cmd_factorize(cfg: RunConfig) -> int:
    pts = _load_points(cfg, cfg.points)
    _check_dense(cfg, len(pts))
    order, pattern, part, F, stats = _factor(cfg, pts)
    kio.write_ordering(_out(cfg, "ordering.csv"), order)
    kio.write_pattern(_out(cfg, "pattern.txt"), pattern)
    kio.write_supernodes(_out(cfg, "supernodes.txt"), part)
    kio.write_factor(_out(cfg, "factor.txt"), F)
    if cfg.dense_check:
        check = _dense_check_factor(cfg, pts, F)
        stats["kl"] = check["kl"]
        kio.append_json(_out(cfg, "dense_check.json"), check)
    kio.append_json(_out(cfg, "stats.json"), stats)
    return EXIT_OK


def cmd_loglik(cfg: RunConfig) -> int:
    pts = _load_points(cfg, cfg.points)
    n = len(pts)
    _check_dense(cfg, n)
    y = kio.read_values(cfg.obs, n)
    R = _nugget(cfg, n)
    _, _, _, F, stats = _factor(cfg, pts)
    if R is None:
        ll = log_likelihood(F, y)
    else:
        model = build_noisy_model(F, R, cfg.precon)
        res = solve_sigma(model, y, cfg.cg_tol, cfg.cg_maxiter)
        ll = -0.5 * (float(y @ res.x) + model.logdet_sigma() + n * math.log(2 * math.pi))
        stats.update(iterations=res.iterations, final_residual=res.residual,
                     logdet_exact=cfg.precon == "exact", precon=cfg.precon)
    stats["log_likelihood"] = ll
    if cfg.dense_check:
        theta = cfg.kernel_model().matrix(pts.coords, pts.coords)
        S = theta if R is None else theta + np.diag(R)
        C = np.linalg.cholesky(S)
        z = np.linalg.solve(C, y)
        dense = -0.5 * (float(z @ z) + 2 * float(np.log(np.diag(C)).sum()) + n * math.log(2 * math.pi))
        check = _dense_check_factor(cfg, pts, F)
        check.update(log_likelihood_dense=dense, log_likelihood_error=abs(ll - dense))
        kio.append_json(_out(cfg, "dense_check.json"), check)
    kio.append_json(_out(cfg, "stats.json"), stats)
    print(repr(ll))
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    train = _load_points(cfg, cfg.points)
    pred = PointSet(kio.read_points(cfg.pred_points))
    if pred.dim != train.dim:
        raise ConfigError("prediction and training points differ in dimension")
    _check_dense(cfg, len(train) + len(pred))
    y = kio.read_values(cfg.obs, len(train))
    k = cfg.kernel_model()
    common = dict(rho=cfg.rho, lam=cfg.lam, threads=cfg.threads, jitter=cfg.jitter)
    if cfg.mode == "first":
        r = predict_first(k, train, pred, y, **common)
    elif cfg.mode == "last":
        r = predict_last_batched(k, train, pred, y, batch_size=cfg.batch_size, **common)
    else:
        r = predict_streaming(k, train, pred, y, **common)
    with open(_out(cfg, "mean.csv"), "w") as fh:
        fh.write("index,mean,sd\n")
        for i, (m, s) in enumerate(zip(r.mean, r.sd), start=1):
            fh.write(f"{i},{float(m)!r},{float(s)!r}\n")
    if cfg.write_cov:
        if r.covariance is not None:
            kio.write_matrix(_out(cfg, "covariance.csv"), r.covariance)
        else:
            for b, C in enumerate(r.batch_covariances, start=1):
                kio.write_matrix(_out(cfg, f"covariance_batch{b}.csv"), C)
    stats = {"n_train": len(train), "n_pred": len(pred), "mode": cfg.mode, **r.diagnostics}
    if cfg.dense_check:
        m0, c0 = oracle.dense_conditional_kernel(k, train, pred, y)
        if r.covariance is not None:
            cmax = float(np.abs(r.covariance - c0).max())
        else:
            cmax = max(float(np.abs(C - c0[np.ix_(b, b)]).max()) for b, C in zip(r.batches, r.batch_covariances))
        kio.append_json(_out(cfg, "dense_check.json"),
                        {"kl": None, "fro_error": None,
                         "mean_rmse": float(np.sqrt(np.mean((r.mean - m0) ** 2))), "cov_maxabs": cmax})
    kio.append_json(_out(cfg, "stats.json"), stats)
    return EXIT_OK


def uniform_points(n: int, dim: int, seed: int) -> np.ndarray:
    return np.random.Generator(np.random.Philox(seed)).random((n, dim))


def cmd_benchmark(cfg: RunConfig) -> int:
    k = cfg.kernel_model()
    rows = []
    out = _out(cfg, "benchmark.csv")
    for n in cfg.sizes:
        pts = PointSet(uniform_points(n, cfg.dim, cfg.seed), cfg.boundary_fn())
        t0 = time.perf_counter()
        order = reverse_maximin(pts)
        pattern = build_pattern(order, pts, cfg.rho, cfg.threads)
        part = aggregate_supernodes(pattern, order, cfg.lam)
        t1 = time.perf_counter()
        factorize_plain(k, pts, order, pattern, cfg.threads, cfg.jitter)
        t2 = time.perf_counter()
        F = factorize_aggregated(k, pts, order, part, cfg.threads, cfg.jitter)
        t3 = time.perf_counter()
        rows.append((n, pattern.nnz, t2 - t1, t3 - t2))
        kio.append_json(_out(cfg, "stats.json"),
                        {"n": n, "nnz": pattern.nnz, "nnz_aggregated": F.nnz, "n_supernodes": part.n_supernodes,
                         "max_block": part.max_block(), "time_setup": t1 - t0,
                         "time_plain": t2 - t1, "time_aggregated": t3 - t2})
        with open(out, "w") as fh:
            fh.write("N,nnz,time_plain,time_aggregated\n")
            for r in rows:
                fh.write(",".join(repr(v) for v in r) + "\n")
        if cfg.time_budget is not None and t3 - t0 > cfg.time_budget:
            raise BudgetExceeded(f"N={n} took {t3 - t0:.2f}s, budget {cfg.time_budget:.2f}s")
    return EXIT_OK


HANDLERS = {"order": cmd_order, "factorize": cmd_factorize, "loglik": cmd_loglik,
            "predict": cmd_predict, "benchmark": cmd_benchmark}


def run(cfg: RunConfig) -> int:
    try:
        cfg.validate()
        return HANDLERS[cfg.command](cfg)
    except kio.ParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except (FactorizationError, ConvergenceError, np.linalg.LinAlgError) as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except BudgetExceeded as e:
        print(f"time budget exceeded: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, KernelError, PatternError, OrderingError, ValueError, OSError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None) -> int:
    try:
        cfg = parse_config(argv)
    except SystemExit as e:  # argparse usage errors
        return EXIT_CONFIG if e.code else EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
