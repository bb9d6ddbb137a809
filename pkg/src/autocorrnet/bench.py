"""Synthetic regression benchmark, forecasting experiments and run aggregation.

Regression data follow ``y_t = tanh((X_t theta + 1) / sqrt(N)) + e_t`` with
``X_t ~ N(0, sigma_x^2 I)`` and AR(1) errors ``e_t``. Three methods are compared:

* ``wo``  -- plain least-squares training of the network,
* ``mpw`` -- the alternating baseline,
* ``w``   -- joint learning of the autocorrelation coefficient.

Every method in a (cell, seed) pair sees the same data, initial weights and
batch order, so comparisons are paired.
"""
from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .adjust import (
    Samples,
    TrainConfig,
    TrainingDivergedError,
    evaluate_eq7,
    evaluate_eq10,
    joint_train,
    naive_mpw_train,
    train_eq10,
    train_mpw,
)
from .models import ModelSpec
from .series import SeriesFrame, SplitSpec, split_chronological
from .stats import (
    StatsError,
    avg_relative_improvement,
    diagnose_residuals,
    empirical_critical_values,
    histogram,
    paired_t_test,
    simulate_ar1,
)

RECORD_SCHEMA = 1
METHODS = ("wo", "mpw", "w")


class BenchError(ValueError):
    pass


@dataclass(frozen=True)
class DgpConfig:
    T: int
    N: int
    rho: float
    sigma: float
    sigma_x: float = 0.2
    theta: tuple[float, ...] | None = None
    test_multiplier: int = 100
    valid_frac: float = 0.2

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise BenchError(f"|rho| must be < 1, got {self.rho}")
        if self.sigma < 0 or self.sigma_x < 0:
            raise BenchError("standard deviations must be non-negative")
        if self.T < 5:
            raise BenchError("T must be at least 5")
        if self.N < 1:
            raise BenchError("N must be positive")
        if not 0 < self.valid_frac < 1:
            raise BenchError("valid_frac must lie in (0, 1)")
        if self.test_multiplier < 1:
            raise BenchError("test_multiplier must be positive")
        if self.theta is not None and len(self.theta) != self.N:
            raise BenchError("theta must have N entries")

    @property
    def theta_vec(self) -> np.ndarray:
        return np.ones(self.N) if self.theta is None else np.asarray(self.theta, dtype=np.float64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta"] = None if self.theta is None else list(self.theta)
        return d


@dataclass(frozen=True)
class ExperimentGrid:
    T_set: tuple[int, ...] = (25, 50, 100, 200, 400)
    N_set: tuple[int, ...] = (2, 3, 6, 12, 24)
    rho_set: tuple[float, ...] = (-0.9, -0.75, -0.6, -0.45, -0.3, -0.15, 0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9)
    sigma_set: tuple[float, ...] = (0.0025, 0.005, 0.01, 0.02, 0.04)
    seeds_per_cell: int = 30

    def __post_init__(self):
        for name in ("T_set", "N_set", "rho_set", "sigma_set"):
            if not getattr(self, name):
                raise BenchError(f"{name} must be nonempty")
        if self.seeds_per_cell < 1:
            raise BenchError("seeds_per_cell must be positive")

    def cells(self) -> list[DgpConfig]:
        return [DgpConfig(T, N, rho, s) for T in self.T_set for N in self.N_set
                for rho in self.rho_set for s in self.sigma_set]


# A desk-scale slice of the full grid.
DEFAULT_SLICE = ExperimentGrid(T_set=(400,), N_set=(6,), rho_set=(-0.75, -0.3, 0.0, 0.3, 0.75, 0.9),
                               sigma_set=(0.02,), seeds_per_cell=30)


@dataclass(frozen=True)
class RegressionTraining:
    epochs: int = 750
    batch_size: int = 64
    hidden_dim: int = 64
    n_layers: int = 6
    lr_model: float = 5e-3
    lr_rho: float = 1e-2
    small_n: int = 3
    ignore_epochs_small_n: int = 5
    mpw_outer_iters: int = 10
    mpw_tol: float = 1e-3

    def train_config(self, N: int, seed: int, mode: str = "both") -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            early_stop_patience=self.epochs,  # best-validation selection over the full budget
            batch_size=self.batch_size,
            W=1,
            lr_model=self.lr_model,
            lr_rho=self.lr_rho,
            seed=seed,
            mode=mode,
            rho_dim="scalar",
            ignore_epochs=self.ignore_epochs_small_n if N <= self.small_n else 0,
        )

    def model_spec(self, N: int) -> ModelSpec:
        return ModelSpec("mlp_regressor", N, 1, hidden_dim=self.hidden_dim, n_layers=self.n_layers)


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: DgpConfig, training: RegressionTraining | None = None) -> str:
    payload = {"dgp": cfg.to_dict(), "training": None if training is None else asdict(training)}
    return hashlib.sha256(_canonical(payload).encode()).hexdigest()[:16]


def derive_seed(root: int, cell: str, seed_index: int, stream: str) -> int:
    """Independent 63-bit seed for one stream of one (cell, seed) pair."""
    digest = hashlib.sha256(f"{root}|{cell}|{seed_index}|{stream}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class RegressionDataset:
    X: np.ndarray        # (T, N) train+valid inputs, chronological
    y: np.ndarray        # (T,)
    e: np.ndarray        # (T,) error chain
    X_test: np.ndarray
    y_test: np.ndarray
    e_test: np.ndarray
    n_train: int

    def standardized(self) -> tuple[RegressionDataset, float]:
        """Copy scaled by training-split mean and std (inputs per column); also returns the target std."""
        n = self.n_train
        mx, sx = self.X[:n].mean(axis=0), self.X[:n].std(axis=0)
        sx = np.where(sx > 0, sx, 1.0)
        my, sy = float(self.y[:n].mean()), float(self.y[:n].std())
        sy = sy if sy > 0 else 1.0
        return RegressionDataset((self.X - mx) / sx, (self.y - my) / sy, self.e / sy, (self.X_test - mx) / sx,
                                 (self.y_test - my) / sy, self.e_test / sy, n), sy

    def samples(self) -> tuple[Samples, Samples, Samples]:
        """(train, valid, test) sample sets. Missing predecessors are filled with training means."""
        n = self.n_train
        x_mean = self.X[:n].mean(axis=0)
        y_mean = float(self.y[:n].mean())
        prev_X = np.vstack([x_mean, self.X[:-1]])
        prev_y = np.concatenate([[y_mean], self.y[:-1]])
        has = np.ones(self.y.size, dtype=bool)
        has[0] = False

        def pack(X, pX, y, py, h):
            return Samples(X[:, None, :].copy(), pX.copy(), y[:, None].copy(), py[:, None].copy(), h.copy())

        train = pack(self.X[:n], prev_X[:n], self.y[:n], prev_y[:n], has[:n])
        valid = pack(self.X[n:], prev_X[n:], self.y[n:], prev_y[n:], has[n:])
        tp_X = np.vstack([x_mean, self.X_test[:-1]])
        tp_y = np.concatenate([[y_mean], self.y_test[:-1]])
        th = np.ones(self.y_test.size, dtype=bool)
        th[0] = False
        test = pack(self.X_test, tp_X, self.y_test, tp_y, th)
        return train, valid, test


def regression_mean(cfg: DgpConfig, X: np.ndarray) -> np.ndarray:
    return np.tanh((X @ cfg.theta_vec + 1.0) / math.sqrt(cfg.N))


def generate_regression_dataset(cfg: DgpConfig, rng: np.random.Generator) -> RegressionDataset:
    """Draw inputs, a stationary AR(1) error chain, and an independent test set of ``test_multiplier * T`` rows."""
    T = cfg.T
    X = rng.normal(0.0, cfg.sigma_x, size=(T, cfg.N))
    e = simulate_ar1(cfg.rho, cfg.sigma, T, rng)
    n_test = cfg.test_multiplier * T
    X_test = rng.normal(0.0, cfg.sigma_x, size=(n_test, cfg.N))
    e_test = simulate_ar1(cfg.rho, cfg.sigma, n_test, rng)
    n_valid = max(1, int(round(cfg.valid_frac * T)))
    return RegressionDataset(X, regression_mean(cfg, X) + e, e, X_test, regression_mean(cfg, X_test) + e_test,
                             e_test, T - n_valid)


def synthetic_forecast_frame(T: int = 600, N: int = 3, rho: float = 0.8, sigma: float = 0.5,
                             period: int = 24, seed: int = 0) -> SeriesFrame:
    """Seasonal series plus stationary AR(1) noise, one independent chain and phase per column."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    cols = []
    for _ in range(N):
        phase = rng.uniform(0.0, 2.0 * np.pi)
        cols.append(np.sin(2.0 * np.pi * t / period + phase) + simulate_ar1(rho, sigma, T, rng))
    return SeriesFrame.from_array(np.column_stack(cols), [f"s{i}" for i in range(N)])


@dataclass(frozen=True)
class RunRecord:
    config_hash: str
    cell: dict
    method: str
    seed: int
    test_mse: float | None
    rho_hat: list[float]
    abs_rho_err: float | None
    remaining_autocorrelation: float | None
    rrmse: float | None = None
    diverged: bool = False
    error: str = ""
    wall_clock: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise BenchError(f"unknown method tag {self.method!r}")
        if not self.diverged:
            for name in ("test_mse", "remaining_autocorrelation", "rrmse", "abs_rho_err"):
                v = getattr(self, name)
                if v is not None and not math.isfinite(v):
                    raise BenchError(f"{name} is not finite")

    @property
    def key(self) -> tuple:
        return (self.config_hash, self.seed, METHODS.index(self.method))

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        d["schema"] = RECORD_SCHEMA
        if not include_timing:
            d.pop("wall_clock")
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return _canonical(self.to_dict(include_timing))

    @classmethod
    def from_dict(cls, d: dict) -> RunRecord:
        if d.get("schema") != RECORD_SCHEMA:
            raise BenchError(f"unsupported run record schema {d.get('schema')}")
        d = {k: v for k, v in d.items() if k != "schema"}
        return cls(**d)


def write_records(records, path, include_timing: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json(include_timing) + "\n")


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                if "header" in d:
                    continue
                out.append(RunRecord.from_dict(d))
            except (json.JSONDecodeError, TypeError) as exc:
                raise BenchError(f"{path}:{lineno}: malformed run record ({exc})") from exc
    return out


def _mean_rac(residuals) -> float | None:
    try:
        return diagnose_residuals(residuals).mean
    except StatsError:
        return None


def _regression_run(cfg: DgpConfig, method: str, seed_index: int, root: int,
                    training: RegressionTraining) -> RunRecord:
    started = time.perf_counter()
    chash = config_hash(cfg, training)
    data = generate_regression_dataset(cfg, np.random.default_rng(derive_seed(root, chash, seed_index, "data")))
    scaled, y_scale = data.standardized()
    train, valid, test = scaled.samples()
    tseed = derive_seed(root, chash, seed_index, "train")
    spec = training.model_spec(cfg.N)
    try:
        if method == "mpw":
            tcfg = training.train_config(cfg.N, tseed)
            res = train_mpw(train, valid, spec, tcfg, training.mpw_outer_iters, training.mpw_tol)
            rho_hat = res.rho
            ev = evaluate_eq7(res.model, rho_hat, test)
        else:
            tcfg = training.train_config(cfg.N, tseed, "none" if method == "wo" else "both")
            res = train_eq10(train, valid, spec, tcfg)
            rho_hat = res.rho.value()
            ev = evaluate_eq10(res.model, rho_hat, test, tcfg)
    except TrainingDivergedError as exc:
        return RunRecord(chash, cfg.to_dict(), method, seed_index, None, [], None, None,
                         diverged=True, error=str(exc), wall_clock=time.perf_counter() - started)
    resid = ev.residuals
    return RunRecord(
        config_hash=chash,
        cell=cfg.to_dict(),
        method=method,
        seed=seed_index,
        test_mse=float(np.mean(resid ** 2)) * y_scale ** 2,
        rho_hat=[float(v) for v in rho_hat],
        abs_rho_err=float(abs(cfg.rho - float(np.mean(rho_hat)))),
        remaining_autocorrelation=_mean_rac(resid),
        wall_clock=time.perf_counter() - started,
    )


def _run_task(args) -> RunRecord:
    return _regression_run(*args)


def _execute(tasks, workers: int) -> list[RunRecord]:
    if workers <= 1 or len(tasks) <= 1:
        records = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_task, tasks))
    return sorted(records, key=lambda r: r.key)


def _check_methods(methods) -> tuple[str, ...]:
    given = set(methods)
    if not given or given - set(METHODS):
        raise BenchError(f"methods must be a nonempty subset of {METHODS}")
    return tuple(m for m in METHODS if m in given)


def run_regression_cell(cfg: DgpConfig, methods=("wo", "w"), training: RegressionTraining = RegressionTraining(),
                        seeds=range(30), root_seed: int = 0, workers: int = 1) -> list[RunRecord]:
    """One record per (method, seed); a diverged run is kept with ``diverged=True``."""
    methods = _check_methods(methods)
    tasks = [(cfg, m, int(s), root_seed, training) for s in seeds for m in methods]
    return _execute(tasks, workers)


def run_regression_grid(grid: ExperimentGrid, methods=("wo", "w"), training: RegressionTraining = RegressionTraining(),
                        root_seed: int = 0, workers: int = 1) -> list[RunRecord]:
    methods = _check_methods(methods)
    tasks = [(cfg, m, s, root_seed, training) for cfg in grid.cells()
             for s in range(grid.seeds_per_cell) for m in methods]
    return _execute(tasks, workers)


def run_forecast_experiment(frame: SeriesFrame, model_spec: ModelSpec | None, cfg: TrainConfig,
                            methods=("wo", "w"), seeds=range(5), split: SplitSpec = SplitSpec(),
                            mpw_outer_iters: int = 10) -> list[RunRecord]:
    """Seed-paired forecasting runs on one frame; ``rrmse`` is in original units."""
    methods = _check_methods(methods)
    train, valid, test = split_chronological(frame, split, window=cfg.W)
    chash = hashlib.sha256(_canonical({"frame": hashlib.sha256(frame.values.tobytes()).hexdigest(),
                                       "names": list(frame.names), "train": cfg.to_dict(),
                                       "spec": None if model_spec is None else model_spec.to_dict(),
                                       "split": asdict(split)}).encode()).hexdigest()[:16]
    cell = {"T": frame.T, "N": frame.N, "W": cfg.W}
    records = []
    for s in seeds:
        for m in methods:
            started = time.perf_counter()
            run_cfg = replace(cfg, seed=int(s), mode="none" if m == "wo" else cfg.mode)
            try:
                if m == "mpw":
                    rep = naive_mpw_train(train, valid, model_spec, run_cfg, mpw_outer_iters, test=test)
                else:
                    rep = joint_train(train, valid, test, model_spec, run_cfg)
            except TrainingDivergedError as exc:
                records.append(RunRecord(chash, cell, m, int(s), None, [], None, None, diverged=True,
                                         error=str(exc), wall_clock=time.perf_counter() - started))
                continue
            records.append(RunRecord(chash, cell, m, int(s), rep.test_mse, rep.rho, None,
                                     rep.mean_remaining_autocorrelation, rrmse=rep.test_rrmse,
                                     wall_clock=time.perf_counter() - started))
    return sorted(records, key=lambda r: r.key)


# aggregation -----------------------------------------------------------------------

def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def summarize(records, alpha: float = 0.05) -> dict:
    """Fold run records into per-cell statistics. Input order does not matter."""
    records = sorted(records, key=lambda r: r.key)
    if not records:
        raise BenchError("no records to summarize")
    cells: dict[str, list[RunRecord]] = {}
    for r in records:
        cells.setdefault(r.config_hash, []).append(r)

    cell_reports = []
    for chash, recs in cells.items():
        by_method: dict[str, dict[int, RunRecord]] = {}
        for r in recs:
            if r.seed in by_method.setdefault(r.method, {}):
                raise BenchError(f"duplicate record for cell {chash}, method {r.method}, seed {r.seed}")
            by_method[r.method][r.seed] = r
        seed_sets = {m: set(v) for m, v in by_method.items()}
        first = next(iter(seed_sets.values()))
        if any(s != first for s in seed_sets.values()):
            raise BenchError(f"cell {chash}: methods cover different seed sets; paired comparison impossible")
        ok_seeds = sorted(s for s in first if all(not by_method[m][s].diverged for m in by_method))
        entry = {"config_hash": chash, "cell": recs[0].cell, "n_seeds": len(first),
                 "n_excluded": len(first) - len(ok_seeds), "methods": {}}
        for m in METHODS:
            if m not in by_method:
                continue
            rs = [by_method[m][s] for s in ok_seeds]
            entry["methods"][m] = {
                "mean_test_mse": _mean(r.test_mse for r in rs),
                "mean_rrmse": _mean(r.rrmse for r in rs),
                "mean_abs_rho_err": _mean(r.abs_rho_err for r in rs),
                "mean_abs_remaining_autocorrelation": _mean(
                    None if r.remaining_autocorrelation is None else abs(r.remaining_autocorrelation) for r in rs),
            }
        if "wo" in by_method and "w" in by_method and len(ok_seeds) >= 2:
            wo = [by_method["wo"][s] for s in ok_seeds]
            w = [by_method["w"][s] for s in ok_seeds]
            metric = "rrmse" if all(r.rrmse is not None for r in wo + w) else "test_mse"
            a = [getattr(r, metric) for r in wo]
            b = [getattr(r, metric) for r in w]
            entry["improvement_metric"] = metric
            entry["avg_relative_improvement"] = avg_relative_improvement(a, b)
            try:
                entry["paired_t_test"] = paired_t_test(a, b, alpha).to_dict()
            except StatsError as exc:
                entry["paired_t_test"] = {"error": str(exc)}
        cell_reports.append(entry)

    ok = [r for r in records if not r.diverged]
    curves = []
    for m in METHODS:
        groups: dict[float, list[float]] = {}
        for r in ok:
            if r.method == m and r.abs_rho_err is not None and "rho" in r.cell:
                groups.setdefault(float(r.cell["rho"]), []).append(r.abs_rho_err)
        curves += [{"rho": rho, "method": m, "mean_abs_rho_err": float(np.mean(v))} for rho, v in sorted(groups.items())]

    hist = {}
    for m in METHODS:
        vals = [r.remaining_autocorrelation for r in ok if r.method == m and r.remaining_autocorrelation is not None]
        if vals:
            hist[m] = histogram(vals)

    wo_rac = [r.remaining_autocorrelation for r in ok if r.method == "wo" and r.remaining_autocorrelation is not None]
    try:
        critical = empirical_critical_values(wo_rac).to_dict()
    except StatsError as exc:
        critical = {"error": str(exc)}

    return {"n_records": len(records), "n_diverged": len(records) - len(ok), "cells": cell_reports,
            "abs_rho_err_curve": curves, "remaining_autocorrelation_histogram": hist,
            "critical_values": critical}


def curve_csv(summary: dict) -> str:
    lines = ["rho,method,mean_abs_rho_err"]
    lines += [f"{row['rho']!r},{row['method']},{row['mean_abs_rho_err']!r}" for row in summary["abs_rho_err_curve"]]
    return "\n".join(lines) + "\n"
