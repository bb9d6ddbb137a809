"""Learning the error autocorrelation jointly with model parameters.

Both the model input window and the target are quasi-differenced with a
trainable coefficient ``rho = tanh(raw)``::

    X_t - rho X_{t-1} = f(X_{t-1} - rho X_{t-2}, ..., X_{t-W} - rho X_{t-W-1}; theta)

The missing row X_{t-W-1} of the earliest window is replaced by the training
mean. Forecasts in original units are recovered as ``f(...) + rho * X_{t-1}``.

This module also holds the alternating baseline (fit theta at fixed rho,
re-estimate rho from residuals, repeat) and a fixed-rho grid search.
"""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .models import Adam, ModelGraph, ModelSpec, build, predict
from .series import SeriesError, SeriesFrame, SplitSpec, WindowSpec, fit_normalizer, make_windows
from .stats import (
    StatsError,
    UndefinedStatisticError,
    diagnose_residuals,
    rrmse,
)

logger = logging.getLogger(__name__)

REPORT_FORMAT = "autocorrnet-fit-report"
REPORT_VERSION = 1

MODES = ("none", "input_only", "output_only", "both")
MODE_ALIASES = {"input": "input_only", "output": "output_only"}
VECTOR_RHO_MIN_SERIES = 300
RHO_BOUND = 1.0 - 1e-9


class TrainingError(RuntimeError):
    pass


class TrainingDivergedError(TrainingError):
    pass


def default_rho_grid() -> list[float]:
    """-1, -0.9, then -0.75 .. 0.75 in steps of 0.15, then 0.9, 1."""
    inner = [round(-0.75 + 0.15 * i, 10) for i in range(11)]
    return [-1.0, -0.9] + [0.0 if v == 0 else v for v in inner] + [0.9, 1.0]


def resolve_rho_dim(rule: str, n_series: int) -> int:
    if rule == "scalar":
        return 1
    if rule == "vector":
        return n_series
    if rule == "auto":
        return n_series if n_series >= VECTOR_RHO_MIN_SERIES else 1
    raise ValueError(f"unknown rho dimension rule {rule!r}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 750
    early_stop_patience: int = 25
    batch_size: int = 64
    W: int = 60
    lr_model: float = 3e-3
    lr_rho: float = 1e-2
    seed: int = 0
    mode: str = "both"
    rho_dim: str = "auto"
    freeze_rho: float | None = None
    # epochs at the start whose validation loss is not eligible for best-checkpoint selection
    ignore_epochs: int = 0

    def __post_init__(self):
        mode = MODE_ALIASES.get(self.mode, self.mode)
        if mode not in MODES:
            raise ValueError(f"unknown adjustment mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        for name in ("epochs", "early_stop_patience", "batch_size", "W"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr_model <= 0 or self.lr_rho <= 0:
            raise ValueError("learning rates must be positive")
        if self.early_stop_patience > self.epochs:
            raise ValueError("early_stop_patience cannot exceed epochs")
        if self.freeze_rho is not None and not -1.0 <= self.freeze_rho <= 1.0:
            raise ValueError("frozen rho must lie in [-1, 1]")
        if self.rho_dim not in ("auto", "scalar", "vector"):
            raise ValueError(f"unknown rho dimension rule {self.rho_dim!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def adjust_input(self) -> bool:
        return self.mode in ("input_only", "both")

    @property
    def adjust_output(self) -> bool:
        return self.mode in ("output_only", "both")


class RhoParam:
    """Autocorrelation coefficient: trainable ``raw`` with rho = tanh(raw), or a frozen constant."""

    def __init__(self, dim: int, frozen: float | None = None):
        self.dim = dim
        self.raw = ad.Parameter(np.zeros((1, dim)), name="rho_raw")
        self.frozen = None if frozen is None else np.full((1, dim), float(frozen))

    @property
    def trainable(self) -> bool:
        return self.frozen is None

    def tensor(self) -> ad.Tensor:
        if self.frozen is not None:
            return ad.Tensor(self.frozen)
        return ad.tanh(self.raw)

    def value(self) -> np.ndarray:
        """Effective coefficient, shape (dim,)."""
        if self.frozen is not None:
            return self.frozen[0].copy()
        # tanh rounds to exactly +-1 for |raw| > ~19; keep the strict bound
        return np.clip(np.tanh(self.raw.data[0]), -RHO_BOUND, RHO_BOUND)


# numeric (tape-free) forms ---------------------------------------------------

def _rho_vec(rho, n: int) -> np.ndarray:
    r = np.asarray(rho, dtype=np.float64).reshape(-1)
    if r.size == 1:
        return np.full(n, r[0])
    if r.size != n:
        raise ValueError(f"rho has {r.size} entries but the series has {n}")
    return r


def transform_window(history, preceding, rho, mean=None) -> np.ndarray:
    """Quasi-difference a W x N window (oldest row first).

    Row k becomes X_k - rho * X_{k-1}; the row before the oldest is ``preceding``,
    or ``mean`` when ``preceding`` is None (mean fill).
    """
    H = np.asarray(history, dtype=np.float64)
    prev = mean if preceding is None else preceding
    if prev is None:
        raise ValueError("mean vector required when the preceding row is missing")
    prev = np.asarray(prev, dtype=np.float64).reshape(1, -1)
    shifted = np.vstack([prev, H[:-1]])
    return H - _rho_vec(rho, H.shape[1]) * shifted


def transform_target(x_t, x_prev, rho) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    return x_t - _rho_vec(rho, x_t.shape[-1]) * np.asarray(x_prev, dtype=np.float64)


def recover_forecast(model_output, x_prev, rho) -> np.ndarray:
    out = np.asarray(model_output, dtype=np.float64)
    return out + _rho_vec(rho, out.shape[-1]) * np.asarray(x_prev, dtype=np.float64)


# supervised sample sets --------------------------------------------------------

@dataclass(frozen=True)
class Samples:
    """Aligned arrays for one split, all in model units.

    inputs:       (S, W, D) window rows, oldest first
    inputs_prev:  (S, D) row before the oldest (already mean-filled where missing)
    target:       (S, K)
    target_prev:  (S, K) target one step earlier (mean-filled where missing)
    has_prev_target: (S,) False where target_prev or the lagged window holds a mean fill
    input_mean:   (D,) or None. When set, the quasi-differenced window always
                  uses this mean in place of the row before the oldest, so the
                  model sees exactly W observed rows.
    """

    inputs: np.ndarray
    inputs_prev: np.ndarray
    target: np.ndarray
    target_prev: np.ndarray
    has_prev_target: np.ndarray
    input_mean: np.ndarray | None = None

    def __post_init__(self):
        S = self.inputs.shape[0]
        for name in ("inputs_prev", "target", "target_prev", "has_prev_target"):
            if getattr(self, name).shape[0] != S:
                raise ValueError(f"{name} has {getattr(self, name).shape[0]} rows, expected {S}")
        if S == 0:
            raise ValueError("empty sample set")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def window(self) -> int:
        return self.inputs.shape[1]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[2]

    @property
    def output_dim(self) -> int:
        return self.target.shape[1]

    def flat_inputs(self) -> np.ndarray:
        return self.inputs.reshape(len(self), -1)

    def flat_shifted(self, mean_fill: bool = False) -> np.ndarray:
        """Window lagged by one step: row k holds the input row k-1.

        With ``mean_fill`` and an ``input_mean`` the oldest slot holds the mean.
        """
        prev = self.inputs_prev
        if mean_fill and self.input_mean is not None:
            prev = np.broadcast_to(self.input_mean, prev.shape)
        shifted = np.concatenate([prev[:, None, :], self.inputs[:, :-1, :]], axis=1)
        return shifted.reshape(len(self), -1)

    def select(self, idx) -> Samples:
        return Samples(self.inputs[idx], self.inputs_prev[idx], self.target[idx],
                       self.target_prev[idx], self.has_prev_target[idx], self.input_mean)


def forecast_samples(values: np.ndarray, W: int, start: int, stop: int, mean: np.ndarray) -> Samples:
    frame = SeriesFrame.from_array(values)
    win = make_windows(frame, WindowSpec(W), start, stop)
    # the two-pass objective needs the full lagged window, so mean-filled rows count as missing
    return Samples(win.history, win.filled(mean), win.target, win.history[:, -1, :].copy(),
                   ~win.mean_fill, np.asarray(mean, dtype=np.float64))


# training core -------------------------------------------------------------------

@dataclass
class _Batch:
    x: np.ndarray
    shifted: np.ndarray
    y: np.ndarray
    y_prev: np.ndarray


def _batch(samples_flat, idx) -> _Batch:
    x, shifted, y, y_prev = samples_flat
    return _Batch(x[idx], shifted[idx], y[idx], y_prev[idx])


def _flatten(samples: Samples, mean_fill: bool):
    return samples.flat_inputs(), samples.flat_shifted(mean_fill), samples.target, samples.target_prev


def _expand_rho(rho: ad.Tensor, width: int, rows: int) -> ad.Tensor:
    d = rho.shape[1]
    if width % d:
        raise ad.ShapeError(f"rho of dimension {d} cannot cover {width} columns")
    row = rho if width == d else ad.tile_cols(rho, width // d)
    return ad.repeat_rows(row, rows)


def _eq10_loss(model: ModelGraph, b: _Batch, rho: ad.Tensor | None, cfg: TrainConfig):
    """MSE of the quasi-differenced target against the model on the quasi-differenced window."""
    x = ad.Tensor(b.x)
    y = ad.Tensor(b.y)
    if rho is not None and cfg.adjust_input:
        x = ad.sub(x, ad.mul(_expand_rho(rho, b.x.shape[1], b.x.shape[0]), ad.Tensor(b.shifted)))
    if rho is not None and cfg.adjust_output:
        y = ad.sub(y, ad.mul(_expand_rho(rho, b.y.shape[1], b.y.shape[0]), ad.Tensor(b.y_prev)))
    return ad.mean(ad.square(ad.sub(predict(model, x), y)))


def _eq7_loss(model: ModelGraph, b: _Batch, rho: np.ndarray):
    """Two-pass objective: (y_t - rho y_{t-1}) vs f(window_t) - rho f(window_{t-1}), rho fixed."""
    rho_y = np.broadcast_to(_rho_vec(rho, b.y.shape[1]), b.y.shape)
    pred = predict(model, ad.Tensor(b.x))
    if not np.any(rho):
        return ad.mean(ad.square(ad.sub(pred, ad.Tensor(b.y))))
    lag = predict(model, ad.Tensor(b.shifted))
    combined = ad.sub(pred, ad.mul(ad.Tensor(rho_y), lag))
    return ad.mean(ad.square(ad.sub(combined, ad.Tensor(b.y - rho_y * b.y_prev))))


@dataclass
class TrainResult:
    model: ModelGraph
    rho: RhoParam
    train_loss: list[float]
    valid_loss: list[float]
    best_epoch: int
    epochs_run: int
    rho_curve: list[list[float]] = field(default_factory=list)


def _epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return np.random.default_rng([seed, 1, epoch]).permutation(n)


def _fit(model: ModelGraph, rho: RhoParam | None, train: Samples, valid: Samples, cfg: TrainConfig,
         loss_fn, lr_model: float, mask_train=None, mask_valid=None, mean_fill: bool = True) -> TrainResult:
    """Mini-batch Adam with best-validation checkpointing and early stopping."""
    groups = [(model.parameters, lr_model)]
    if rho is not None and rho.trainable:
        groups.append(([rho.raw], cfg.lr_rho))
    opt = Adam(groups)
    tr = _flatten(train if mask_train is None else train.select(mask_train), mean_fill)
    va = _flatten(valid if mask_valid is None else valid.select(mask_valid), mean_fill)
    n = tr[0].shape[0]
    if n == 0 or va[0].shape[0] == 0:
        raise TrainingError("no usable training or validation samples")
    va_batch = _batch(va, slice(None))
    best = math.inf
    best_state = model.state()
    best_rho = None if rho is None else rho.raw.data.copy()
    best_epoch = 0
    since_best = 0
    train_curve, valid_curve, rho_curve = [], [], []
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        order = _epoch_order(cfg.seed, epoch, n)
        total = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            b = _batch(tr, order[start:start + cfg.batch_size])
            opt.zero_grad()
            try:
                with ad.Tape() as tape:
                    loss = loss_fn(model, b)
                ad.backward(tape, loss)
                opt.step()
            except ad.NonFiniteError as exc:
                raise TrainingDivergedError(f"non-finite value at epoch {epoch}, batch {batches}: {exc}") from exc
            total += float(loss.data)
            batches += 1
        train_curve.append(total / batches)
        try:
            vloss = float(loss_fn(model, va_batch).data)
        except ad.NonFiniteError as exc:
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}") from exc
        if not math.isfinite(train_curve[-1]):
            raise TrainingDivergedError(f"non-finite training loss at epoch {epoch}")
        valid_curve.append(vloss)
        if rho is not None:
            rho_curve.append(rho.value().tolist())
        if epoch <= cfg.ignore_epochs:
            continue
        if vloss < best:
            best = vloss
            best_state = model.state()
            best_rho = None if rho is None else rho.raw.data.copy()
            best_epoch = epoch
            since_best = 0
        else:
            since_best += 1
            if since_best >= cfg.early_stop_patience:
                break
    model.load_state(best_state)
    if rho is not None and best_rho is not None:
        rho.raw.assign(best_rho)
    return TrainResult(model, rho, train_curve, valid_curve, best_epoch, epoch, rho_curve)


def default_model_spec(samples: Samples, kind: str = "window_forecaster", **kw) -> ModelSpec:
    return ModelSpec(kind, samples.window * samples.input_dim, samples.output_dim, **kw)


def _init_model(spec: ModelSpec, cfg: TrainConfig) -> ModelGraph:
    return build(spec, np.random.default_rng([cfg.seed, 0]), seed=cfg.seed)


def train_eq10(train: Samples, valid: Samples, spec: ModelSpec, cfg: TrainConfig,
               model: ModelGraph | None = None, rho: RhoParam | None = None) -> TrainResult:
    """Joint (theta, rho) fit on sample sets. ``mode='none'`` never builds rho terms."""
    if model is None:
        model = _init_model(spec, cfg)
    if cfg.mode == "none":
        res = _fit(model, None, train, valid, cfg, lambda m, b: _eq10_loss(m, b, None, cfg), cfg.lr_model)
        res.rho = RhoParam(1, frozen=0.0)
        return res
    if rho is None:
        dim = resolve_rho_dim(cfg.rho_dim, train.output_dim)
        if dim != 1 and not (dim == train.output_dim == train.input_dim):
            raise ValueError("per-series rho needs matching input and output series")
        rho = RhoParam(dim, cfg.freeze_rho)

    def loss_fn(m, b):
        return _eq10_loss(m, b, rho.tensor(), cfg)

    return _fit(model, rho, train, valid, cfg, loss_fn, cfg.lr_model)


@dataclass
class Evaluation:
    forecast: np.ndarray            # recovered forecasts, model units
    actual: np.ndarray
    transformed_forecast: np.ndarray
    transformed_target: np.ndarray

    @property
    def residuals(self) -> np.ndarray:
        return self.actual - self.forecast


def evaluate_eq10(model: ModelGraph, rho_value: np.ndarray, samples: Samples, cfg: TrainConfig) -> Evaluation:
    x = samples.flat_inputs()
    r = np.asarray(rho_value, dtype=np.float64).reshape(-1)
    r_in = r if cfg.adjust_input else np.zeros_like(r)
    r_out = r if cfg.adjust_output else np.zeros_like(r)
    if np.any(r_in):
        width = x.shape[1]
        x = x - np.tile(r_in, width // r_in.size) * samples.flat_shifted(mean_fill=True)
    out = predict(model, x).data
    k = samples.output_dim
    r_out_k = np.tile(r_out, k // r_out.size)
    return Evaluation(
        forecast=out + r_out_k * samples.target_prev,
        actual=samples.target,
        transformed_forecast=out,
        transformed_target=samples.target - r_out_k * samples.target_prev,
    )


def evaluate_eq7(model: ModelGraph, rho_value: np.ndarray, samples: Samples) -> Evaluation:
    """Forecast f(window_t) + rho (y_{t-1} - f(window_{t-1})) of the alternating baseline."""
    k = samples.output_dim
    r = np.tile(np.asarray(rho_value, dtype=np.float64).reshape(-1), 1)
    r = np.tile(r, k // r.size)
    out = predict(model, samples.flat_inputs()).data
    lag = predict(model, samples.flat_shifted()).data
    forecast = out + r * (samples.target_prev - lag)
    return Evaluation(forecast, samples.target, out - r * lag, samples.target - r * samples.target_prev)


def estimate_rho(residuals: np.ndarray, dim: int) -> np.ndarray:
    """Regress e_t on e_{t-1}: pooled across series for a scalar, per series for a vector."""
    E = np.asarray(residuals, dtype=np.float64)
    if E.ndim == 1:
        E = E[:, None]
    if E.shape[0] < 2:
        raise StatsError("need at least two residuals")
    num = (E[1:] * E[:-1]).sum(axis=0)
    den = (E[:-1] ** 2).sum(axis=0)
    if dim == 1:
        if den.sum() == 0:
            raise UndefinedStatisticError("residuals are all zero")
        r = np.array([num.sum() / den.sum()])
    else:
        if np.any(den == 0):
            raise UndefinedStatisticError("a residual series is all zero")
        r = num / den
    return np.clip(r, -RHO_BOUND, RHO_BOUND)


@dataclass
class MPWResult:
    model: ModelGraph
    rho: np.ndarray
    rho_path: list[list[float]]
    train_loss: list[float]
    valid_loss: list[float]
    outer_iterations: int
    converged: bool


def train_mpw(train: Samples, valid: Samples, spec: ModelSpec, cfg: TrainConfig,
              max_outer_iters: int = 10, tol: float = 1e-3, lr_model: float | None = None) -> MPWResult:
    """Alternating baseline.

    Start at rho = 0 and fit theta; then each outer iteration re-estimates rho
    from the training residuals e_t = y_t - f(window_t) and refits theta (warm
    start, fresh optimizer) on the two-pass objective at that fixed rho. Samples
    with no real predecessor target are left out whenever rho != 0.
    """
    lr = cfg.lr_model if lr_model is None else lr_model
    model = _init_model(spec, cfg)
    dim = resolve_rho_dim(cfg.rho_dim, train.output_dim)
    rho = np.zeros(dim)
    curves_t, curves_v = [], []

    def fit_at(r):
        loss_fn = lambda m, b: _eq7_loss(m, b, r)  # noqa: E731
        mt = mv = None
        if np.any(r):
            mt, mv = train.has_prev_target, valid.has_prev_target
        res = _fit(model, None, train, valid, cfg, loss_fn, lr, mt, mv, mean_fill=False)
        curves_t.extend(res.train_loss)
        curves_v.extend(res.valid_loss)

    fit_at(rho)
    path = [rho.tolist()]
    converged = False
    it = 0
    for it in range(1, max_outer_iters + 1):
        resid = train.target - predict(model, train.flat_inputs()).data
        new = estimate_rho(resid, dim)
        delta = float(np.max(np.abs(new - rho)))
        rho = new
        path.append(rho.tolist())
        fit_at(rho)
        if delta < tol:
            converged = True
            break
    return MPWResult(model, rho, path, curves_t, curves_v, it, converged)


# reports ---------------------------------------------------------------------------

@dataclass
class FitReport:
    method: str
    mode: str
    rho: list[float]
    rho_raw: list[float] | None
    train_loss: list[float]
    valid_loss: list[float]
    best_epoch: int
    epochs_run: int
    remaining_autocorrelation: list[float | None]
    mean_remaining_autocorrelation: float | None
    durbin_watson: list[float | None]
    test_rrmse: float | None
    test_rrmse_transformed: float | None
    test_mse: float
    seed: int
    config: dict
    checkpoint: dict
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)
    # evaluation-split residuals in original units, (rows, N); not serialized
    residuals: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        d.pop("residuals")
        d["format"] = REPORT_FORMAT
        d["version"] = REPORT_VERSION
        if not include_timing:
            # wall-clock time would break byte-for-byte reproducibility of emitted files
            d.pop("wall_clock")
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=1, sort_keys=True)

    def save(self, path, include_timing: bool = False) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json(include_timing) + "\n")

    def save_loss_csv(self, path, which: str = "train") -> None:
        curve = self.train_loss if which == "train" else self.valid_loss
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss\n")
            for i, v in enumerate(curve, start=1):
                fh.write(f"{i},{v!r}\n")


def _safe_rrmse(actual, forecast) -> float | None:
    try:
        return rrmse(actual, forecast)
    except StatsError:
        return None


def _report(method, cfg, model, rho_value, rho_raw, train_loss, valid_loss, best_epoch, epochs_run,
            ev: Evaluation, actual_units, forecast_units, started, extra=None) -> FitReport:
    try:
        diag = diagnose_residuals(actual_units - forecast_units)
        per, mean_rac, dw = diag.per_series, diag.mean, diag.durbin_watson
    except StatsError:
        per, mean_rac, dw = [], None, []
    return FitReport(
        method=method,
        mode=cfg.mode,
        rho=[float(v) for v in np.asarray(rho_value).reshape(-1)],
        rho_raw=None if rho_raw is None else [float(v) for v in np.asarray(rho_raw).reshape(-1)],
        train_loss=train_loss,
        valid_loss=valid_loss,
        best_epoch=best_epoch,
        epochs_run=epochs_run,
        remaining_autocorrelation=per,
        mean_remaining_autocorrelation=mean_rac,
        durbin_watson=dw,
        test_rrmse=_safe_rrmse(actual_units, forecast_units),
        test_rrmse_transformed=_safe_rrmse(ev.transformed_target, ev.transformed_forecast),
        test_mse=float(np.mean((actual_units - forecast_units) ** 2)),
        seed=cfg.seed,
        config=cfg.to_dict(),
        checkpoint=model.to_checkpoint({"rho": [float(v) for v in np.asarray(rho_value).reshape(-1)]}),
        wall_clock=time.perf_counter() - started,
        extra=extra or {},
        residuals=np.asarray(actual_units - forecast_units),
    )


@dataclass
class ForecastData:
    """Normalized sample sets for the three splits plus the normalizer."""

    train: Samples
    valid: Samples
    test: Samples
    mean: np.ndarray
    std: np.ndarray

    def to_units(self, z: np.ndarray) -> np.ndarray:
        return z * self.std + self.mean


def prepare_forecast_data(train: SeriesFrame, valid: SeriesFrame, test: SeriesFrame, W: int) -> ForecastData:
    if not (train.names == valid.names == test.names):
        raise SeriesError("splits must share column names")
    for name, part in (("train", train), ("valid", valid), ("test", test)):
        if part.T < W + 2:
            raise SeriesError(f"{name} split has {part.T} rows; window length {W} needs at least {W + 2}")
    norm = fit_normalizer(train)
    full = norm.apply(np.vstack([train.values, valid.values, test.values]))
    mean_z = norm.apply(norm.mean)
    b1 = train.T
    b2 = b1 + valid.T
    return ForecastData(
        forecast_samples(full, W, 0, b1, mean_z),
        forecast_samples(full, W, b1, b2, mean_z),
        forecast_samples(full, W, b2, full.shape[0], mean_z),
        np.asarray(norm.mean), np.asarray(norm.std),
    )


def joint_train(train: SeriesFrame, valid: SeriesFrame, test: SeriesFrame,
                model_spec: ModelSpec | None = None, cfg: TrainConfig = TrainConfig()) -> FitReport:
    """Fit a window forecaster with rho learned jointly (or frozen / disabled per ``cfg``)."""
    started = time.perf_counter()
    data = prepare_forecast_data(train, valid, test, cfg.W)
    spec = model_spec or default_model_spec(data.train)
    res = train_eq10(data.train, data.valid, spec, cfg)
    rho_value = res.rho.value()
    ev = evaluate_eq10(res.model, rho_value, data.test, cfg)
    return _report("w/o" if cfg.mode == "none" else "w", cfg, res.model, rho_value,
                   res.rho.raw.data if res.rho.trainable and cfg.mode != "none" else None,
                   res.train_loss, res.valid_loss, res.best_epoch, res.epochs_run, ev,
                   data.to_units(ev.actual), data.to_units(ev.forecast), started)


def naive_mpw_train(train: SeriesFrame, valid: SeriesFrame, model_spec: ModelSpec | None = None,
                    cfg: TrainConfig = TrainConfig(), max_outer_iters: int = 10,
                    test: SeriesFrame | None = None, tol: float = 1e-3) -> FitReport:
    """Alternating (coordinate-descent) baseline on forecasting splits.

    Without ``test`` the diagnostics are computed on the validation split.
    """
    started = time.perf_counter()
    data = prepare_forecast_data(train, valid, test if test is not None else valid, cfg.W)
    spec = model_spec or default_model_spec(data.train)
    res = train_mpw(data.train, data.valid, spec, cfg, max_outer_iters, tol)
    ev = evaluate_eq7(res.model, res.rho, data.test)
    return _report("mpw", replace(cfg, mode="both"), res.model, res.rho, None, res.train_loss, res.valid_loss,
                   0, len(res.train_loss), ev, data.to_units(ev.actual), data.to_units(ev.forecast), started,
                   extra={"rho_path": res.rho_path, "outer_iterations": res.outer_iterations,
                          "converged": res.converged})


def grid_search_rho(train: SeriesFrame, valid: SeriesFrame, model_spec: ModelSpec | None = None,
                    cfg: TrainConfig = TrainConfig(), grid=None) -> tuple[float, list[dict]]:
    """Train with rho frozen at each grid value; score by validation RRMSE of recovered forecasts.

    Every grid point uses the same seed, so scores do not depend on grid order.
    """
    grid = default_rho_grid() if grid is None else [float(g) for g in grid]
    if not grid:
        raise ValueError("empty grid")
    if any(not -1.0 <= g <= 1.0 for g in grid):
        raise ValueError("grid values must lie in [-1, 1]")
    # the test split is not used; pass valid as a stand-in
    data = prepare_forecast_data(train, valid, valid, cfg.W)
    spec = model_spec or default_model_spec(data.train)
    table = []
    for g in grid:
        run_cfg = replace(cfg, mode="both", freeze_rho=g, rho_dim="scalar")
        res = train_eq10(data.train, data.valid, spec, run_cfg)
        ev = evaluate_eq10(res.model, res.rho.value(), data.valid, run_cfg)
        score = rrmse(data.to_units(ev.actual), data.to_units(ev.forecast))
        table.append({"rho": g, "valid_rrmse": score, "best_epoch": res.best_epoch})
    best = min(table, key=lambda row: (row["valid_rrmse"], abs(row["rho"])))
    return best["rho"], table
