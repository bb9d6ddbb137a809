"""Residual diagnostics, AR(1) theory and simulation, forecast metrics and significance tests."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import ar1_filter, lag_sums


class StatsError(ValueError):
    pass


class UndefinedStatisticError(StatsError):
    """The statistic has a zero denominator (e.g. an all-zero residual prefix)."""


class DegenerateVarianceError(StatsError):
    pass


def _series(e) -> np.ndarray:
    e = np.ascontiguousarray(e, dtype=np.float64).reshape(-1)
    if e.size < 2:
        raise StatsError(f"need at least 2 residuals, got {e.size}")
    if not np.isfinite(e).all():
        raise StatsError("residuals contain non-finite values")
    return e


def _scaled_lag_sums(e: np.ndarray):
    # both ratios are scale-free; a power-of-two rescale is exact and keeps tiny or huge series from
    # underflowing or overflowing when squared
    peak = float(np.abs(e).max())
    if peak > 0.0:
        e = np.ldexp(e, -np.frexp(peak)[1])
    return lag_sums(e)


def residual_autocorrelation(e) -> float:
    """Least-squares slope of e_t on e_{t-1}.

    sum_{t=2..T} e_t e_{t-1} / sum_{t=1..T-1} e_t^2, with the denominator
    taken over the first T-1 residuals exactly as written (not the full sum).
    """
    cross, head, _, _ = _scaled_lag_sums(_series(e))
    if head == 0.0:
        raise UndefinedStatisticError("residual autocorrelation undefined: first T-1 residuals are all zero")
    return cross / head


def mean_residual_autocorrelation(residuals) -> float:
    """Average of the per-column estimates over columns where it is defined."""
    R = np.asarray(residuals, dtype=np.float64)
    if R.ndim == 1:
        R = R[:, None]
    values = []
    for j in range(R.shape[1]):
        try:
            values.append(residual_autocorrelation(R[:, j]))
        except UndefinedStatisticError:
            continue
    if not values:
        raise UndefinedStatisticError("residual autocorrelation undefined for every series")
    return float(np.mean(values))


def per_series_autocorrelation(residuals) -> list[float | None]:
    R = np.asarray(residuals, dtype=np.float64)
    if R.ndim == 1:
        R = R[:, None]
    out = []
    for j in range(R.shape[1]):
        try:
            out.append(residual_autocorrelation(R[:, j]))
        except UndefinedStatisticError:
            out.append(None)
    return out


def durbin_watson(e) -> float:
    _, _, diff, total = _scaled_lag_sums(_series(e))
    if total == 0.0:
        raise UndefinedStatisticError("Durbin-Watson undefined for a zero-energy series")
    return diff / total


def _check_rho(rho: float) -> None:
    if not abs(rho) < 1.0:
        raise StatsError(f"|rho| must be < 1 for a stationary AR(1) process, got {rho}")


def ar1_covariance(rho: float, sigma: float, delta: int) -> float:
    """Cov(e_t, e_{t-delta}) = rho^delta sigma^2 / (1 - rho^2) for a stationary AR(1)."""
    _check_rho(rho)
    if sigma < 0:
        raise StatsError("sigma must be non-negative")
    if delta < 0 or int(delta) != delta:
        raise StatsError("delta must be a non-negative integer")
    return rho ** int(delta) * sigma * sigma / (1.0 - rho * rho)


def simulate_ar1(rho: float, sigma: float, T: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) path e_t = rho e_{t-1} + eps_t, eps_t ~ N(0, sigma^2).

    e_0 is drawn from the stationary law N(0, sigma^2 / (1 - rho^2)); no burn-in.
    """
    _check_rho(rho)
    if sigma < 0:
        raise StatsError("sigma must be non-negative")
    if T < 1:
        raise StatsError("T must be >= 1")
    z = rng.standard_normal(T)
    innov = sigma * z
    innov[0] = sigma / math.sqrt(1.0 - rho * rho) * z[0]
    return ar1_filter(innov, float(rho))


def rrmse(actual, forecast) -> float:
    """Forecast RMSE relative to predicting each series' mean over the evaluation set."""
    A = np.asarray(actual, dtype=np.float64)
    F = np.asarray(forecast, dtype=np.float64)
    if A.shape != F.shape:
        raise StatsError(f"shape mismatch: actual {A.shape} vs forecast {F.shape}")
    if A.ndim == 1:
        A, F = A[:, None], F[:, None]
    denom = float(((A - A.mean(axis=0)) ** 2).sum())
    if denom == 0.0:
        raise StatsError("RRMSE undefined: actual values are constant")
    return math.sqrt(float(((A - F) ** 2).sum())) / math.sqrt(denom)


def avg_relative_improvement(rrmse_wo, rrmse_w) -> float:
    """Mean over datasets of (wo - w) / wo, in percent."""
    wo = np.asarray(rrmse_wo, dtype=np.float64).reshape(-1)
    w = np.asarray(rrmse_w, dtype=np.float64).reshape(-1)
    if wo.size != w.size:
        raise StatsError(f"length mismatch: {wo.size} baseline vs {w.size} adjusted")
    if wo.size == 0:
        raise StatsError("no datasets given")
    if np.any(wo <= 0):
        raise StatsError("baseline errors must be positive")
    return float(np.mean((wo - w) / wo) * 100.0)


DEFAULT_TAILS = (0.10, 0.05, 0.01)


@dataclass(frozen=True)
class CriticalValueTable:
    """Right-tail thresholds of remaining autocorrelation, keyed by tail probability."""

    thresholds: dict[float, float]
    n_samples: int | None
    source: str

    def verdict(self, value: float) -> dict[float, bool]:
        """Tail probability -> whether ``value`` reaches that threshold."""
        return {tail: value >= thr for tail, thr in sorted(self.thresholds.items(), reverse=True)}

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "n_samples": self.n_samples,
            "quantile_convention": "linear interpolation between order statistics (type 7)",
            "thresholds": [{"tail": t, "threshold": v} for t, v in sorted(self.thresholds.items(), reverse=True)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> CriticalValueTable:
        return cls({float(e["tail"]): float(e["threshold"]) for e in d["thresholds"]}, d.get("n_samples"), d["source"])


DEFAULT_CRITICAL_VALUES = CriticalValueTable({0.10: 0.857, 0.05: 0.928, 0.01: 0.984}, None, "paper_default")

MIN_CRITICAL_SAMPLES = 20


def empirical_critical_values(samples, tails=DEFAULT_TAILS) -> CriticalValueTable:
    """Right-tail thresholds: the (1 - tail) quantile, linear interpolation (type 7)."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size < MIN_CRITICAL_SAMPLES:
        raise StatsError(f"need at least {MIN_CRITICAL_SAMPLES} samples, got {x.size}")
    if not np.isfinite(x).all():
        raise StatsError("samples contain non-finite values")
    thresholds = {}
    for tail in tails:
        if not 0.0 < tail < 1.0:
            raise StatsError(f"tail probability must lie in (0, 1), got {tail}")
        thresholds[float(tail)] = float(np.quantile(x, 1.0 - tail, method="linear"))
    return CriticalValueTable(thresholds, int(x.size), "recomputed")


# Student t distribution via the regularized incomplete beta function.

def _betacf(a: float, b: float, x: float) -> float:
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = tiny if abs(d) < tiny else d
    d = 1.0 / d
    h = d
    for m in range(1, 500):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = tiny if abs(d) < tiny else d
        c = 1.0 + aa / c
        c = tiny if abs(c) < tiny else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b) by Lentz's continued fraction."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|) for T ~ Student t(df)."""
    return betainc(0.5 * df, 0.5, df / (df + t * t))


def student_t_cdf(t: float, df: float) -> float:
    half = 0.5 * student_t_sf2(t, df)
    return 1.0 - half if t >= 0 else half


@dataclass(frozen=True)
class PairedTTest:
    t: float
    p_value: float
    df: int
    mean_difference: float
    significant: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"t": self.t, "p_value": self.p_value, "df": self.df,
                "mean_difference": self.mean_difference, "significant": self.significant, "note": self.note}


def paired_t_test(a, b, alpha: float = 0.05) -> PairedTTest:
    """Two-sided paired t-test of mean(a - b) = 0.

    Identical samples give t = 0, p = 1 (flagged in ``note``); a constant but
    nonzero difference raises :class:`DegenerateVarianceError`.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.size != b.size:
        raise StatsError(f"length mismatch: {a.size} vs {b.size}")
    n = a.size
    if n < 2:
        raise StatsError("paired t-test needs at least 2 pairs")
    d = a - b
    mean_d = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        if mean_d == 0.0:
            return PairedTTest(0.0, 1.0, n - 1, 0.0, False, note="identical samples; t undefined, treated as 0")
        raise DegenerateVarianceError("differences have zero variance")
    t = mean_d / (sd / math.sqrt(n))
    p = student_t_sf2(t, n - 1)
    return PairedTTest(t, p, n - 1, mean_d, p < alpha)


def histogram(values, bins: int = 20, lo: float = -1.0, hi: float = 1.0) -> dict:
    """Equal-width bin counts on [lo, hi]; the last bin is closed; out-of-range values are counted separately."""
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(x[(x >= lo) & (x <= hi)], bins=edges)
    return {"edges": edges.tolist(), "counts": counts.astype(int).tolist(),
            "below": int((x < lo).sum()), "above": int((x > hi).sum())}


@dataclass
class ResidualDiagnostics:
    per_series: list[float | None]
    mean: float | None
    durbin_watson: list[float | None] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"remaining_autocorrelation": self.per_series, "mean_remaining_autocorrelation": self.mean,
                "durbin_watson": self.durbin_watson}


def diagnose_residuals(residuals) -> ResidualDiagnostics:
    R = np.asarray(residuals, dtype=np.float64)
    if R.ndim == 1:
        R = R[:, None]
    per = per_series_autocorrelation(R)
    defined = [v for v in per if v is not None]
    dws = []
    for j in range(R.shape[1]):
        try:
            dws.append(durbin_watson(R[:, j]))
        except UndefinedStatisticError:
            dws.append(None)
    return ResidualDiagnostics(per, float(np.mean(defined)) if defined else None, dws)
