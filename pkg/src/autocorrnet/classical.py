"""OLS, Cochrane-Orcutt and Prais-Winsten estimators for linear models with AR(1) errors."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .stats import residual_autocorrelation

RHO_BOUND = 1.0 - 1e-9


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class LinearFit:
    coef: np.ndarray
    rho: float
    iterations: int
    resid_var: float
    n_obs: int
    method: str
    converged: bool = True
    names: tuple[str, ...] = ()

    def predict(self, X, intercept: bool = True) -> np.ndarray:
        return _design(X, intercept) @ self.coef

    def to_dict(self) -> dict:
        return {"method": self.method, "coef": self.coef.tolist(), "names": list(self.names),
                "rho": self.rho, "iterations": self.iterations, "resid_var": self.resid_var,
                "n_obs": self.n_obs, "converged": self.converged}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def __str__(self) -> str:
        names = self.names or tuple(f"b{i}" for i in range(self.coef.size))
        width = max(len(n) for n in names)
        lines = [f"{self.method}: n={self.n_obs} rho={self.rho:.6f} iterations={self.iterations}"
                 f"{'' if self.converged else ' (NOT converged)'}"]
        lines += [f"  {n:<{width}}  {c: .8f}" for n, c in zip(names, self.coef)]
        lines.append(f"  residual variance {self.resid_var:.6g}")
        return "\n".join(lines)


def _design(X, intercept: bool) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


def _solve(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, k = X.shape
    if n < k:
        raise RankDeficientError(f"{n} rows cannot identify {k} coefficients")
    Q, R = np.linalg.qr(X)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.min() <= max(n, k) * np.finfo(float).eps * diag.max():
        raise RankDeficientError("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    return beta, y - X @ beta


def _resid_var(resid: np.ndarray, k: int) -> float:
    dof = resid.size - k
    return float(resid @ resid / dof) if dof > 0 else 0.0


def ols_fit(X, y, intercept: bool = False) -> LinearFit:
    """Least squares via Householder QR. ``intercept`` prepends a column of ones."""
    Xd = _design(X, intercept)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != Xd.shape[0]:
        raise ValueError(f"X has {Xd.shape[0]} rows but y has {y.size}")
    beta, resid = _solve(Xd, y)
    return LinearFit(beta, 0.0, 1, _resid_var(resid, Xd.shape[1]), y.size, "ols")


def quasi_difference(X: np.ndarray, y: np.ndarray, rho: float, keep_first: bool) -> tuple[np.ndarray, np.ndarray]:
    """Rows x_t - rho x_{t-1}; the first row is dropped or kept scaled by sqrt(1 - rho^2)."""
    Xs = X[1:] - rho * X[:-1]
    ys = y[1:] - rho * y[:-1]
    if keep_first:
        s = math.sqrt(1.0 - rho * rho)
        Xs = np.vstack([s * X[:1], Xs])
        ys = np.concatenate([[s * y[0]], ys])
    return Xs, ys


def _clip(rho: float) -> float:
    return max(-RHO_BOUND, min(RHO_BOUND, rho))


def _ar1_fit(X, y, intercept, keep_first, iterate, tol, max_iters, rho, method) -> LinearFit:
    Xd = _design(X, intercept)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != Xd.shape[0]:
        raise ValueError(f"X has {Xd.shape[0]} rows but y has {y.size}")
    if y.size < 3:
        raise ValueError("at least 3 observations are required")
    k = Xd.shape[1]

    def fit_at(r):
        Xs, ys = quasi_difference(Xd, y, r, keep_first)
        return _solve(Xs, ys)

    if rho is not None:
        if not abs(rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {rho}")
        beta, resid = fit_at(float(rho))
        return LinearFit(beta, float(rho), 0, _resid_var(resid, k), resid.size, method, True)

    beta, _ = _solve(Xd, y)
    r = _clip(residual_autocorrelation(y - Xd @ beta))
    beta, resid = fit_at(r)
    iterations = 1
    converged = True
    if iterate:
        converged = False
        while iterations < max_iters:
            r_new = _clip(residual_autocorrelation(y - Xd @ beta))
            done = abs(r_new - r) < tol
            r = r_new
            beta, resid = fit_at(r)
            iterations += 1
            if done:
                converged = True
                break
        if not converged:
            warnings.warn(f"{method}: rho did not converge in {max_iters} iterations", RuntimeWarning, stacklevel=3)
    return LinearFit(beta, r, iterations, _resid_var(resid, k), resid.size, method, converged)


def cochrane_orcutt(X, y, iterate: bool = True, tol: float = 1e-6, max_iters: int = 50,
                    intercept: bool = False, rho: float | None = None) -> LinearFit:
    """Cochrane-Orcutt: OLS, estimate rho from residuals, refit on quasi-differenced rows.

    The first observation is discarded, so ``n_obs == T - 1``. With
    ``iterate=False`` exactly one transform-and-refit pass is made. Passing
    ``rho`` skips estimation and fits at that fixed value.
    """
    return _ar1_fit(X, y, intercept, False, iterate, tol, max_iters, rho,
                    "cochrane_orcutt" if iterate else "cochrane_orcutt_single")


def prais_winsten(X, y, tol: float = 1e-6, max_iters: int = 50, intercept: bool = False,
                  rho: float | None = None, iterate: bool = True) -> LinearFit:
    """Prais-Winsten: as iterated Cochrane-Orcutt but the first row is kept, scaled by sqrt(1 - rho^2)."""
    return _ar1_fit(X, y, intercept, True, iterate, tol, max_iters, rho, "prais_winsten")
