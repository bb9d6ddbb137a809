"""NumPy / pure-Python implementations of the compiled kernels in ``_kernels.pyx``."""
from __future__ import annotations

import numpy as np


def ar1_filter(innov: np.ndarray, rho: float) -> np.ndarray:
    innov = np.ascontiguousarray(innov, dtype=np.float64)
    out = np.empty_like(innov)
    if innov.size == 0:
        return out
    prev = float(innov[0])
    out[0] = prev
    vals = innov.tolist()
    rho = float(rho)
    for t in range(1, len(vals)):
        prev = rho * prev + vals[t]
        out[t] = prev
    return out


def lag_sums(e: np.ndarray) -> tuple[float, float, float, float]:
    e = np.ascontiguousarray(e, dtype=np.float64)
    if e.size == 0:
        return 0.0, 0.0, 0.0, 0.0
    head = e[:-1]
    d = np.diff(e)
    h = float(np.dot(head, head))
    return float(np.dot(e[1:], head)), h, float(np.dot(d, d)), h + float(e[-1] * e[-1])


def adam_update(p, g, m, v, lr, beta1, beta2, eps, bc1, bc2) -> None:
    c1 = 1.0 - beta1
    c2 = 1.0 - beta2
    m *= beta1
    m += c1 * g
    v *= beta2
    v += c2 * g * g
    p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
