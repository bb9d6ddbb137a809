"""Differentiable models and the Adam optimizer.

Three model kinds share one residual-MLP implementation:

* ``linear`` -- a single affine layer.
* ``mlp_regressor`` -- six ReLU layers with residual additions at layers 2, 4 and 6.
* ``window_forecaster`` -- the same MLP over a flattened W x N window, output N.

Residual placement: skips land on every ``residual_every``-th layer. The first
skip starts after layer 1 (the input projection) so the skipped block is square.
When the last layer changes width the skip passes through a fixed, parameter-free
group-averaging matrix.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .kernels import adam_update

CHECKPOINT_FORMAT = "autocorrnet-checkpoint"
CHECKPOINT_VERSION = 1

KINDS = ("linear", "mlp_regressor", "window_forecaster")
_DEFAULT_LAYERS = {"linear": 1, "mlp_regressor": 6, "window_forecaster": 4}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    output_dim: int
    hidden_dim: int = 64
    n_layers: int | None = None
    residual_every: int = 2

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.n_layers is None:
            object.__setattr__(self, "n_layers", _DEFAULT_LAYERS[self.kind])
        if self.kind == "linear" and self.n_layers != 1:
            raise ModelError("linear models have exactly one layer")
        for name in ("input_dim", "output_dim", "hidden_dim", "n_layers"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.residual_every < 0:
            raise ModelError("residual_every must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def residual_layers(self) -> list[int]:
        """1-based indices of the layers whose output receives a skip."""
        if self.n_layers < 2 or self.residual_every == 0:
            return []
        return list(range(self.residual_every, self.n_layers + 1, self.residual_every))


def _group_average(width: int, out: int) -> np.ndarray:
    P = np.zeros((width, out))
    for j in range(out):
        members = [i for i in range(width) if i % out == j] or [j % width]
        P[members, j] = 1.0 / len(members)
    return P


@dataclass
class ModelGraph:
    spec: ModelSpec
    weights: list[ad.Parameter]
    biases: list[ad.Parameter]
    seed: int | None = None
    _skip_proj: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.spec.n_layers >= 2 and self.spec.output_dim != self.spec.hidden_dim:
            self._skip_proj = _group_average(self.spec.hidden_dim, self.spec.output_dim)

    @property
    def parameters(self) -> list[ad.Parameter]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def n_scalars(self) -> int:
        return sum(p.data.size for p in self.parameters)

    def __call__(self, x) -> ad.Tensor:
        return predict(self, x)

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.parameters]

    def load_state(self, state) -> None:
        for p, v in zip(self.parameters, state):
            p.assign(v)

    def to_checkpoint(self, extra: dict | None = None) -> dict:
        record = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "spec": self.spec.to_dict(),
            "seed": self.seed,
            "params": [
                {"name": p.name, "shape": list(p.shape), "data": p.data.reshape(-1).tolist()}
                for p in self.parameters
            ],
        }
        if extra:
            record.update(extra)
        return record

    @classmethod
    def from_checkpoint(cls, record: dict) -> ModelGraph:
        if record.get("format") != CHECKPOINT_FORMAT:
            raise ModelError("not a model checkpoint")
        if record.get("version") != CHECKPOINT_VERSION:
            raise ModelError(f"unsupported checkpoint version {record.get('version')}")
        spec = ModelSpec(**record["spec"])
        model = build(spec, np.random.default_rng(0), seed=record.get("seed"))
        params = record["params"]
        if len(params) != len(model.parameters):
            raise ModelError("checkpoint parameter count does not match its spec")
        for p, entry in zip(model.parameters, params):
            p.assign(np.array(entry["data"], dtype=np.float64).reshape(entry["shape"]))
        return model


def build(spec: ModelSpec, rng: np.random.Generator, seed: int | None = None) -> ModelGraph:
    """Initialise every layer uniformly in +-1/sqrt(fan_in), weights before bias, layer by layer."""
    dims = [spec.input_dim] + [spec.hidden_dim] * (spec.n_layers - 1) + [spec.output_dim]
    weights, biases = [], []
    for k in range(spec.n_layers):
        fan_in, fan_out = dims[k], dims[k + 1]
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(ad.Parameter(rng.uniform(-bound, bound, (fan_in, fan_out)), name=f"W{k + 1}"))
        biases.append(ad.Parameter(rng.uniform(-bound, bound, (1, fan_out)), name=f"b{k + 1}"))
    return ModelGraph(spec, weights, biases, seed=seed)


def predict(model: ModelGraph, x) -> ad.Tensor:
    x = ad.as_tensor(x)
    spec = model.spec
    if x.data.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ad.ShapeError(f"model expects input of shape (batch, {spec.input_dim}), got {x.shape}")
    n = spec.n_layers
    landings = set(spec.residual_layers())
    h = x
    skip = None
    for k in range(1, n + 1):
        z = ad.affine(h, model.weights[k - 1], model.biases[k - 1])
        h = z if k == n else ad.relu(z)
        if k in landings:
            if k == n and model._skip_proj is not None:
                h = ad.add(h, ad.matmul(skip, model._skip_proj))
            else:
                h = ad.add(h, skip)
        if k == 1 or k in landings:
            skip = h
    return h


@dataclass
class AdamState:
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)
    step: int = 0


class Adam:
    """Bias-corrected Adam over parameter groups, each with its own learning rate."""

    def __init__(self, groups, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.groups = [(list(params), float(lr)) for params, lr in groups]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.state = AdamState()
        for params, _ in self.groups:
            for p in params:
                self.state.m[p.id] = np.zeros(p.data.size)
                self.state.v[p.id] = np.zeros(p.data.size)

    @property
    def params(self) -> list[ad.Parameter]:
        return [p for params, _ in self.groups for p in params]

    def zero_grad(self) -> None:
        ad.zero_grads(self.params)

    def step(self) -> None:
        self.state.step += 1
        t = self.state.step
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for params, lr in self.groups:
            for p in params:
                flat = p.data.reshape(-1)
                adam_update(flat, np.ascontiguousarray(p.grad.reshape(-1)), self.state.m[p.id],
                            self.state.v[p.id], lr, self.beta1, self.beta2, self.eps, bc1, bc2)


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """Functional form: update ``params`` (arrays, in place) from ``grads``."""
    state.step += 1
    bc1 = 1.0 - beta1 ** state.step
    bc2 = 1.0 - beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.dtype != np.float64 or not p.flags.c_contiguous:
            raise ModelError("adam_step needs C-contiguous float64 parameter arrays")
        m = state.m.setdefault(i, np.zeros(p.size))
        v = state.v.setdefault(i, np.zeros(p.size))
        adam_update(p.reshape(-1), np.ascontiguousarray(g, dtype=np.float64).reshape(-1), m, v,
                    lr, beta1, beta2, eps, bc1, bc2)
    return state


def save_checkpoint(model: ModelGraph, path, extra: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_checkpoint(extra), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path) -> ModelGraph:
    with open(path, encoding="utf-8") as fh:
        return ModelGraph.from_checkpoint(json.load(fh))
