from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from autocorrnet import autodiff as ad
from autocorrnet.models import (
    Adam,
    AdamState,
    ModelError,
    ModelGraph,
    ModelSpec,
    adam_step,
    build,
    load_checkpoint,
    predict,
    save_checkpoint,
)

from golden_fixture import forecaster_after_one_step

DATA = Path(__file__).parent / "data"


def test_linear_parameter_count(rng):
    m = build(ModelSpec("linear", 3, 1), rng)
    assert m.n_scalars() == 4


def test_mlp_defaults(rng):
    spec = ModelSpec("mlp_regressor", 6, 1)
    assert spec.n_layers == 6
    assert spec.residual_layers() == [2, 4, 6]
    m = build(spec, rng)
    assert len(m.weights) == 6 and len(m.biases) == 6


def test_spec_validation():
    with pytest.raises(ModelError):
        ModelSpec("conv", 1, 1)
    with pytest.raises(ModelError):
        ModelSpec("linear", 0, 1)
    with pytest.raises(ModelError):
        ModelSpec("linear", 2, 1, n_layers=3)


def test_same_seed_same_parameters():
    a = build(ModelSpec("mlp_regressor", 4, 1), np.random.default_rng(3))
    b = build(ModelSpec("mlp_regressor", 4, 1), np.random.default_rng(3))
    for p, q in zip(a.parameters, b.parameters):
        np.testing.assert_array_equal(p.data, q.data)


def test_initialisation_bounds(rng):
    m = build(ModelSpec("mlp_regressor", 9, 1, hidden_dim=16), rng)
    for w in m.weights:
        assert np.abs(w.data).max() <= 1.0 / np.sqrt(w.shape[0])


def test_linear_zero_weights_outputs_bias(rng):
    m = build(ModelSpec("linear", 3, 2), rng)
    m.weights[0].assign(np.zeros((3, 2)))
    m.biases[0].assign(np.array([[1.5, -2.0]]))
    out = predict(m, rng.normal(size=(4, 3))).data
    np.testing.assert_array_equal(out, np.tile([1.5, -2.0], (4, 1)))


@pytest.mark.parametrize("kind, out", [("mlp_regressor", 1), ("window_forecaster", 3)])
def test_zero_weights_give_zero_output(rng, kind, out):
    m = build(ModelSpec(kind, 6, out, hidden_dim=5), rng)
    for p in m.parameters:
        p.assign(np.zeros(p.shape))
    np.testing.assert_array_equal(predict(m, rng.normal(size=(3, 6))).data, 0.0)


def test_predict_shape_error(rng):
    m = build(ModelSpec("linear", 3, 1), rng)
    with pytest.raises(ad.ShapeError):
        predict(m, np.zeros((2, 4)))


def test_residual_skip_is_identity_on_square_blocks(rng):
    # zeroing layers 2..4 leaves h1 flowing through the skips at layers 2 and 4
    spec = ModelSpec("mlp_regressor", 3, 4, hidden_dim=4, n_layers=4)
    m = build(spec, rng)
    x = rng.normal(size=(5, 3))
    h1 = np.maximum(x @ m.weights[0].data + m.biases[0].data, 0)
    for k in (1, 2, 3):
        m.weights[k].assign(np.zeros((4, 4)))
        m.biases[k].assign(np.zeros((1, 4)))
    np.testing.assert_allclose(predict(m, x).data, h1)


def test_golden_forecaster_output():
    golden = json.loads((DATA / "forecaster_golden.json").read_text())["output"]
    np.testing.assert_allclose(forecaster_after_one_step(), golden, rtol=0, atol=1e-12)


def test_checkpoint_round_trip(tmp_path, rng):
    m = build(ModelSpec("window_forecaster", 8, 2, hidden_dim=6), rng, seed=11)
    path = tmp_path / "ck.json"
    save_checkpoint(m, path, extra={"note": "x"})
    back = load_checkpoint(path)
    assert back.spec == m.spec and back.seed == 11
    x = rng.normal(size=(3, 8))
    np.testing.assert_array_equal(predict(back, x).data, predict(m, x).data)
    with pytest.raises(ModelError):
        ModelGraph.from_checkpoint({"format": "other"})


def test_adam_first_step_is_lr_sign(rng):
    p = rng.normal(size=5)
    g = rng.normal(size=5)
    start = p.copy()
    adam_step([p], [g], AdamState(), lr=0.01)
    np.testing.assert_allclose(p - start, -0.01 * np.sign(g), rtol=1e-6)


def test_adam_zero_gradient_keeps_parameters():
    p = np.ones(3)
    state = adam_step([p], [np.zeros(3)], AdamState(), lr=0.1)
    assert state.step == 1
    np.testing.assert_array_equal(p, 1.0)
    adam_step([p], [np.zeros(3)], state, lr=0.1)
    assert state.step == 2


def test_adam_constant_gradient_limit():
    p = np.zeros(2)
    g = np.array([0.3, -4.0])
    state = AdamState()
    for _ in range(2000):
        before = p.copy()
        adam_step([p], [g], state, lr=1e-3)
    np.testing.assert_allclose(p - before, -1e-3 * np.sign(g), rtol=1e-6)


def test_adam_reference_formula(rng):
    p = rng.normal(size=4)
    ref = p.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = AdamState()
    for t in range(1, 4):
        g = rng.normal(size=4)
        adam_step([p], [g], state, lr=0.05)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref - 0.05 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_adam_step_decreases_convex_quadratic(rng):
    A = rng.normal(size=(6, 3))
    b = rng.normal(size=6)
    w = ad.Parameter(rng.normal(size=(3, 1)))
    opt = Adam([([w], 1e-3)])

    def loss():
        return ad.mean(ad.square(ad.sub(ad.matmul(ad.Tensor(A), w), ad.Tensor(b[:, None]))))

    before = loss().data.item()
    opt.zero_grad()
    with ad.Tape() as tape:
        value = loss()
    ad.backward(tape, value)
    opt.step()
    assert loss().data.item() < before


def test_parameter_groups_use_their_own_rates():
    a = ad.Parameter(np.zeros((1, 1)))
    b = ad.Parameter(np.zeros((1, 1)))
    opt = Adam([([a], 3e-3), ([b], 1e-2)])
    a.grad[...] = 1.0
    b.grad[...] = 1.0
    opt.step()
    assert a.data[0, 0] == pytest.approx(-3e-3)
    assert b.data[0, 0] == pytest.approx(-1e-2)
