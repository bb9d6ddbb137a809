from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autocorrnet import autodiff as ad
from autocorrnet.models import ModelSpec, build, predict

from fd_oracle import numeric_grad, rel_err


def _grads(loss_fn, params):
    ad.zero_grads(params)
    with ad.Tape() as tape:
        loss = loss_fn()
    ad.backward(tape, loss)
    return [p.grad.copy() for p in params]


def test_tanh_at_zero():
    x = ad.Parameter(np.zeros((1, 1)))
    with ad.Tape() as tape:
        y = ad.tanh(x)
    assert y.data.item() == 0.0
    ad.backward(tape, y)
    assert x.grad[0, 0] == 1.0


@pytest.mark.parametrize("value, out, grad", [(-2.0, 0.0, 0.0), (3.0, 3.0, 1.0), (0.0, 0.0, 0.0)])
def test_relu_values_and_gradients(value, out, grad):
    x = ad.Parameter(np.full((1, 1), value))
    with ad.Tape() as tape:
        y = ad.relu(x)
    ad.backward(tape, y)
    assert y.data.item() == out
    assert x.grad[0, 0] == grad


def test_square_gradient():
    x = ad.Parameter(np.full((1, 1), 3.0))
    with ad.Tape() as tape:
        loss = ad.mean(ad.square(x))
    ad.backward(tape, loss)
    assert x.grad[0, 0] == 6.0


def test_mean_of_constants_gives_zero_grads():
    p = ad.Parameter(np.ones((2, 2)))
    with ad.Tape() as tape:
        loss = ad.mean(ad.Tensor(np.ones((3, 3))))
    ad.backward(tape, loss)
    np.testing.assert_array_equal(p.grad, 0.0)


def test_matmul_gradient_vs_finite_differences(rng):
    A = ad.Parameter(rng.normal(size=(2, 3)))
    B = ad.Parameter(rng.normal(size=(3, 1)))
    fn = lambda: ad.mean(ad.square(ad.matmul(A, B)))  # noqa: E731
    analytic = _grads(fn, [A, B])
    numeric = numeric_grad(lambda: float(fn().data), [A.data, B.data])
    for a, n in zip(analytic, numeric):
        assert rel_err(a, n) < 1e-6


def test_every_primitive_vs_finite_differences(rng):
    a = ad.Parameter(rng.normal(size=(3, 4)))
    b = ad.Parameter(rng.normal(size=(3, 4)) + 0.5)
    w = ad.Parameter(rng.normal(size=(4, 2)))
    bias = ad.Parameter(rng.normal(size=(1, 2)))
    r = ad.Parameter(rng.normal(size=(1, 2)))

    def fn():
        h = ad.add(ad.mul(a, b), ad.scalar_mul(ad.sub(a, b), 0.3))
        h = ad.tanh(h)
        z = ad.affine(h, w, bias)
        z2 = ad.matmul(ad.square(h), w)
        c = ad.concat([z, z2], axis=1)
        s = ad.slice_(c, (slice(0, 2), slice(1, 4)))
        rr = ad.repeat_rows(ad.tile_cols(r, 2), 3)
        t = ad.reshape(ad.mul(ad.slice_(c, (slice(None), slice(0, 4))), rr), (6, 2))
        return ad.add(ad.mean(ad.square(s)), ad.sum_all(ad.relu(ad.add(t, ad.Tensor(np.full((6, 2), 0.05))))))

    params = [a, b, w, bias, r]
    analytic = _grads(fn, params)
    numeric = numeric_grad(lambda: float(fn().data), [p.data for p in params])
    for an, nu in zip(analytic, numeric):
        assert rel_err(an, nu) < 1e-6


def test_six_layer_mlp_gradient(rng):
    model = build(ModelSpec("mlp_regressor", 5, 1, hidden_dim=8), rng)
    x = rng.normal(size=(7, 5))
    y = rng.normal(size=(7, 1))
    fn = lambda: ad.mean(ad.square(ad.sub(predict(model, x), ad.Tensor(y))))  # noqa: E731
    analytic = _grads(fn, model.parameters)
    numeric = numeric_grad(lambda: float(fn().data), [p.data for p in model.parameters])
    assert max(rel_err(a, n) for a, n in zip(analytic, numeric)) < 1e-5


def test_grad_check_linear_is_exact(rng):
    model = build(ModelSpec("linear", 3, 1), rng)
    x = rng.normal(size=(5, 3))
    rep = ad.grad_check(lambda: ad.mean(predict(model, x)), model.parameters)
    assert rep.passed and rep.max_error < 1e-9


def test_grad_check_excludes_relu_kink():
    w = ad.Parameter(np.array([[1.0]]))
    x = np.array([[0.0]])
    rep = ad.grad_check(lambda: ad.mean(ad.relu(ad.matmul(ad.Tensor(x), w))), [w])
    assert rep.excluded and rep.passed


def test_backward_requires_scalar():
    p = ad.Parameter(np.ones((2, 1)))
    with ad.Tape() as tape:
        y = ad.scalar_mul(p, 2.0)
    with pytest.raises(ad.AutodiffError):
        ad.backward(tape, y)


def test_shape_and_nonfinite_errors():
    with pytest.raises(ad.ShapeError):
        ad.add(ad.Tensor(np.ones((2, 1))), ad.Tensor(np.ones((1, 2))))
    with pytest.raises(ad.ShapeError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))
    with np.errstate(over="ignore"), pytest.raises(ad.NonFiniteError):
        ad.scalar_mul(ad.Tensor(np.full((1, 1), 1e308)), 10.0)


def test_unreachable_parameter_gets_zero_grad(rng):
    used = ad.Parameter(rng.normal(size=(2, 2)))
    unused = ad.Parameter(rng.normal(size=(2, 2)))
    with ad.Tape() as tape:
        loss = ad.mean(ad.square(used))
    ad.backward(tape, loss)
    np.testing.assert_array_equal(unused.grad, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_linearity_of_gradients(seed):
    rng = np.random.default_rng(seed)
    p = ad.Parameter(rng.normal(size=(3, 2)))
    x = rng.normal(size=(4, 3))
    f1 = lambda: ad.mean(ad.square(ad.matmul(ad.Tensor(x), p)))  # noqa: E731
    f2 = lambda: ad.sum_all(ad.tanh(ad.matmul(ad.Tensor(x), p)))  # noqa: E731
    g1 = _grads(f1, [p])[0]
    g2 = _grads(f2, [p])[0]
    g12 = _grads(lambda: ad.add(f1(), f2()), [p])[0]
    np.testing.assert_allclose(g12, g1 + g2, rtol=1e-12, atol=1e-14)


def test_backward_replay_is_idempotent(rng):
    model = build(ModelSpec("mlp_regressor", 3, 1, hidden_dim=6), rng)
    x = rng.normal(size=(5, 3))
    with ad.Tape() as tape:
        loss = ad.mean(ad.square(predict(model, x)))
    ad.backward(tape, loss)
    first = [p.grad.copy() for p in model.parameters]
    ad.zero_grads(model.parameters)
    ad.backward(tape, loss)
    for a, b in zip(first, model.parameters):
        np.testing.assert_array_equal(a, b.grad)


def test_accumulation_without_zeroing(rng):
    p = ad.Parameter(rng.normal(size=(2, 2)))
    g = _grads(lambda: ad.mean(ad.square(p)), [p])[0]
    with ad.Tape() as tape:
        loss = ad.mean(ad.square(p))
    ad.backward(tape, loss)
    np.testing.assert_allclose(p.grad, 2 * g)


def test_determinism():
    def run():
        rng = np.random.default_rng(7)
        model = build(ModelSpec("mlp_regressor", 4, 1, hidden_dim=5), rng)
        x = rng.normal(size=(6, 4))
        g = _grads(lambda: ad.mean(ad.square(predict(model, x))), model.parameters)
        return predict(model, x).data, g

    (o1, g1), (o2, g2) = run(), run()
    np.testing.assert_array_equal(o1, o2)
    for a, b in zip(g1, g2):
        np.testing.assert_array_equal(a, b)


def test_no_tape_means_no_recording():
    p = ad.Parameter(np.ones((1, 1)))
    y = ad.tanh(p)
    assert y.requires_grad
    with ad.Tape() as tape:
        ad.tanh(ad.Tensor(np.ones((1, 1))))
    assert len(tape) == 0
