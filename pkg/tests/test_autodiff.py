import math

import numpy as np
import pytest

from codelang import autodiff as ad
from codelang.autodiff import Tensor


@pytest.fixture(autouse=True)
def float64_mode():
    ad.set_precision("float64")
    yield
    ad.set_precision("float32")


def test_softmax_symmetry():
    out = ad.softmax(Tensor([2.5, 2.5, 2.5])).data
    np.testing.assert_allclose(out, [1 / 3] * 3, atol=1e-12)


def test_softmax_hand_value():
    out = ad.softmax(Tensor([0.0, math.log(3)])).data
    np.testing.assert_allclose(out, [0.25, 0.75], atol=1e-12)


def test_softmax_shift_invariance():
    v = np.array([0.3, -1.2, 4.0])
    a = ad.softmax(Tensor(v)).data
    b = ad.softmax(Tensor(v + 123.0)).data
    np.testing.assert_allclose(a, b, atol=1e-12)
    assert abs(a.sum() - 1.0) < 1e-6


def test_softmax_empty_rejected():
    with pytest.raises(ValueError):
        ad.softmax(Tensor(np.zeros(0)))


def test_layer_norm_constant_input_returns_bias():
    v = Tensor([3.0, 3.0, 3.0, 3.0])
    out = ad.layer_norm(v, Tensor(np.ones(4)), Tensor([1.0, 2.0, 3.0, 4.0]))
    np.testing.assert_allclose(out.data, [1.0, 2.0, 3.0, 4.0], atol=1e-12)


def test_layer_norm_unit_variance_and_gain_linearity():
    v = Tensor([1.0, -1.0])
    out = ad.layer_norm(v, Tensor([1.0, 1.0]), Tensor([0.0, 0.0]), eps=1e-12)
    np.testing.assert_allclose(out.data, [1.0, -1.0], atol=1e-6)
    doubled = ad.layer_norm(v, Tensor([2.0, 2.0]), Tensor([0.0, 0.0]), eps=1e-12)
    np.testing.assert_allclose(doubled.data, [2.0, -2.0], atol=1e-6)


def test_layer_norm_length_mismatch():
    with pytest.raises(ValueError):
        ad.layer_norm(Tensor([1.0, 2.0]), Tensor([1.0]), Tensor([0.0]))


def test_cross_entropy_uniform_is_log_k():
    for k in (2, 5, 19):
        loss = ad.cross_entropy(Tensor(np.zeros(k)), 0)
        np.testing.assert_allclose(float(loss.data), math.log(k), atol=1e-12)


def test_cross_entropy_hand_value():
    loss = ad.cross_entropy(Tensor([0.0, math.log(3)]), 1)
    np.testing.assert_allclose(float(loss.data), -math.log(0.75), atol=1e-12)


def test_cross_entropy_saturation_is_finite():
    loss = ad.cross_entropy(Tensor([1000.0, 0.0]), 0)
    assert 0.0 <= float(loss.data) < 1e-6
    assert np.isfinite(loss.data)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        ad.cross_entropy(Tensor([0.0, 1.0]), 2)


def test_cross_entropy_nonnegative_random():
    rng = np.random.default_rng(0)
    for _ in range(50):
        logits = Tensor(rng.normal(size=7))
        label = int(rng.integers(7))
        assert float(ad.cross_entropy(logits, label).data) >= 0.0


def test_grad_check_quadratic():
    theta = Tensor(np.array([3.0]), requires_grad=True)

    def f():
        return ad.tsum(ad.mul(theta, theta))

    err = ad.grad_check(f, [theta], eps=1e-5)
    assert err < 1e-9
    theta.zero_grad()
    loss = f()
    loss.backward()
    np.testing.assert_allclose(theta.grad, [6.0], atol=1e-12)


def test_unreachable_parameter_gets_no_gradient():
    used = Tensor(np.array([2.0]), requires_grad=True)
    unused = Tensor(np.array([5.0]), requires_grad=True)
    loss = ad.tsum(ad.mul(used, used))
    loss.backward()
    assert unused.grad is None  # exact zero contribution


def test_grad_check_eps_bounds():
    theta = Tensor(np.array([1.0]), requires_grad=True)
    with pytest.raises(ValueError):
        ad.grad_check(lambda: ad.tsum(theta), [theta], eps=1e-2)


@pytest.mark.parametrize("primitive", [
    "matmul", "add", "gelu", "softmax", "layer_norm", "embedding", "cross_entropy",
])
def test_primitive_gradients(primitive):
    rng = np.random.default_rng(42)

    if primitive == "matmul":
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        f = lambda: ad.tsum(ad.mul(ad.matmul(a, b), ad.matmul(a, b)))
        params = [a, b]
    elif primitive == "add":
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4,)), requires_grad=True)  # broadcast bias
        f = lambda: ad.tsum(ad.mul(a + b, a + b))
        params = [a, b]
    elif primitive == "gelu":
        a = Tensor(rng.normal(size=(10,)), requires_grad=True)
        f = lambda: ad.tsum(ad.gelu(a))
        params = [a]
    elif primitive == "softmax":
        a = Tensor(rng.normal(size=(2, 5)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 5)))
        f = lambda: ad.tsum(ad.mul(ad.softmax(a), w))
        params = [a]
    elif primitive == "layer_norm":
        a = Tensor(rng.normal(size=(2, 6)), requires_grad=True)
        gain = Tensor(rng.normal(size=(6,)), requires_grad=True)
        bias = Tensor(rng.normal(size=(6,)), requires_grad=True)
        w = Tensor(rng.normal(size=(2, 6)))
        f = lambda: ad.tsum(ad.mul(ad.layer_norm(a, gain, bias), w))
        params = [a, gain, bias]
    elif primitive == "embedding":
        weight = Tensor(rng.normal(size=(7, 3)), requires_grad=True)
        ids = np.array([[0, 2, 2], [5, 1, 0]])
        f = lambda: ad.tsum(ad.mul(ad.embedding(weight, ids), ad.embedding(weight, ids)))
        params = [weight]
    else:
        logits = Tensor(rng.normal(size=(4, 6)), requires_grad=True)
        labels = np.array([1, 0, 5, 3])
        f = lambda: ad.cross_entropy(logits, labels)
        params = [logits]

    assert ad.grad_check(f, params, eps=1e-5) < 1e-4


def test_dropout_eval_mode_is_identity():
    a = Tensor(np.arange(6.0))
    out = ad.dropout(a, 0.5, np.random.default_rng(0), training=False)
    assert out is a


def test_masked_cross_entropy_zero_mask_is_zero_loss():
    logits = Tensor(np.random.default_rng(1).normal(size=(3, 4)), requires_grad=True)
    mask = np.zeros(3, dtype=bool)
    loss = ad.cross_entropy(logits, np.array([0, 1, 2]), mask=mask)
    assert float(loss.data) == 0.0
    loss.backward()
    assert logits.grad is None or not logits.grad.any()
