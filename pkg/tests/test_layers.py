import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momrev import layers
from momrev.errors import ConfigError, ShapeError, StateError
from util import fd_grad, rel_err, rng


def test_relu_forward():
    out = layers.ReLU().forward(np.array([-1.0, 0.0, 2.0]))
    assert np.array_equal(out, np.array([0.0, 0.0, 2.0]))


def test_relu_backward_tie_at_zero():
    layer = layers.ReLU()
    layer.forward(np.array([-1.0, 0.0, 2.0]))
    gx = layer.backward(np.ones(3))
    assert np.array_equal(gx, np.array([0.0, 0.0, 1.0]))


def test_linear_identity():
    layer = layers.Linear(2, 2)
    layer.w.value[...] = np.eye(2)
    out = layer.forward(np.array([3.0, 5.0]))
    assert np.array_equal(out, np.array([3.0, 5.0]))


def test_linear_backward_scalar_chain_rule():
    layer = layers.Linear(1, 1)
    layer.w.value[...] = [[2.0]]
    layer.forward(np.array([1.5]))
    gx = layer.backward(np.array([3.0]))
    assert np.array_equal(gx, np.array([6.0]))


def test_sigmoid_at_zero():
    assert layers.Sigmoid().forward(np.array([0.0]))[0] == 0.5


def test_backward_without_forward_raises():
    with pytest.raises(StateError):
        layers.ReLU().backward(np.ones(3))


def test_inference_mode_keeps_caches_empty():
    r = rng(1)
    for layer, x in _layer_cases(r)[:6]:
        layer.forward(x, train=False)
        assert layer.cache_size() == 0
        with pytest.raises(StateError):
            layer.backward(np.zeros(1))


def _layer_cases(r):
    """(layer, random input) pairs covering the whole zoo."""
    cases = []
    cases.append((layers.Linear(5, 3, rng=r), r.normal(size=(2, 5))))
    cases.append((layers.Conv2d(2, 3, 3, padding=1, rng=r), r.normal(size=(2, 2, 6, 6))))
    cases.append((layers.Conv2d(2, 2, 2, stride=2, rng=r), r.normal(size=(2, 2, 4, 4))))
    cases.append((layers.ReLU(), r.normal(size=(2, 3, 4, 4)) + 0.05))
    cases.append((layers.Tanh(), r.normal(size=(2, 7))))
    cases.append((layers.Sigmoid(), r.normal(size=(3, 5))))
    cases.append((layers.MaxPool2(), r.normal(size=(2, 2, 4, 4))))
    cases.append((layers.Upsample2(), r.normal(size=(2, 2, 3, 3))))
    cases.append((layers.GlobalAvgPool(), r.normal(size=(2, 3, 4, 4))))
    return cases


@pytest.mark.parametrize("case", range(12))
def test_layer_gradients_match_finite_differences(case):
    # 12 parametrized rounds x 9 layers > 100 random gradient checks
    r = rng(100 + case)
    for layer, x in _layer_cases(r):
        w = r.normal(size=layer.forward(x, train=False).shape)

        def loss():
            return float((layer.forward(x, train=False) * w).sum())

        layer.clear_cache()
        layer.forward(x.copy(), train=True)
        for p in layer.params():
            p.zero_grad()
        gx = layer.backward(w)
        assert rel_err(gx, fd_grad(loss, x)) <= 1e-6
        for p in layer.params():
            assert rel_err(p.grad, fd_grad(loss, p.value)) <= 1e-6


def test_residual_function_zero_weights_is_zero():
    f = layers.build_residual_function({"kind": "conv", "channels": 2}, rng=None)
    x = rng(5).normal(size=(2, 4, 4))
    assert np.array_equal(f.forward(x, train=False), np.zeros_like(x))


def test_residual_function_linear_tanh_identity_weights():
    f = layers.build_residual_function({"kind": "linear", "dim": 1}, rng=rng(0))
    f.layers[0].w.value[...] = 1.0
    f.layers[0].b.value[...] = 0.0
    f.layers[2].w.value[...] = 1.0
    f.layers[2].b.value[...] = 0.0
    assert f.forward(np.array([0.0]), train=False)[0] == 0.0
    x = np.array([0.7])
    assert f.forward(x, train=False)[0] == pytest.approx(np.tanh(0.7))


@given(st.sampled_from([(4, 8, 8), (2, 4, 4), (16,), (5,)]), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_residual_function_preserves_shape(shape, seed):
    r = rng(seed)
    if len(shape) == 3:
        f = layers.build_residual_function({"kind": "conv", "channels": shape[0]}, r)
    else:
        f = layers.build_residual_function({"kind": "linear", "dim": shape[0]}, r)
    x = r.normal(size=shape)
    assert f.forward(x, train=False).shape == shape


def test_residual_function_bad_descriptor():
    with pytest.raises(ConfigError):
        layers.build_residual_function({"kind": "conv", "channels": 0}, rng(0))
    with pytest.raises(ConfigError):
        layers.build_residual_function({"kind": "waffle"}, rng(0))


def test_linear_shape_error():
    with pytest.raises(ShapeError):
        layers.Linear(4, 2, rng=rng(0)).forward(np.zeros((2, 5)))


def test_checkpoint_roundtrip(tmp_path):
    r = rng(6)
    conv = layers.Conv2d(2, 3, 3, rng=r, name="c")
    lin = layers.Linear(4, 2, rng=r, name="l")
    params = conv.params() + lin.params()
    layers.save_checkpoint(tmp_path / "ckpt", params)
    loaded = layers.load_checkpoint(tmp_path / "ckpt")
    assert set(loaded) == {p.name for p in params}
    for p in params:
        assert np.array_equal(loaded[p.name], p.value)
    # round-trip through assign
    conv2 = layers.Conv2d(2, 3, 3, name="c")
    lin2 = layers.Linear(4, 2, name="l")
    layers.assign_checkpoint(conv2.params() + lin2.params(), loaded)
    assert np.array_equal(conv2.w.value, conv.w.value)


def test_checkpoint_shape_mismatch(tmp_path):
    lin = layers.Linear(3, 2, rng=rng(0), name="l")
    layers.save_checkpoint(tmp_path / "ckpt", lin.params())
    other = layers.Linear(4, 2, name="l")
    with pytest.raises(ConfigError):
        layers.assign_checkpoint(other.params(), layers.load_checkpoint(tmp_path / "ckpt"))
