import numpy as np
import pytest

from rldecoder.deepq import DEFAULT_CONV, DEFAULT_DENSE, Adam, NetworkSpec, QNetwork, ShapeError


def small_spec():
    return NetworkSpec((1, 5, 5), 3, conv=((2, 3, 2), (2, 2, 1)), dense=((4, 0.0),))


def naive_conv(x, w, b, width, stride):
    """Loop convolution on NHWC input; ``w`` rows ordered (di, dj, channel)."""
    n, h, ww, c = x.shape
    oh, ow = (h - width) // stride + 1, (ww - width) // stride + 1
    k = w.reshape(width, width, c, -1)
    out = np.zeros((n, oh, ow, k.shape[-1]))
    for a in range(n):
        for i in range(oh):
            for j in range(ow):
                patch = x[a, i * stride : i * stride + width, j * stride : j * stride + width, :]
                out[a, i, j] = np.tensordot(patch, k, axes=3) + b
    return np.maximum(out, 0)


def naive_forward(net, x):
    a = x.transpose(0, 2, 3, 1).astype(np.float64)
    for i, (f, width, stride) in enumerate(net.spec.conv):
        a = naive_conv(a, net.params[f"conv{i}/w"], net.params[f"conv{i}/b"], width, stride)
    a = a.reshape(a.shape[0], -1)
    for i, _ in enumerate(net.spec.dense):
        a = np.maximum(a @ net.params[f"dense{i}/w"] + net.params[f"dense{i}/b"], 0)
    y = a @ net.params["head/w"] + net.params["head/b"]
    return y[:, :1] + y[:, 1:] - y[:, 1:].mean(axis=1, keepdims=True)


def test_forward_matches_loop_oracle():
    net = QNetwork.initialize(small_spec(), np.random.default_rng(0), dtype=np.float64)
    x = np.random.default_rng(1).integers(0, 2, (4, 1, 5, 5))
    np.testing.assert_allclose(net.forward(x), naive_forward(net, x), atol=1e-12)


def test_full_sized_network_forward_matches_oracle():
    spec = NetworkSpec((7, 11, 11), 26, DEFAULT_CONV, DEFAULT_DENSE)
    net = QNetwork.initialize(spec, np.random.default_rng(0), dtype=np.float64)
    x = np.random.default_rng(1).integers(0, 2, (2, 7, 11, 11))
    np.testing.assert_allclose(net.forward(x), naive_forward(net, x), atol=1e-9)


def test_hand_set_dueling_head():
    # no hidden layers: y = x @ W + b, Q = V + A - mean(A)
    spec = NetworkSpec((1, 1, 2), 2, conv=(), dense=())
    w = np.array([[1.0, 2.0, 0.0], [0.0, 0.0, 4.0]])
    b = np.array([0.5, 0.0, 1.0])
    net = QNetwork(spec, {"head/w": w, "head/b": b})
    q = net.forward(np.array([[[[1.0, 1.0]]]]))
    # y = (1.5, 2, 5): V = 1.5, A = (2, 5), mean 3.5
    np.testing.assert_allclose(q, [[0.0, 3.0]])


def test_param_count_by_hand():
    # d=5 depolarizing: input 7x11x11, 51 actions
    spec = NetworkSpec((7, 11, 11), 51, DEFAULT_CONV, DEFAULT_DENSE)
    expected = (
        (3 * 3 * 7 * 64 + 64)  # 11 -> 5
        + (2 * 2 * 64 * 32 + 32)  # 5 -> 4
        + (2 * 2 * 32 * 32 + 32)  # 4 -> 3
        + (3 * 3 * 32 * 512 + 512)
        + (512 * 52 + 52)
    )
    assert QNetwork.zeros(spec).n_params == expected
    assert spec.conv_shapes() == [(5, 5, 64), (4, 4, 32), (3, 3, 32)]


def test_spec_validation_and_serialisation():
    with pytest.raises(ShapeError):
        NetworkSpec((1, 3, 3), 2, conv=((4, 5, 1),), dense=())
    spec = small_spec()
    assert NetworkSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ShapeError):
        QNetwork(spec, {"head/w": np.zeros((1, 1))})
    net = QNetwork.zeros(spec)
    with pytest.raises(ShapeError):
        net.forward(np.zeros((1, 2, 5, 5)))


def relative_errors(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)


def numeric_grad(net, loss_fn, h):
    out = {}
    for k, v in net.params.items():
        g = np.zeros_like(v)
        for idx in np.ndindex(v.shape):
            old = v[idx]
            v[idx] = old + h
            up = loss_fn()
            v[idx] = old - h
            down = loss_fn()
            v[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[k] = g
    return out


def test_gradient_check_small_net():
    spec = small_spec()
    net = QNetwork.initialize(spec, np.random.default_rng(3), dtype=np.float64)
    for k in net.params:
        if k.endswith("/b"):
            net.params[k][:] = np.random.default_rng(4).normal(0, 0.1, net.params[k].shape)
    assert net.n_params <= 100
    x = np.random.default_rng(5).normal(size=(3, 1, 5, 5))
    coef = np.random.default_rng(6).normal(size=(3, 3))

    def loss():
        return float(np.sum(coef * net.forward(x)))

    _, cache = net.forward_train(x, training=False)
    analytic = net.backward(cache, coef)
    numeric = numeric_grad(net, loss, 1e-4)
    worst = max(relative_errors(analytic[k], numeric[k]).max() for k in net.params)
    assert worst < 1e-4


def test_gradient_check_through_dropout():
    spec = NetworkSpec((1, 4, 4), 2, conv=((2, 2, 1),), dense=((5, 0.4),))
    net = QNetwork.initialize(spec, np.random.default_rng(0), dtype=np.float64)
    x = np.random.default_rng(1).normal(size=(2, 1, 4, 4))
    coef = np.random.default_rng(2).normal(size=(2, 2))

    def loss():
        q, _ = net.forward_train(x, training=True, rng=np.random.default_rng(9))
        return float(np.sum(coef * q))

    _, cache = net.forward_train(x, training=True, rng=np.random.default_rng(9))
    analytic = net.backward(cache, coef)
    numeric = numeric_grad(net, loss, 1e-5)
    worst = max(relative_errors(analytic[k], numeric[k]).max() for k in net.params)
    assert worst < 1e-4


def test_dropout_is_inverted_and_off_at_inference():
    spec = NetworkSpec((1, 1, 1), 1, conv=(), dense=((20000, 0.25),))
    params = {
        "dense0/w": np.ones((1, 20000)),
        "dense0/b": np.zeros(20000),
        "head/w": np.full((20000, 2), 1.0 / 20000),
        "head/b": np.zeros(2),
    }
    net = QNetwork(spec, params)
    x = np.ones((1, 1, 1, 1))
    np.testing.assert_allclose(net.forward(x), [[1.0]])
    q, cache = net.forward_train(x, training=True, rng=np.random.default_rng(0))
    mask = cache.layers[0][-1]
    kept = mask > 0
    assert abs(kept.mean() - 0.75) < 0.02
    np.testing.assert_allclose(mask[kept], 1 / 0.75)
    with pytest.raises(ValueError):
        net.forward_train(x, training=True)


def test_adam_first_step_by_hand():
    p = {"w": np.array([1.0, -2.0, 0.0])}
    g = {"w": np.array([0.5, -4.0, 0.0])}
    opt = Adam(p, lr=0.1, eps=1e-7)
    opt.step(p, g)
    # m = 0.1 g, v = 0.001 g^2, bias-corrected step = lr * g / (|g| + eps / sqrt(1 - beta2))
    expected = np.array([1.0, -2.0, 0.0]) - 0.1 * np.sqrt(0.001) * g["w"] / (np.sqrt(0.001) * np.abs(g["w"]) + 1e-7)
    np.testing.assert_allclose(p["w"], expected, rtol=1e-12)


def test_adam_state_round_trip_and_convergence():
    p = {"w": np.array([3.0, -1.0])}
    opt = Adam(p, lr=0.05)
    for _ in range(2000):
        opt.step(p, {"w": 2 * p["w"]})
    assert np.abs(p["w"]).max() < 1e-2
    clone = Adam({"w": p["w"].copy()}, lr=0.05)
    clone.load_state_dict(opt.state_dict())
    q = {"w": p["w"].copy()}
    opt.step(p, {"w": 2 * p["w"]})
    clone.step(q, {"w": 2 * q["w"]})
    np.testing.assert_array_equal(p["w"], q["w"])


def test_copy_and_load_from_are_independent():
    net = QNetwork.initialize(small_spec(), np.random.default_rng(0))
    other = net.copy()
    other.params["head/b"][:] = 7
    assert not np.any(net.params["head/b"] == 7)
    net.load_from(other)
    assert np.all(net.params["head/b"] == 7)
    with pytest.raises(ShapeError):
        net.load_from(QNetwork.zeros(NetworkSpec((1, 5, 5), 4, conv=(), dense=())))
