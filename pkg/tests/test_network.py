"""Tests for the MLP pair: init, forward, exact gradients, Adam, checkpoints."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pcae.network import (
    AdamState,
    Layer,
    MlpModel,
    adam_step,
    backward,
    backward_decoder,
    backward_encoder,
    decode,
    decode_cached,
    encode,
    encode_cached,
    forward,
    forward_cached,
    init_model,
    load_checkpoint,
    save_checkpoint,
    zero_gradients_like,
    add_gradients,
)


def tiny_model(seed=0):
    return init_model([3, 4, 2], [2, 4, 3], seed=seed)


def flatten_params(model):
    return np.concatenate([p.ravel() for p in model.parameters()])


def set_params(model, flat):
    pos = 0
    for p in model.parameters():
        p[...] = flat[pos : pos + p.size].reshape(p.shape)
        pos += p.size
    model.version += 1


def flatten_grads(grads):
    parts = []
    for dW, db in grads.encoder + grads.decoder:
        parts.append(dW.ravel())
        parts.append(db.ravel())
    return np.concatenate(parts)


# ----------------------------------------------------------------------- init


def test_init_shapes_and_latent_dim():
    m = tiny_model()
    assert m.latent_dim == 2
    assert m.input_dim == 3
    assert [l.W.shape for l in m.encoder_layers] == [(4, 3), (2, 4)]
    assert [l.W.shape for l in m.decoder_layers] == [(4, 2), (3, 4)]
    assert [l.activation for l in m.encoder_layers] == ["relu", "identity"]
    assert [l.activation for l in m.decoder_layers] == ["relu", "identity"]
    assert all(np.all(l.b == 0) for l in m.encoder_layers + m.decoder_layers)


def test_init_deterministic_per_seed():
    a, b = tiny_model(7), tiny_model(7)
    assert all(np.array_equal(x, y) for x, y in zip(a.parameters(), b.parameters()))
    c = tiny_model(8)
    assert not all(np.array_equal(x, y) for x, y in zip(a.parameters(), c.parameters()))


def test_init_he_scale():
    m = init_model([256, 256, 8], [8, 256, 256], seed=1)
    W = m.encoder_layers[0].W
    assert np.std(W) == pytest.approx(np.sqrt(2.0 / 256), rel=0.2)


def test_init_width_mismatch():
    with pytest.raises(ValueError, match="width mismatch"):
        init_model([3, 4, 2], [3, 4, 3])
    with pytest.raises(ValueError, match="width mismatch"):
        init_model([3, 4, 2], [2, 4, 4])


# -------------------------------------------------------------------- forward


def test_zero_weights_give_zero_outputs():
    m = tiny_model()
    for layer in list(m.encoder_layers) + list(m.decoder_layers):
        layer.W[...] = 0.0
    Z, Xhat = forward(m, np.random.default_rng(0).normal(size=(3, 5)))
    assert np.all(Z == 0.0)
    assert np.all(Xhat == 0.0)


def test_identity_linear_encoder():
    m = init_model([3, 3], [3, 3], seed=0)
    m.encoder_layers[0].W[...] = np.eye(3)
    X = np.random.default_rng(1).normal(size=(3, 6))
    assert_allclose(encode(m, X), X, atol=0)


def test_forward_finite_and_pure():
    m = init_model([5, 16, 3], [3, 16, 5], seed=2)
    X = np.random.default_rng(3).normal(size=(5, 40))
    Z1, X1 = forward(m, X)
    Z2, X2 = forward(m, X)
    assert np.all(np.isfinite(Z1)) and np.all(np.isfinite(X1))
    assert np.array_equal(Z1, Z2) and np.array_equal(X1, X2)
    assert Z1.shape == (3, 40)


def test_shape_validation():
    m = tiny_model()
    with pytest.raises(ValueError, match="input rows"):
        encode(m, np.zeros((4, 5)))
    with pytest.raises(ValueError, match="latent rows"):
        decode(m, np.zeros((3, 5)))


# ------------------------------------------------------------------- backward


def test_zero_upstream_gives_zero_grads():
    m = tiny_model()
    X = np.random.default_rng(4).normal(size=(3, 7))
    Z, Xhat, cache = forward_cached(m, X)
    g = backward(m, cache, np.zeros_like(Z), np.zeros_like(Xhat))
    assert all(np.all(dW == 0) and np.all(db == 0) for dW, db in g.encoder + g.decoder)


def test_single_layer_linear_closed_form():
    # one linear layer, squared loss L = (1/n)||WX - Y||^2: dL/dW = 2(WX-Y)X^T/n
    m = MlpModel(
        encoder_layers=[Layer(np.random.default_rng(5).normal(size=(2, 3)), np.zeros(2), "identity")],
        decoder_layers=[Layer(np.eye(2), np.zeros(2), "identity")],
        latent_dim=2,
    )
    X = np.random.default_rng(6).normal(size=(3, 10))
    Y = np.random.default_rng(7).normal(size=(2, 10))
    Z, _, cache = forward_cached(m, X)
    n = X.shape[1]
    upstream = 2.0 * (Z - Y) / n
    g = backward(m, cache, upstream, np.zeros((2, 10)))
    W = m.encoder_layers[0].W
    closed = 2.0 * (W @ X - Y) @ X.T / n
    assert_allclose(g.encoder[0][0], closed, atol=1e-10)


def test_backward_merges_z_and_xhat_paths():
    # gradient from both entry points equals the sum of separate passes
    m = tiny_model(9)
    X = np.random.default_rng(8).normal(size=(3, 6))
    Z, Xhat, cache = forward_cached(m, X)
    gz = np.random.default_rng(9).normal(size=Z.shape)
    gx = np.random.default_rng(10).normal(size=Xhat.shape)
    both = backward(m, cache, gz, gx)
    only_z = backward(m, cache, gz, np.zeros_like(gx))
    only_x = backward(m, cache, np.zeros_like(gz), gx)
    got = flatten_grads(both)
    assert_allclose(got, flatten_grads(only_z) + flatten_grads(only_x), atol=1e-12)


def test_backward_full_loss_finite_differences():
    # scalar loss touching both Z and Xhat; FD over every parameter
    m = tiny_model(11)
    X = np.random.default_rng(12).normal(size=(3, 5))
    A = np.random.default_rng(13).normal(size=(2, 5))  # fixed weights on Z
    B = np.random.default_rng(14).normal(size=(3, 5))  # fixed weights on Xhat

    def loss_at(flat):
        set_params(m, flat)
        Z, Xhat = forward(m, X)
        return float(np.sum(A * Z) + np.sum(B * Xhat * Xhat))

    theta = flatten_params(m).copy()
    set_params(m, theta)
    Z, Xhat, cache = forward_cached(m, X)
    g = backward(m, cache, A, 2.0 * B * Xhat)
    analytic = flatten_grads(g)
    rng = np.random.default_rng(15)
    idx = rng.choice(theta.size, size=25, replace=False)
    h = 1e-5
    for i in idx:
        bump = theta.copy()
        bump[i] += h
        up = loss_at(bump)
        bump[i] -= 2 * h
        down = loss_at(bump)
        fd = (up - down) / (2 * h)
        assert analytic[i] == pytest.approx(fd, rel=1e-4, abs=1e-8)
    set_params(m, theta)


def test_stale_cache_rejected():
    m = tiny_model()
    X = np.random.default_rng(16).normal(size=(3, 4))
    Z, Xhat, cache = forward_cached(m, X)
    state = AdamState.for_model(m, 1e-3)
    g = backward(m, cache, np.ones_like(Z), np.ones_like(Xhat))
    adam_step(m, g, state)
    with pytest.raises(ValueError, match="stale"):
        backward(m, cache, np.ones_like(Z), np.ones_like(Xhat))


def test_encoder_and_decoder_partial_backward():
    m = tiny_model(17)
    X = np.random.default_rng(18).normal(size=(3, 6))
    Z, enc_cache = encode_cached(m, X)
    Xhat, dec_cache = decode_cached(m, Z)
    gz = np.random.default_rng(19).normal(size=Z.shape)
    gx = np.random.default_rng(20).normal(size=Xhat.shape)
    dec_grads, g_at_z = backward_decoder(m, dec_cache, gx)
    enc_grads = backward_encoder(m, enc_cache, gz + g_at_z)
    Z2, X2, full_cache = forward_cached(m, X)
    full = backward(m, full_cache, gz, gx)
    assert_allclose(
        np.concatenate([d.ravel() for dW, db in enc_grads for d in (dW, db)]),
        np.concatenate([d.ravel() for dW, db in full.encoder for d in (dW, db)]),
        atol=1e-12,
    )
    assert_allclose(
        np.concatenate([d.ravel() for dW, db in dec_grads for d in (dW, db)]),
        np.concatenate([d.ravel() for dW, db in full.decoder for d in (dW, db)]),
        atol=1e-12,
    )
    with pytest.raises(ValueError, match="decoder-only"):
        backward_decoder(m, enc_cache, gx)


def test_gradient_accumulation_helpers():
    m = tiny_model(21)
    X = np.random.default_rng(22).normal(size=(3, 4))
    Z, Xhat, cache = forward_cached(m, X)
    g = backward(m, cache, np.ones_like(Z), np.ones_like(Xhat))
    acc = zero_gradients_like(m)
    add_gradients(acc, g, scale=2.0)
    add_gradients(acc, g, scale=-1.0)
    assert_allclose(flatten_grads(acc), flatten_grads(g), atol=1e-15)


# ----------------------------------------------------------------------- adam


def test_adam_zero_grads_no_motion():
    m = tiny_model()
    before = flatten_params(m).copy()
    state = AdamState.for_model(m, 1e-2)
    adam_step(m, zero_gradients_like(m), state)
    assert_allclose(flatten_params(m), before, atol=0)


def test_adam_constant_grad_approaches_lr_sign_step():
    # with constant gradient, bias-corrected Adam step magnitude tends to lr
    m = init_model([1, 1], [1, 1], seed=0)
    state = AdamState.for_model(m, 1e-2)
    g = zero_gradients_like(m)
    g.encoder[0][0][...] = 3.7  # constant positive gradient on one weight
    prev = m.encoder_layers[0].W[0, 0]
    for _ in range(200):
        adam_step(m, g, state)
    step = prev - m.encoder_layers[0].W[0, 0]
    last_step = None
    prev = m.encoder_layers[0].W[0, 0]
    adam_step(m, g, state)
    last_step = prev - m.encoder_layers[0].W[0, 0]
    assert last_step == pytest.approx(1e-2, rel=1e-3)
    assert step > 0


def test_adam_minimizes_quadratic_bowl():
    m = init_model([2, 2], [2, 2], seed=3)
    target = np.array([[1.5, -0.5], [0.25, 2.0]])
    state = AdamState.for_model(m, 1e-2)
    for _ in range(2000):
        g = zero_gradients_like(m)
        g.encoder[0][0][...] = 2.0 * (m.encoder_layers[0].W - target)
        adam_step(m, g, state)
    assert float(np.sum((m.encoder_layers[0].W - target) ** 2)) < 1e-6


def test_linear_autoencoder_reaches_pca_floor():
    # rank-2 bottleneck on linear data: best residual is the PCA tail spectrum
    rng = np.random.default_rng(23)
    n, p, d = 400, 6, 2
    basis = rng.normal(size=(p, 3))
    X = basis @ (rng.normal(size=(3, n)) * np.array([[3.0], [1.5], [0.3]]))
    X = X - X.mean(axis=1, keepdims=True)
    cov_eigs = np.sort(np.linalg.eigvalsh(X @ X.T / n))[::-1]
    pca_floor = float(np.sum(cov_eigs[d:]))
    m = init_model([p, d], [d, p], seed=5)
    state = AdamState.for_model(m, 2e-2)
    for _ in range(3000):
        Z, Xhat, cache = forward_cached(m, X)
        g_xhat = 2.0 * (Xhat - X) / n
        grads = backward(m, cache, np.zeros_like(Z), g_xhat)
        adam_step(m, grads, state)
    _, Xhat = forward(m, X)
    final = float(np.sum((Xhat - X) ** 2) / n)
    assert final <= pca_floor * 1.05 + 1e-9


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip(tmp_path):
    m = init_model([4, 8, 3], [3, 8, 4], seed=6)
    state = AdamState.for_model(m, 1e-3)
    X = np.random.default_rng(24).normal(size=(4, 5))
    Z, Xhat, cache = forward_cached(m, X)
    adam_step(m, backward(m, cache, np.ones_like(Z), np.ones_like(Xhat)), state)
    path = tmp_path / "model.ckpt"
    save_checkpoint(m, path, epoch=17, extra={"note": "test"})
    back, manifest = load_checkpoint(path)
    assert manifest["epoch"] == 17
    assert manifest["extra"] == {"note": "test"}
    for a, b in zip(m.parameters(), back.parameters()):
        assert np.array_equal(a, b)
    Xq = np.random.default_rng(25).normal(size=(4, 9))
    assert_allclose(forward(back, Xq)[1], forward(m, Xq)[1], atol=0)


def test_checkpoint_missing_and_truncated(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "none.ckpt")
    m = tiny_model()
    path = tmp_path / "cut.ckpt"
    save_checkpoint(m, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) - 16])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(path)


def test_clone_is_independent():
    m = tiny_model(26)
    c = m.clone()
    c.encoder_layers[0].W[0, 0] += 1.0
    assert m.encoder_layers[0].W[0, 0] != c.encoder_layers[0].W[0, 0]
    assert c.token != m.token
