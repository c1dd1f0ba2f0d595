"""Fully-connected encoder/decoder with exact reverse-mode gradients and Adam.

Everything is float64 and samples are columns. The loss side produces upstream
gradients at two places at once: on the latent codes Z (variance and isometry
terms) and on the reconstruction Xhat; backward() routes the decoder gradient
back to Z and sums both paths before walking the encoder.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .linalg import as_matrix

_token_counter = itertools.count(1)


@dataclass
class Layer:
    W: np.ndarray  # out x in
    b: np.ndarray  # out
    activation: str  # "relu" or "identity"


@dataclass
class MlpModel:
    encoder_layers: list
    decoder_layers: list
    latent_dim: int
    seed: int = 0
    # version/token pair invalidates caches after any parameter update or clone
    version: int = 0
    token: int = field(default_factory=lambda: next(_token_counter))

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0].W.shape[1]

    def parameters(self):
        for layer in self.encoder_layers + self.decoder_layers:
            yield layer.W
            yield layer.b

    def clone(self) -> "MlpModel":
        def copy_layers(layers):
            return [Layer(l.W.copy(), l.b.copy(), l.activation) for l in layers]

        return MlpModel(
            encoder_layers=copy_layers(self.encoder_layers),
            decoder_layers=copy_layers(self.decoder_layers),
            latent_dim=self.latent_dim,
            seed=self.seed,
        )


@dataclass
class ForwardCache:
    """Per-layer inputs and pre-activations captured during a forward pass."""

    inputs: list  # activation entering each layer
    pre: list  # W @ input + b for each layer
    model_version: int
    model_token: int
    kind: str = "full"  # which stack(s) the cache covers


@dataclass
class Gradients:
    encoder: list  # (dW, db) per encoder layer
    decoder: list


def _build_stack(widths, rng) -> list:
    layers = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        W = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in))
        act = "identity" if i == len(widths) - 2 else "relu"
        layers.append(Layer(W=W, b=np.zeros(fan_out), activation=act))
    return layers


def init_model(enc_widths, dec_widths, seed: int = 0) -> MlpModel:
    """He-initialized MLP pair; final layer of each stack is linear."""
    enc = [int(w) for w in enc_widths]
    dec = [int(w) for w in dec_widths]
    if len(enc) < 2 or len(dec) < 2:
        raise ValueError("encoder and decoder each need at least 2 widths")
    if any(w < 1 for w in enc + dec):
        raise ValueError("widths must be positive")
    if dec[0] != enc[-1]:
        raise ValueError(
            f"width mismatch: decoder starts at {dec[0]} but latent dim is {enc[-1]}"
        )
    if dec[-1] != enc[0]:
        raise ValueError(
            f"width mismatch: decoder ends at {dec[-1]} but input dim is {enc[0]}"
        )
    rng = np.random.default_rng(seed)
    return MlpModel(
        encoder_layers=_build_stack(enc, rng),
        decoder_layers=_build_stack(dec, rng),
        latent_dim=enc[-1],
        seed=seed,
    )


def _run_stack(layers, A, inputs=None, pre=None):
    for layer in layers:
        if inputs is not None:
            inputs.append(A)
        S = layer.W @ A + layer.b[:, None]
        if pre is not None:
            pre.append(S)
        A = np.maximum(S, 0.0) if layer.activation == "relu" else S
    return A


def encode(model: MlpModel, X) -> np.ndarray:
    X = as_matrix(X, "X")
    if X.shape[0] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} input rows, got {X.shape[0]}")
    return _run_stack(model.encoder_layers, X)


def decode(model: MlpModel, Z) -> np.ndarray:
    Z = as_matrix(Z, "Z")
    if Z.shape[0] != model.latent_dim:
        raise ValueError(f"expected {model.latent_dim} latent rows, got {Z.shape[0]}")
    return _run_stack(model.decoder_layers, Z)


def forward(model: MlpModel, X) -> tuple:
    Z = encode(model, X)
    return Z, decode(model, Z)


def forward_cached(model: MlpModel, X) -> tuple:
    """Forward pass that records the activations backward() needs."""
    X = as_matrix(X, "X")
    if X.shape[0] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} input rows, got {X.shape[0]}")
    inputs, pre = [], []
    Z = _run_stack(model.encoder_layers, X, inputs, pre)
    Xhat = _run_stack(model.decoder_layers, Z, inputs, pre)
    cache = ForwardCache(
        inputs=inputs, pre=pre, model_version=model.version, model_token=model.token
    )
    return Z, Xhat, cache


def encode_cached(model: MlpModel, X) -> tuple:
    X = as_matrix(X, "X")
    if X.shape[0] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} input rows, got {X.shape[0]}")
    inputs, pre = [], []
    Z = _run_stack(model.encoder_layers, X, inputs, pre)
    cache = ForwardCache(
        inputs=inputs,
        pre=pre,
        model_version=model.version,
        model_token=model.token,
        kind="encoder",
    )
    return Z, cache


def decode_cached(model: MlpModel, Z) -> tuple:
    Z = as_matrix(Z, "Z")
    if Z.shape[0] != model.latent_dim:
        raise ValueError(f"expected {model.latent_dim} latent rows, got {Z.shape[0]}")
    inputs, pre = [], []
    Xhat = _run_stack(model.decoder_layers, Z, inputs, pre)
    cache = ForwardCache(
        inputs=inputs,
        pre=pre,
        model_version=model.version,
        model_token=model.token,
        kind="decoder",
    )
    return Xhat, cache


def _check_cache(model: MlpModel, cache: ForwardCache) -> None:
    if cache.model_token != model.token or cache.model_version != model.version:
        raise ValueError(
            "stale forward cache: model parameters changed since the forward pass"
        )


def _stack_backward(layers, inputs, pre, upstream):
    grads = [None] * len(layers)
    G = upstream
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        dS = G * (pre[i] > 0.0) if layer.activation == "relu" else G
        grads[i] = (dS @ inputs[i].T, dS.sum(axis=1))
        G = layer.W.T @ dS
    return grads, G


def backward(model: MlpModel, cache: ForwardCache, grad_Z, grad_Xhat) -> Gradients:
    """Exact gradients for upstream signals entering at Z and at Xhat together.

    The decoder is walked first; its input gradient joins grad_Z where the two
    loss paths merge at the encoder output.
    """
    _check_cache(model, cache)
    if cache.kind != "full":
        raise ValueError(f"backward needs a full forward cache, got {cache.kind!r}")
    n_enc = len(model.encoder_layers)
    grad_Z = as_matrix(grad_Z, "grad_Z")
    grad_Xhat = as_matrix(grad_Xhat, "grad_Xhat")
    dec_grads, G_at_Z = _stack_backward(
        model.decoder_layers, cache.inputs[n_enc:], cache.pre[n_enc:], grad_Xhat
    )
    enc_grads, _ = _stack_backward(
        model.encoder_layers, cache.inputs[:n_enc], cache.pre[:n_enc], grad_Z + G_at_Z
    )
    return Gradients(encoder=enc_grads, decoder=dec_grads)


def backward_decoder(model: MlpModel, cache: ForwardCache, grad_Xhat) -> tuple:
    """Decoder-only gradients plus the gradient arriving at its latent input.

    The cache must come from decode_cached (decoder activations only).
    """
    _check_cache(model, cache)
    if cache.kind != "decoder":
        raise ValueError("cache does not match a decoder-only forward pass")
    grads, G = _stack_backward(
        model.decoder_layers, cache.inputs, cache.pre, as_matrix(grad_Xhat, "grad_Xhat")
    )
    return grads, G


def backward_encoder(model: MlpModel, cache: ForwardCache, grad_Z) -> list:
    """Encoder-only gradients; cache must come from encode_cached."""
    _check_cache(model, cache)
    if cache.kind != "encoder":
        raise ValueError("cache does not match an encoder-only forward pass")
    grads, _ = _stack_backward(
        model.encoder_layers, cache.inputs, cache.pre, as_matrix(grad_Z, "grad_Z")
    )
    return grads


def zero_gradients_like(model: MlpModel) -> Gradients:
    def zeros(layers):
        return [(np.zeros_like(l.W), np.zeros_like(l.b)) for l in layers]

    return Gradients(encoder=zeros(model.encoder_layers), decoder=zeros(model.decoder_layers))


def add_gradients(acc: Gradients, extra: Gradients, scale: float = 1.0) -> None:
    for side in ("encoder", "decoder"):
        for (aW, ab), (eW, eb) in zip(getattr(acc, side), getattr(extra, side)):
            aW += scale * eW
            ab += scale * eb


# ----------------------------------------------------------------------- adam


@dataclass
class AdamState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)  # first moments, parameter order
    v: list = field(default_factory=list)  # second moments

    @classmethod
    def for_model(cls, model: MlpModel, learning_rate: float) -> "AdamState":
        state = cls(learning_rate=learning_rate)
        for p in model.parameters():
            state.m.append(np.zeros_like(p))
            state.v.append(np.zeros_like(p))
        return state


def _flat_grads(grads: Gradients):
    for dW, db in grads.encoder + grads.decoder:
        yield dW
        yield db


def adam_step(model: MlpModel, grads: Gradients, state: AdamState) -> None:
    """Standard Adam with bias correction; mutates model and state in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    lr = state.learning_rate
    for i, (p, g) in enumerate(zip(model.parameters(), _flat_grads(grads))):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g
        m_hat = state.m[i] / (1.0 - b1**t)
        v_hat = state.v[i] / (1.0 - b2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    model.version += 1


# ----------------------------------------------------------- .ckpt persistence


def save_checkpoint(model: MlpModel, path, epoch: int = 0, extra: dict | None = None) -> None:
    """One JSON manifest line, then all parameters as little-endian float64."""
    manifest = {
        "format": "ckpt",
        "enc_widths": [model.encoder_layers[0].W.shape[1]]
        + [l.W.shape[0] for l in model.encoder_layers],
        "dec_widths": [model.decoder_layers[0].W.shape[1]]
        + [l.W.shape[0] for l in model.decoder_layers],
        "enc_activations": [l.activation for l in model.encoder_layers],
        "dec_activations": [l.activation for l in model.decoder_layers],
        "seed": int(model.seed),
        "epoch": int(epoch),
        "dtype": "<f8",
    }
    if extra:
        manifest["extra"] = extra
    with open(path, "wb") as f:
        f.write((json.dumps(manifest, sort_keys=True) + "\n").encode("utf-8"))
        for p in model.parameters():
            f.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple:
    """Returns (model, manifest). Inverse of save_checkpoint."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as f:
        manifest = json.loads(f.readline().decode("utf-8"))
        model = init_model(manifest["enc_widths"], manifest["dec_widths"], seed=manifest["seed"])
        for layer, act in zip(
            model.encoder_layers + model.decoder_layers,
            manifest["enc_activations"] + manifest["dec_activations"],
        ):
            layer.activation = act
        for p in model.parameters():
            buf = f.read(p.size * 8)
            if len(buf) != p.size * 8:
                raise ValueError("checkpoint truncated: parameter blob too short")
            p[...] = np.frombuffer(buf, dtype="<f8").reshape(p.shape)
    return model, manifest
