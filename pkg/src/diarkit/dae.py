"""Stacked denoising autoencoder for nonlinear dimension reduction.

Two autoencoders are pretrained greedily (input -> hidden, hidden ->
bottleneck) on corrupted inputs against clean targets, then assembled into
a single 5-layer network whose encoder half produces the bottleneck
features. Plain numpy, mini-batch gradient descent with momentum.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .features import FeatureMatrix

MODEL_MAGIC = b"SDAE"
MODEL_VERSION = 1

ACTIVATIONS = ("tanh", "sigmoid", "linear")


@dataclass
class TrainConfig:
    corruption_level: float = 0.2
    learning_rate: float = 0.01
    momentum: float = 0.05
    epochs: int = 10
    batch_size: int = 256
    corruption_kind: str = "additive-gaussian"  # or "masking"

    def __post_init__(self):
        if not (0.0 <= self.corruption_level <= 1.0):
            raise ValueError("corruption_level must lie in [0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.corruption_kind not in ("additive-gaussian", "masking"):
            raise ValueError(f"unknown corruption kind {self.corruption_kind!r}")


@dataclass
class Network:
    """Symmetric 5-layer autoencoder; layers 0..1 are the encoder."""

    layer_dims: list[int]
    weights: list[np.ndarray]  # (n_in, n_out) per transition
    biases: list[np.ndarray]
    activations: list[str]
    rng_seed: int = 0
    train_losses: list[list[float]] = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ValueError("one weight matrix per layer transition required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i], self.layer_dims[i + 1]) or b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} parameter shape mismatch")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError(f"layer {i} has non-finite parameters")
        for a in self.activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def bottleneck_dim(self) -> int:
        return self.layer_dims[len(self.layer_dims) // 2]

    def encode(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(X, dtype=np.float64)
        half = len(self.weights) // 2
        for w, b, act in zip(self.weights[:half], self.biases[:half], self.activations[:half]):
            a = _act(a @ w + b, act)
        return a

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(X, dtype=np.float64)
        for w, b, act in zip(self.weights, self.biases, self.activations):
            a = _act(a @ w + b, act)
        return a


def _act(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    if kind == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _act_deriv_from_output(a, kind):
    if kind == "tanh":
        return 1.0 - a**2
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(a)


def _init_layer(n_in: int, n_out: int, kind: str, rng: np.random.Generator):
    scale = np.sqrt(6.0 / (n_in + n_out))
    if kind == "sigmoid":
        scale *= 4.0
    w = rng.uniform(-scale, scale, size=(n_in, n_out))
    return w, np.zeros(n_out)


def corrupt(x: np.ndarray, kind: str, level: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian noise of std ``level``, or independent zero-masking
    with probability ``level``. Identity at level 0."""
    if level == 0.0:
        return x
    if kind == "additive-gaussian":
        return x + rng.normal(0.0, level, size=x.shape)
    if kind == "masking":
        return x * (rng.random(x.shape) >= level)
    raise ValueError(f"unknown corruption kind {kind!r}")


def loss_and_grads(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    activations: list[str],
    x_in: np.ndarray,
    x_target: np.ndarray,
):
    """Mean (over batch) summed squared reconstruction error and its
    gradients for a feed-forward chain of any depth."""
    acts = [np.asarray(x_in, dtype=np.float64)]
    for w, b, kind in zip(weights, biases, activations):
        acts.append(_act(acts[-1] @ w + b, kind))
    out = acts[-1]
    diff = out - x_target
    n = len(x_in)
    loss = float((diff**2).sum() / n)
    grads_w, grads_b = [], []
    delta = (2.0 / n) * diff * _act_deriv_from_output(out, activations[-1])
    for i in range(len(weights) - 1, -1, -1):
        grads_w.append(acts[i].T @ delta)
        grads_b.append(delta.sum(axis=0))
        if i > 0:
            delta = (delta @ weights[i].T) * _act_deriv_from_output(acts[i], activations[i - 1])
    return loss, grads_w[::-1], grads_b[::-1]


def _train_single_dae(X, n_hidden, enc_act, dec_act, cfg: TrainConfig, rng):
    n, n_in = X.shape
    w_enc, b_enc = _init_layer(n_in, n_hidden, enc_act, rng)
    w_dec, b_dec = _init_layer(n_hidden, n_in, dec_act, rng)
    weights, biases = [w_enc, w_dec], [b_enc, b_dec]
    acts = [enc_act, dec_act]
    vel_w = [np.zeros_like(w) for w in weights]
    vel_b = [np.zeros_like(b) for b in biases]

    def clean_loss():
        loss, _, _ = loss_and_grads(weights, biases, acts, X, X)
        return loss

    losses = [clean_loss()]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            clean = X[idx]
            noisy = corrupt(clean, cfg.corruption_kind, cfg.corruption_level, rng)
            loss, gw, gb = loss_and_grads(weights, biases, acts, noisy, clean)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"training diverged at epoch {epoch}, loss history so far: {losses}"
                )
            for i in range(len(weights)):
                vel_w[i] = cfg.momentum * vel_w[i] - cfg.learning_rate * gw[i]
                vel_b[i] = cfg.momentum * vel_b[i] - cfg.learning_rate * gb[i]
                weights[i] += vel_w[i]
                biases[i] += vel_b[i]
        losses.append(clean_loss())
    return (w_enc, b_enc), (w_dec, b_dec), losses


def pretrain_stack(
    features: FeatureMatrix | np.ndarray,
    cfg: TrainConfig,
    seed: int,
    hidden_dim: int = 91,
    bottleneck_dim: int = 21,
) -> Network:
    """Greedy layer-wise pretraining: a tanh/linear autoencoder on the raw
    features, then a sigmoid/sigmoid one on its codes. Deterministic given
    the seed; per-epoch clean reconstruction losses are kept on the result.
    """
    X = features.data if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    if len(X) < cfg.batch_size:
        raise ValueError(f"need at least {cfg.batch_size} frames to train (got {len(X)})")
    n_in = X.shape[1]
    rng = np.random.default_rng(seed)

    enc1, dec1, losses1 = _train_single_dae(X, hidden_dim, "tanh", "linear", cfg, rng)
    codes = _act(X @ enc1[0] + enc1[1], "tanh")
    enc2, dec2, losses2 = _train_single_dae(codes, bottleneck_dim, "sigmoid", "sigmoid", cfg, rng)

    return Network(
        layer_dims=[n_in, hidden_dim, bottleneck_dim, hidden_dim, n_in],
        weights=[enc1[0], enc2[0], dec2[0], dec1[0]],
        biases=[enc1[1], enc2[1], dec2[1], dec1[1]],
        activations=["tanh", "sigmoid", "sigmoid", "linear"],
        rng_seed=seed,
        train_losses=[losses1, losses2],
    )


def random_network(input_dim: int, hidden_dim: int, bottleneck_dim: int, seed: int) -> Network:
    """Untrained network with the standard layout (for tests and gradient
    checks)."""
    rng = np.random.default_rng(seed)
    dims = [input_dim, hidden_dim, bottleneck_dim, hidden_dim, input_dim]
    acts = ["tanh", "sigmoid", "sigmoid", "linear"]
    weights, biases = [], []
    for i in range(4):
        w, b = _init_layer(dims[i], dims[i + 1], acts[i], rng)
        weights.append(w)
        biases.append(rng.normal(0.0, 0.1, size=b.shape))
    return Network(layer_dims=dims, weights=weights, biases=biases, activations=acts, rng_seed=seed)


def bottleneck(net: Network, f: FeatureMatrix) -> FeatureMatrix:
    """Encoder-only forward pass (no corruption at inference)."""
    if f.dim != net.input_dim:
        raise ValueError(f"feature dim {f.dim} does not match network input {net.input_dim}")
    return replace(f, data=net.encode(f.data))


def save_network(net: Network, path: str):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", MODEL_MAGIC, MODEL_VERSION, len(net.layer_dims)))
        fh.write(struct.pack(f"<{len(net.layer_dims)}I", *net.layer_dims))
        for w, b in zip(net.weights, net.biases):
            fh.write(w.astype("<f8").tobytes(order="C"))
            fh.write(b.astype("<f8").tobytes(order="C"))


def load_network(path: str) -> Network:
    with open(path, "rb") as fh:
        magic, version, n_dims = struct.unpack("<4sII", fh.read(12))
        if magic != MODEL_MAGIC:
            raise ValueError(f"{path}: not a network model file")
        if version != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {version}")
        dims = list(struct.unpack(f"<{n_dims}I", fh.read(4 * n_dims)))
        weights, biases = [], []
        for i in range(n_dims - 1):
            w = np.frombuffer(fh.read(8 * dims[i] * dims[i + 1]), dtype="<f8").reshape(dims[i], dims[i + 1])
            b = np.frombuffer(fh.read(8 * dims[i + 1]), dtype="<f8")
            weights.append(w.copy())
            biases.append(b.copy())
    acts = ["tanh"] + ["sigmoid"] * (n_dims - 3) + ["linear"]
    return Network(layer_dims=dims, weights=weights, biases=biases, activations=acts)
