"""A small numpy DeepONet: tanh MLPs, hand-written backprop and Adam.

The prediction for an initial condition ``u0`` at a query ``(t, x)`` is
``sum_k b_k[u0] * gamma_k(t, x)`` where ``b`` is the branch output and
``gamma`` the trunk output, both of width ``w``.
"""

from __future__ import annotations

import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fileio import FormatError

__all__ = [
    "Layer",
    "Mlp",
    "DeepONetModel",
    "TrainingSet",
    "TrainConfig",
    "TrainingError",
    "glorot_uniform_init",
    "build_deeponet",
    "deeponet_forward",
    "predict",
    "loss_and_gradients",
    "evaluate_mse",
    "Adam",
    "train",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "tanh")
MODEL_MAGIC = b"FORGEMDL"
MODEL_VERSION = 1


class TrainingError(RuntimeError):
    pass


def glorot_uniform_init(shape, seed) -> np.ndarray:
    """Uniform on +-sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = shape
    if fan_in < 1 or fan_out < 1:
        raise ValueError(f"layer dimensions must be positive, got {shape}")
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unsupported activation {self.activation!r}")
        if self.bias.shape != (self.weight.shape[1],):
            raise ValueError("bias length must match the layer output width")


@dataclass
class Mlp:
    layers: list

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weight.shape[1] != nxt.weight.shape[0]:
                raise ValueError("consecutive layer dimensions do not chain")

    @property
    def n_in(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def n_out(self) -> int:
        return self.layers[-1].weight.shape[1]

    @property
    def widths(self) -> list:
        return [self.n_in] + [layer.weight.shape[1] for layer in self.layers]

    def forward(self, x, cache=None):
        a = x
        for layer in self.layers:
            z = a @ layer.weight + layer.bias
            a = np.tanh(z) if layer.activation == "tanh" else z
            if cache is not None:
                cache.append(a)
        return a

    def backward(self, x, cache, grad_out):
        """Gradients of the weights and biases, returned per layer as (dW, db)."""
        grads = []
        g = grad_out
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            out = cache[idx]
            if layer.activation == "tanh":
                g = g * (1.0 - out * out)
            inp = cache[idx - 1] if idx > 0 else x
            inp2 = inp.reshape(-1, inp.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            grads.append((inp2.T @ g2, g2.sum(axis=0)))
            if idx > 0:
                g = g @ layer.weight.T
        return grads[::-1]

    def parameters(self) -> list:
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out


@dataclass
class DeepONetModel:
    branch: Mlp
    trunk: Mlp
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.branch.n_out != self.trunk.n_out:
            raise ValueError("branch and trunk output widths differ")
        if self.branch.layers[-1].activation != "identity":
            raise ValueError("the final branch layer must be linear")

    @property
    def width(self) -> int:
        return self.trunk.n_out

    @property
    def n_sensors(self) -> int:
        return self.branch.n_in

    def parameters(self) -> list:
        return self.branch.parameters() + self.trunk.parameters()

    def copy(self) -> "DeepONetModel":
        def dup(mlp):
            return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in mlp.layers])

        return DeepONetModel(dup(self.branch), dup(self.trunk), dict(self.metadata))

    def trunk_functions(self, t, x) -> np.ndarray:
        """Trunk outputs gamma_k(t, x) for each point, shape (npts, w)."""
        x = np.asarray(x, dtype=np.float64)
        tx = np.column_stack([np.full_like(x, float(t)), x])
        return self.trunk.forward(tx)


def _mlp(widths, final_activation, seed_seq):
    layers = []
    seeds = seed_seq.spawn(len(widths) - 1)
    for i, (n_in, n_out) in enumerate(zip(widths, widths[1:])):
        act = final_activation if i == len(widths) - 2 else "tanh"
        w = glorot_uniform_init((n_in, n_out), seeds[i])
        layers.append(Layer(w, np.zeros(n_out), act))
    return Mlp(layers)


def build_deeponet(
    n_sensors=128, width=128, branch_depth=2, trunk_depth=3, seed=0, metadata=None
) -> DeepONetModel:
    """Constant-width DeepONet with Glorot-uniform weights and zero biases.

    Depth counts weight layers.  The trunk input is the raw pair (t, x).
    """
    root = np.random.SeedSequence(seed)
    branch_seq, trunk_seq = root.spawn(2)
    branch = _mlp([n_sensors] + [width] * branch_depth, "identity", branch_seq)
    trunk = _mlp([2] + [width] * trunk_depth, "tanh", trunk_seq)
    meta = {"seed": int(seed)}
    meta.update(metadata or {})
    return DeepONetModel(branch, trunk, meta)


def predict(model: DeepONetModel, u0, queries) -> np.ndarray:
    """Batched prediction.

    ``u0`` has shape (nb, N); ``queries`` is (nb, nq, 2), or (nq, 2) shared
    by every sample.  Returns (nb, nq).
    """
    u0 = np.atleast_2d(np.asarray(u0, dtype=np.float64))
    if u0.shape[1] != model.n_sensors:
        raise ValueError(f"expected {model.n_sensors} sensor values, got {u0.shape[1]}")
    queries = np.asarray(queries, dtype=np.float64)
    if queries.shape[-1] != 2:
        raise ValueError("queries must be (t, x) pairs")
    b = model.branch.forward(u0)
    g = model.trunk.forward(queries)
    if g.ndim == 2:
        return b @ g.T
    return np.einsum("bw,bqw->bq", b, g)


def deeponet_forward(model: DeepONetModel, u0_sensors, queries) -> np.ndarray:
    """Prediction for a single initial condition at a list of (t, x) queries."""
    u0 = np.asarray(u0_sensors, dtype=np.float64)
    if u0.ndim != 1:
        raise ValueError("u0_sensors must be a single vector of sensor values")
    return predict(model, u0[None, :], np.asarray(queries, float).reshape(-1, 2))[0]


@dataclass
class TrainingSet:
    """Branch inputs (n, N), trunk queries (n, q, 2) and targets (n, q)."""

    branch: np.ndarray
    trunk: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        n = self.branch.shape[0]
        if self.trunk.shape[0] != n or self.targets.shape[0] != n:
            raise ValueError("branch, trunk and target sample counts differ")
        if self.trunk.shape[:2] != self.targets.shape:
            raise ValueError("one target per trunk query is required")

    def __len__(self):
        return self.branch.shape[0]

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.branch[idx], self.trunk[idx], self.targets[idx])


def loss_and_gradients(model: DeepONetModel, u0, queries, targets):
    """Mean squared error over all (sample, query) pairs and its gradient.

    Gradients are returned in the order of ``model.parameters()``.
    """
    b_cache, t_cache = [], []
    b = model.branch.forward(u0, b_cache)
    g = model.trunk.forward(queries, t_cache)
    pred = np.einsum("bw,bqw->bq", b, g)
    resid = pred - targets
    loss = float(np.mean(resid * resid))
    dpred = 2.0 * resid / resid.size
    db = np.einsum("bq,bqw->bw", dpred, g)
    dg = dpred[:, :, None] * b[:, None, :]
    grads = []
    for dW, dB in model.branch.backward(u0, b_cache, db):
        grads.extend([dW, dB])
    for dW, dB in model.trunk.backward(queries, t_cache, dg):
        grads.extend([dW, dB])
    return loss, grads


def evaluate_mse(model: DeepONetModel, data: TrainingSet, chunk=100) -> float:
    total = 0.0
    for start in range(0, len(data), chunk):
        part = data.subset(slice(start, start + chunk))
        resid = predict(model, part.branch, part.trunk) - part.targets
        total += float(np.sum(resid * resid))
    return total / data.targets.size


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainConfig:
    epochs: int = 50_000
    learning_rate: float = 1e-5
    batch_size: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 0


def train(model: DeepONetModel, data: TrainingSet, config: TrainConfig):
    """Minibatch Adam on the MSE loss; returns (trained copy, per-epoch loss).

    Minibatches are groups of initial conditions (with all their queries),
    reshuffled every epoch from a generator seeded by ``config.seed``.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    if config.learning_rate < 0:
        raise ValueError("learning rate must be non-negative")
    model = model.copy()
    opt = Adam(model.parameters(), config.learning_rate, config.beta1, config.beta2, config.eps)
    rng = np.random.default_rng(config.seed)
    n = len(data)
    history = np.empty(config.epochs)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_gradients(
                model, data.branch[idx], data.trunk[idx], data.targets[idx]
            )
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            opt.step(grads)
            total += loss * idx.size
        history[epoch] = total / n
        if config.log_every and (epoch + 1) % config.log_every == 0:
            log.info("epoch %d  loss %.4e", epoch + 1, history[epoch])
    return model, history


# -- model files --------------------------------------------------------------


def _write_mlp(buf, mlp):
    buf.write(struct.pack("<I", len(mlp.layers)))
    for layer in mlp.layers:
        n_in, n_out = layer.weight.shape
        tag = ACTIVATIONS.index(layer.activation)
        buf.write(struct.pack("<IIB", n_in, n_out, tag))
        buf.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def save_model(model: DeepONetModel, path):
    """Binary layout: magic, version, width, metadata JSON, then for branch
    and trunk a layer count followed by (rows, cols, activation tag, weights,
    bias) per layer; floats are little-endian float64, row-major."""
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(struct.pack("<II", MODEL_VERSION, model.width))
    meta = json.dumps(model.metadata, sort_keys=True, separators=(",", ":")).encode()
    buf.write(struct.pack("<I", len(meta)) + meta)
    _write_mlp(buf, model.branch)
    _write_mlp(buf, model.trunk)
    Path(path).write_bytes(buf.getvalue())


def load_model(path) -> DeepONetModel:
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise FormatError(f"{path}: truncated model file")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    magic = take(len(MODEL_MAGIC))
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file (magic {magic!r})")
    version, width = struct.unpack("<II", take(8))
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: model format version {version}, expected {MODEL_VERSION}")
    (meta_len,) = struct.unpack("<I", take(4))
    meta = json.loads(take(meta_len).decode())

    def read_mlp():
        (count,) = struct.unpack("<I", take(4))
        layers = []
        for _ in range(count):
            n_in, n_out, tag = struct.unpack("<IIB", take(9))
            if tag >= len(ACTIVATIONS):
                raise FormatError(f"{path}: unknown activation tag {tag}")
            w = np.frombuffer(take(8 * n_in * n_out), "<f8").reshape(n_in, n_out).copy()
            b = np.frombuffer(take(8 * n_out), "<f8").copy()
            layers.append(Layer(w, b, ACTIVATIONS[tag]))
        return Mlp(layers)

    try:
        branch = read_mlp()
        trunk = read_mlp()
        model = DeepONetModel(branch, trunk, meta)
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: inconsistent layer shapes ({exc})") from exc
    if model.width != width:
        raise FormatError(f"{path}: header width {width} but layers give {model.width}")
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes in model file")
    return model
