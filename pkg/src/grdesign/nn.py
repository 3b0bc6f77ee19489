"""A small reverse-mode neural network engine on numpy.

Layers cache what they need during ``forward`` and consume it in
``backward``; a :class:`Network` is a plain sequential stack. Everything is
float64 so finite-difference checks stay meaningful.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


class Parameter:
    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)


class Layer:
    def params(self) -> list[Parameter]:
        return []

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray, param_grads: bool = True) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, in_channels, out_channels, kernel=3, stride=1, padding=1, rng=None):
        rng = rng or np.random.default_rng(0)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        fan_in = in_channels * kernel * kernel
        bound = math.sqrt(6.0 / fan_in)
        self.weight = Parameter(rng.uniform(-bound, bound, (out_channels, in_channels, kernel, kernel)))
        self.bias = Parameter(np.zeros(out_channels))

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ShapeError(f"conv expects {self.in_channels} channels, got {c}")
        k, s, p = self.kernel, self.stride, self.padding
        return self.out_channels, (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1

    def forward(self, x, train=False):
        b, c, h, w = x.shape
        k, s, p = self.kernel, self.stride, self.padding
        _, ho, wo = self.output_shape((c, h, w))
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = np.empty((b, c, k, k, ho, wo))
        for i in range(k):
            for j in range(k):
                cols[:, :, i, j] = xp[:, :, i : i + s * ho : s, j : j + s * wo : s]
        cols = cols.reshape(b, c * k * k, ho * wo)
        self._cache = (x.shape, xp.shape, cols)
        out = self.weight.value.reshape(self.out_channels, -1) @ cols
        out += self.bias.value[None, :, None]
        return out.reshape(b, self.out_channels, ho, wo)

    def backward(self, grad, param_grads=True):
        x_shape, xp_shape, cols = self._cache
        b, c, h, w = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        ho, wo = grad.shape[2], grad.shape[3]
        g = grad.reshape(b, self.out_channels, ho * wo)
        if param_grads:
            self.weight.grad += np.einsum("bol,bkl->ok", g, cols).reshape(self.weight.value.shape)
            self.bias.grad += g.sum(axis=(0, 2))
        dcols = (self.weight.value.reshape(self.out_channels, -1).T @ g).reshape(b, c, k, k, ho, wo)
        dxp = np.zeros(xp_shape)
        for i in range(k):
            for j in range(k):
                dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[:, :, i, j]
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class Dense(Layer):
    def __init__(self, in_dim, out_dim, rng=None, bias_init=0.0):
        rng = rng or np.random.default_rng(0)
        bound = math.sqrt(6.0 / in_dim)
        self.weight = Parameter(rng.uniform(-bound, bound, (in_dim, out_dim)))
        self.bias = Parameter(np.full(out_dim, float(bias_init)))

    def params(self):
        return [self.weight, self.bias]

    def output_shape(self, shape):
        if shape != (self.weight.value.shape[0],):
            raise ShapeError(f"dense expects ({self.weight.value.shape[0]},), got {shape}")
        return (self.weight.value.shape[1],)

    def forward(self, x, train=False):
        self._x = x
        return x @ self.weight.value + self.bias.value

    def backward(self, grad, param_grads=True):
        if param_grads:
            self.weight.grad += self._x.T @ grad
            self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value.T


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, grad, param_grads=True):
        return grad * self._mask


class LeakyReLU(Layer):
    def __init__(self, slope: float = 0.01):
        self.slope = slope

    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, self.slope * x)

    def backward(self, grad, param_grads=True):
        return np.where(self._mask, grad, self.slope * grad)


class Dropout(Layer):
    def __init__(self, p: float = 0.2, rng=None):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout probability must be in [0, 1)")
        self.p = p
        self.rng = rng or np.random.default_rng(0)

    def forward(self, x, train=False):
        if not train or self.p == 0.0:
            self._scale = None
            return x
        keep = self.rng.random(x.shape) >= self.p
        self._scale = keep / (1.0 - self.p)
        return x * self._scale

    def backward(self, grad, param_grads=True):
        return grad if self._scale is None else grad * self._scale


class Flatten(Layer):
    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad, param_grads=True):
        return grad.reshape(self._shape)


@dataclass
class NetworkSpec:
    """Input shape (channels, height, width) plus ordered layer descriptors."""

    input_shape: tuple[int, ...]
    layers: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"input_shape": list(self.input_shape), "layers": self.layers}

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        return cls(tuple(data["input_shape"]), [dict(d) for d in data["layers"]])


class Network:
    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.layers: list[Layer] = []
        shape = tuple(spec.input_shape)
        for d in spec.layers:
            kind = d["type"]
            if kind == "conv":
                layer = Conv2d(
                    shape[0], d["out_channels"], d.get("kernel", 3),
                    d.get("stride", 1), d.get("padding", 1), rng,
                )
            elif kind == "dense":
                layer = Dense(shape[0], d["out_dim"], rng, d.get("bias_init", 0.0))
            elif kind == "relu":
                layer = ReLU()
            elif kind == "leaky_relu":
                layer = LeakyReLU(d.get("slope", 0.01))
            elif kind == "dropout":
                layer = Dropout(d.get("p", 0.2), np.random.default_rng(rng.integers(2**63)))
            elif kind == "flatten":
                layer = Flatten()
            else:
                raise ValueError(f"unknown layer type {kind!r}")
            shape = layer.output_shape(shape)
            self.layers.append(layer)
        self.output_shape = shape

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(self.spec.input_shape)

    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params()]

    def n_params(self) -> int:
        return sum(p.value.size for p in self.params())

    def zero_grad(self) -> None:
        for p in self.params():
            p.zero_grad()

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.value.ravel() for p in self.params()])

    def set_flat(self, flat: np.ndarray) -> None:
        if len(flat) != self.n_params():
            raise ShapeError(f"expected {self.n_params()} parameters, got {len(flat)}")
        i = 0
        for p in self.params():
            n = p.value.size
            p.value[...] = np.asarray(flat[i : i + n]).reshape(p.value.shape)
            i += n

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape == self.input_shape:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"network expects {self.input_shape}, got {x.shape[1:]}")
        return x

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        out = self._check(x)
        for layer in self.layers:
            out = layer.forward(out, train)
        return out

    __call__ = forward

    def backward(self, grad: np.ndarray, param_grads: bool = True) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad, param_grads)
        return grad

    def predict(self, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
        """Scalar-head convenience: returns a 1-D array of outputs."""
        x = self._check(x)
        outs = [self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(outs).reshape(len(x), -1).squeeze(-1)


# losses ---------------------------------------------------------------------


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    labels = np.asarray(labels, dtype=np.int64).ravel()
    probs = softmax(logits)
    n = logits.shape[0]
    loss = -np.mean(np.log(probs[np.arange(n), labels] + 1e-300))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


LOSSES = {"mse": mse_loss, "cross_entropy": cross_entropy_loss}


def backward(net: Network, loss_kind: str, x: np.ndarray, target) -> tuple[float, list[np.ndarray], np.ndarray]:
    """Loss, per-parameter gradients and input gradient, dropout disabled."""
    net.zero_grad()
    out = net.forward(x, train=False)
    loss, grad = LOSSES[loss_kind](out, target)
    gx = net.backward(grad)
    return loss, [p.grad.copy() for p in net.params()], gx


def input_gradient(net: Network, x: np.ndarray) -> np.ndarray:
    """d(sum of outputs)/dx; for one sample this is the gradient of its output."""
    single = np.asarray(x).shape == net.input_shape
    out = net.forward(x, train=False)
    gx = net.backward(np.ones_like(out), param_grads=False)
    return gx[0] if single else gx


def predict_and_gradient(net: Network, x: np.ndarray) -> tuple[float, np.ndarray]:
    out = net.forward(x, train=False)
    gx = net.backward(np.ones_like(out), param_grads=False)
    return float(out.ravel()[0]), gx[0]


# optimisation ---------------------------------------------------------------


class Adam:
    def __init__(self, params: Sequence[Parameter], lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for p, m, v in zip(self.params, self.m, self.v):
            m *= b1
            m += (1 - b1) * p.grad
            v *= b2
            v += (1 - b2) * p.grad**2
            m_hat = m / (1 - b1**self.t)
            v_hat = v / (1 - b2**self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 30
    batch_size: int = 64
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    validation_fraction: float = 0.2
    seed: int = 0
    loss: str = "mse"

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainingReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = math.inf
    n_train: int = 0
    n_val: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_loss(net: Network, x: np.ndarray, y: np.ndarray, loss_kind: str, batch_size=512) -> float:
    if len(x) == 0:
        return math.nan
    total = 0.0
    for i in range(0, len(x), batch_size):
        out = net.forward(x[i : i + batch_size])
        loss, _ = LOSSES[loss_kind](out, y[i : i + batch_size])
        total += loss * len(out)
    return total / len(x)


def split_indices(n: int, validation_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    n_val = int(round(n * validation_fraction)) if n > 1 else 0
    return perm[n_val:], perm[:n_val]


def train(net: Network, x: np.ndarray, y: np.ndarray, config: TrainConfig,
          log=None) -> TrainingReport:
    """Minibatch Adam; the parameters with the best validation loss are kept."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if len(x) == 0:
        raise EmptyDataset("training set is empty")
    if x.shape[1:] != net.input_shape:
        raise ShapeError(f"network expects {net.input_shape}, got {x.shape[1:]}")
    tr, va = split_indices(len(x), config.validation_fraction, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(net.params(), config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)
    report = TrainingReport(n_train=len(tr), n_val=len(va))
    best = net.get_flat()
    for epoch in range(config.epochs):
        order = tr[rng.permutation(len(tr))]
        total = 0.0
        for i in range(0, len(order), config.batch_size):
            idx = order[i : i + config.batch_size]
            opt.zero_grad()
            out = net.forward(x[idx], train=True)
            loss, grad = LOSSES[config.loss](out, y[idx])
            net.backward(grad)
            opt.step()
            total += loss * len(idx)
        report.train_loss.append(total / len(tr))
        val = evaluate_loss(net, x[va], y[va], config.loss) if len(va) else report.train_loss[-1]
        report.val_loss.append(val)
        if val < report.best_val_loss:
            report.best_val_loss, report.best_epoch = val, epoch
            best = net.get_flat()
        if log is not None:
            log(f"epoch {epoch + 1}/{config.epochs} train {report.train_loss[-1]:.4f} val {val:.4f}")
    net.set_flat(best)
    return report


# architectures ----------------------------------------------------------------


WCD_CONV_CHANNELS = (32, 32, 32, 32, 32)


def wcd_network_spec(channels: int, size: int, dropout: float = 0.2,
                     conv_channels: tuple[int, ...] = WCD_CONV_CHANNELS) -> NetworkSpec:
    """Conv stack -> dense 32 -> dense 16 -> ReLU scalar head."""
    layers: list[dict] = []
    for out in conv_channels:
        layers += [{"type": "conv", "out_channels": out, "kernel": 3, "padding": 1}, {"type": "leaky_relu"}]
    layers.append({"type": "flatten"})
    for width in (32, 16):
        layers += [{"type": "dense", "out_dim": width}, {"type": "leaky_relu"}, {"type": "dropout", "p": dropout}]
    layers += [{"type": "dense", "out_dim": 1, "bias_init": 1.0}, {"type": "relu"}]
    return NetworkSpec((channels, size, size), layers)


def policy_network_spec(channels: int, height: int, width: int | None = None) -> NetworkSpec:
    return NetworkSpec(
        (channels, height, width if width is not None else height),
        [
            {"type": "conv", "out_channels": 16, "kernel": 3, "padding": 1},
            {"type": "leaky_relu"},
            {"type": "conv", "out_channels": 32, "kernel": 3, "padding": 1},
            {"type": "leaky_relu"},
            {"type": "conv", "out_channels": 32, "kernel": 3, "padding": 1},
            {"type": "leaky_relu"},
            {"type": "flatten"},
            {"type": "dense", "out_dim": 64},
            {"type": "leaky_relu"},
            {"type": "dense", "out_dim": 4},
        ],
    )


# checkpoints -----------------------------------------------------------------


def save_model(net: Network, path: str | Path, metadata: dict | None = None) -> None:
    payload = {
        "format": "grdesign-model/1",
        "spec": net.spec.to_dict(),
        "seed": net.seed,
        "params": [p.value.ravel().tolist() for p in net.params()],
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path: str | Path) -> tuple[Network, dict]:
    payload = json.loads(Path(path).read_text())
    net = Network(NetworkSpec.from_dict(payload["spec"]), payload.get("seed", 0))
    params = net.params()
    if len(params) != len(payload["params"]):
        raise ShapeError("checkpoint does not match its own spec")
    for p, flat in zip(params, payload["params"]):
        p.value[...] = np.asarray(flat, dtype=np.float64).reshape(p.value.shape)
    return net, payload.get("metadata", {})
