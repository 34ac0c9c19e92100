"""Small dense feed-forward networks with hand-written backprop, SGD/Adam and
a finite-difference gradient checker.

Loss convention: per-example ``0.5 * (pred - target) ** 2``, averaged over the
batch. Loss histories report the plain mean squared error.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import TrainingError, ValidationError

log = logging.getLogger(__name__)

FORMAT = "attrexplain-ffn/1"
ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray    # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weight.ndim != 2 or self.weight.shape[0] != self.bias.shape[0]:
            raise ValidationError(f"weight {self.weight.shape} and bias {self.bias.shape} disagree")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


class FeedForwardNet:
    """Stack of affine layers; hidden layers use ReLU, the last is a scalar affine map."""

    def __init__(self, layers):
        self.layers = list(layers)
        if not self.layers:
            raise ValidationError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValidationError(f"layer widths do not chain: {a.out_dim} -> {b.in_dim}")
        last = self.layers[-1]
        if last.out_dim != 1 or last.activation != "identity":
            raise ValidationError("last layer must be affine with scalar output")

    @classmethod
    def create(cls, in_dim: int, hidden=(), seed: int = 0, activation: str = "relu") -> "FeedForwardNet":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
        rng = np.random.default_rng(seed)
        sizes = [in_dim, *hidden, 1]
        layers = []
        for k, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            b = rng.uniform(-bound, bound, size=fan_out)
            act = "identity" if k == len(sizes) - 2 else activation
            layers.append(Layer(w, b, act))
        return cls(layers)

    @classmethod
    def zeros(cls, in_dim: int, hidden=()) -> "FeedForwardNet":
        sizes = [in_dim, *hidden, 1]
        return cls([Layer(np.zeros((o, i)), np.zeros(o), "identity" if k == len(sizes) - 2 else "relu")
                    for k, (i, o) in enumerate(zip(sizes, sizes[1:]))])

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> "FeedForwardNet":
        return copy.deepcopy(self)

    def __call__(self, x):
        return forward(self, x)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "layers": [
                {"shape": list(l.weight.shape), "activation": l.activation,
                 "weight": l.weight.ravel().tolist(), "bias": l.bias.tolist()}
                for l in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedForwardNet":
        if d.get("format") != FORMAT:
            raise ValidationError(f"unsupported network format {d.get('format')!r}")
        return cls([Layer(np.array(l["weight"], dtype=np.float64).reshape(l["shape"]),
                          np.array(l["bias"], dtype=np.float64), l["activation"])
                    for l in d["layers"]])


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != net.in_dim:
        raise ValidationError(f"input width {x2.shape[-1]} does not match network input {net.in_dim}")
    return x2, single


def _forward_cache(net, x2):
    acts, pre = [x2], []
    a = x2
    for layer in net.layers:
        z = a @ layer.weight.T + layer.bias
        pre.append(z)
        a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        acts.append(a)
    return acts, pre


def forward(net: FeedForwardNet, x):
    """Scalar prediction for a vector, or a 1-D array of predictions for a matrix."""
    x2, single = _as_batch(net, x)
    acts, _ = _forward_cache(net, x2)
    y = acts[-1][:, 0]
    return float(y[0]) if single else y


def backward(net: FeedForwardNet, x, target):
    """Gradients of mean ``0.5 * (pred - target)**2`` w.r.t. ``net.params()``."""
    x2, single = _as_batch(net, x)
    t = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if t.shape[0] != x2.shape[0]:
        raise ValidationError(f"{x2.shape[0]} inputs but {t.shape[0]} targets")
    acts, pre = _forward_cache(net, x2)
    delta = (acts[-1] - t[:, None]) / x2.shape[0]
    grads = [None] * (2 * net.depth)
    for k in range(net.depth - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == "relu":
            delta = delta * (pre[k] > 0)
        grads[2 * k] = delta.T @ acts[k]
        grads[2 * k + 1] = delta.sum(axis=0)
        if k:
            delta = delta @ layer.weight
    return grads


def mse(net: FeedForwardNet, x, target) -> float:
    pred = forward(net, np.atleast_2d(x))
    return float(np.mean((pred - np.asarray(target, dtype=np.float64)) ** 2))


def numerical_gradient(net: FeedForwardNet, x, target, eps: float = 1e-6):
    """Central finite differences of the same loss ``backward`` differentiates."""
    x2, _ = _as_batch(net, x)
    t = np.atleast_1d(np.asarray(target, dtype=np.float64))

    def loss():
        return 0.5 * np.mean((forward(net, x2) - t) ** 2)

    out = []
    for p in net.params():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss()
            flat[j] = orig - eps
            down = loss()
            flat[j] = orig
            gflat[j] = (up - down) / (2 * eps)
        out.append(g)
    return out


def relative_error(a, b, floor: float = 1e-12) -> float:
    """||a - b|| / (||a|| + ||b||) over all parameter arrays flattened together."""
    a = np.concatenate([np.ravel(v) for v in a])
    b = np.concatenate([np.ravel(v) for v in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), floor))


class SGD:
    kind = "sgd"

    def __init__(self, lr: float = 0.01):
        self.lr = lr

    def step(self, params, grads):
        for p, g in zip(params, grads):
            p -= self.lr * g
        return params


class Adam:
    kind = "adam"

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(params) != len(self.m) or any(p.shape != m.shape for p, m in zip(params, self.m)):
            raise ValidationError("parameter shapes changed between Adam steps")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


@dataclass
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 256
    seed: int = 0
    tolerance: float = 1e-4   # relative epoch-loss improvement
    patience: int = 3         # consecutive epochs below tolerance before stopping
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValidationError("tolerance must be positive")
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValidationError("batch_size, max_epochs and patience must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")

    def make_optimizer(self):
        if self.optimizer == "sgd":
            return SGD(self.lr)
        return Adam(self.lr, self.beta1, self.beta2, self.eps)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    net: FeedForwardNet
    losses: list = field(default_factory=list)  # full-data MSE after each epoch
    initial_loss: float = float("nan")

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else self.initial_loss

    @property
    def epochs(self) -> int:
        return len(self.losses)


def has_converged(losses, reference: float, tolerance: float, patience: int) -> bool:
    """True when the last ``patience`` epochs each improved by less than ``tolerance`` (relative)."""
    if len(losses) < patience:
        return False
    history = [reference, *losses]
    for prev, cur in zip(history[-patience - 1:-1], history[-patience:]):
        if prev <= 0.0:
            continue
        if (prev - cur) / prev >= tolerance:
            return False
    return True


def train(net: FeedForwardNet, x, y, config: TrainConfig | None = None) -> TrainResult:
    """Mini-batch training on a copy of ``net``; the input network is left untouched."""
    config = config or TrainConfig()
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if len(x) == 0:
        raise ValidationError("cannot train on an empty dataset")
    if len(x) != len(y):
        raise ValidationError(f"{len(x)} inputs but {len(y)} targets")
    net = net.copy()
    params = net.params()
    opt = config.make_optimizer()
    rng = np.random.default_rng(config.seed)
    result = TrainResult(net, [], mse(net, x, y))
    n, bs = len(x), config.batch_size
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        for s in range(0, n, bs):
            b = order[s:s + bs]
            opt.step(params, backward(net, x[b], y[b]))
        loss = mse(net, x, y)
        if not np.isfinite(loss):
            raise TrainingError(f"training diverged at epoch {epoch} (loss={loss})")
        result.losses.append(loss)
        if has_converged(result.losses, result.initial_loss, config.tolerance, config.patience):
            break
    log.info("trained %d epochs, final mse %.5f", result.epochs, result.final_loss)
    return result
