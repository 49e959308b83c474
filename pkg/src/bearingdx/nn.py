"""Fully-connected ReLU network with hand-written backprop and Adam.

Shapes follow ``num_features -> 128 -> 128 -> num_actions``. Everything runs
in float64. Batches are rows: ``X`` has shape ``(n, num_features)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .exceptions import InvalidParamError, ShapeMismatchError
from .signal import FaultClass

HIDDEN_UNITS = 128
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

CHECKPOINT_MAGIC = b"BDXM"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class HyperParams:
    batch_size: int = 64
    learning_rate: float = 0.001
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.01
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidParamError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise InvalidParamError("learning_rate must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParamError("gamma must lie in [0, 1]")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise InvalidParamError("epsilon_decay must lie in (0, 1]")
        if not 0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0:
            raise InvalidParamError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if self.epochs < 0:
            raise InvalidParamError("epochs must be >= 0")


@dataclass(eq=False)
class Mlp:
    """Parameters of the three dense layers. Also used to hold gradients."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        f, h = self.W1.shape
        a = self.W3.shape[1]
        expected = {"W1": (f, h), "b1": (h,), "W2": (h, h), "b2": (h,), "W3": (h, a), "b3": (a,)}
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatchError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def num_features(self) -> int:
        return self.W1.shape[0]

    @property
    def num_actions(self) -> int:
        return self.W3.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[1]

    def params(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    @classmethod
    def from_params(cls, arrays) -> Mlp:
        return cls(*arrays)

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params())

    def copy(self) -> Mlp:
        return Mlp.from_params([p.copy() for p in self.params()])

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def zeros_like(self) -> Mlp:
        return Mlp.from_params([np.zeros_like(p) for p in self.params()])


Gradients = Mlp


def init_mlp(num_features: int, num_actions: int = 3, seed: int = 0, hidden: int = HIDDEN_UNITS) -> Mlp:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    if num_features < 1 or num_actions < 2 or hidden < 1:
        raise InvalidParamError("need num_features >= 1, num_actions >= 2, hidden >= 1")
    rng = np.random.default_rng(seed)

    def layer(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)

    W1, b1 = layer(num_features, hidden)
    W2, b2 = layer(hidden, hidden)
    W3, b3 = layer(hidden, num_actions)
    return Mlp(W1, b1, W2, b2, W3, b3)


def _check_input(net: Mlp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.num_features or x.ndim not in (1, 2):
        raise ShapeMismatchError(f"network expects {net.num_features} features, got shape {x.shape}")
    return x


def _forward_cache(net: Mlp, X: np.ndarray):
    z1 = X @ net.W1 + net.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ net.W2 + net.b2
    h2 = np.maximum(z2, 0.0)
    out = h2 @ net.W3 + net.b3
    return z1, h1, z2, h2, out


def forward(net: Mlp, x) -> np.ndarray:
    """Raw outputs (logits or Q-values) for one input or a batch of rows."""
    x = _check_input(net, x)
    return _forward_cache(net, x)[-1]


def backward(net: Mlp, X, dout) -> Gradients:
    """Gradient of the *mean* batch loss.

    ``dout[i]`` is the derivative of example ``i``'s loss with respect to the
    network output. ReLU's subgradient at 0 is taken as 0.
    """
    X = _check_input(net, X)
    if X.ndim == 1:
        X = X[None, :]
    dout = np.asarray(dout, dtype=np.float64).reshape(X.shape[0], -1)
    if dout.shape[1] != net.num_actions:
        raise ShapeMismatchError(f"output gradient has {dout.shape[1]} columns, expected {net.num_actions}")
    if X.shape[0] == 0:
        raise InvalidParamError("empty batch")
    return _backward_from_cache(net, X, _forward_cache(net, X), dout)


def _backward_from_cache(net, X, cache, dout):
    z1, h1, z2, h2, _ = cache
    d3 = dout / X.shape[0]
    gW3 = h2.T @ d3
    gb3 = d3.sum(axis=0)
    d2 = (d3 @ net.W3.T) * (z2 > 0)
    gW2 = h1.T @ d2
    gb2 = d2.sum(axis=0)
    d1 = (d2 @ net.W2.T) * (z1 > 0)
    gW1 = X.T @ d1
    gb1 = d1.sum(axis=0)
    return Mlp(gW1, gb1, gW2, gb2, gW3, gb3)


def loss_and_gradients(net: Mlp, X, head):
    """Run ``head(outputs) -> (loss, dout)`` on a batch and backpropagate.

    Shares a single forward pass between the loss and the gradient.
    """
    X = _check_input(net, X)
    if X.ndim == 1:
        X = X[None, :]
    cache = _forward_cache(net, X)
    loss, dout = head(cache[-1])
    return loss, _backward_from_cache(net, X, cache, dout)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


PROB_FLOOR = 1e-12


def cross_entropy(probabilities, target_class: int) -> float:
    p = np.asarray(probabilities, dtype=np.float64)
    if not 0 <= target_class < p.size:
        raise IndexError(f"target class {target_class} out of range for {p.size} classes")
    return float(-np.log(max(p[target_class], PROB_FLOOR)))


def cross_entropy_head(logits, targets, class_weights=None):
    """Mean (optionally class-weighted) softmax cross-entropy on logits.

    Returns ``(loss, dlogits)`` with ``dlogits`` per example, ready for
    :func:`backward`.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    n = logits.shape[0]
    logp = log_softmax(logits)
    rows = np.arange(n)
    per_example = -logp[rows, targets]
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    if class_weights is not None:
        w = np.asarray(class_weights, dtype=np.float64)[targets]
        per_example = per_example * w
        grad *= w[:, None]
    return float(per_example.mean()), grad


def squared_q_head(q_values, actions, targets):
    """Mean of ``(Q[s, a] - target)**2`` over the batch; ``(loss, dQ)``."""
    q_values = np.atleast_2d(np.asarray(q_values, dtype=np.float64))
    actions = np.asarray(actions, dtype=np.int64).reshape(-1)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    rows = np.arange(q_values.shape[0])
    err = q_values[rows, actions] - targets
    grad = np.zeros_like(q_values)
    grad[rows, actions] = 2.0 * err
    return float(np.mean(err**2)), grad


@dataclass
class AdamState:
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: Mlp, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
        zeros = [np.zeros_like(p) for p in net.params()]
        return cls([z.copy() for z in zeros], zeros, 0, beta1, beta2, eps)


def adam_step(net: Mlp, grads: Gradients, state: AdamState, lr: float):
    """One bias-corrected Adam update; returns new ``(net, state)``."""
    b1, b2 = state.beta1, state.beta2
    t = state.t + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(net.params(), grads.params(), state.m, state.v):
        if p.shape != g.shape:
            raise ShapeMismatchError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_params.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return Mlp.from_params(new_params), replace(state, m=new_m, v=new_v, t=t)


_FLUSH_EVERY = 1000
_FLUSH_BELOW = 1e-200


def adam_update_(net: Mlp, grads: Gradients, state: AdamState, lr: float) -> None:
    """In-place Adam for training loops that own ``net`` and ``state``.

    Same update as :func:`adam_step` with the bias corrections folded into
    the step size and epsilon; agrees with it to rounding error.
    """
    b1, b2 = state.beta1, state.beta2
    state.t += 1
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    step = lr * np.sqrt(c2) / c1
    eps_hat = state.eps * np.sqrt(c2)
    for p, g, m, v in zip(net.params(), grads.params(), state.m, state.v):
        tmp = g * (1.0 - b1)
        m *= b1
        m += tmp
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - b2
        v *= b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp += eps_hat
        np.divide(m, tmp, out=tmp)
        tmp *= step
        p -= tmp
        if state.t % _FLUSH_EVERY == 0:
            # moments of parameters with zero gradient decay geometrically and
            # would reach subnormal range, where float arithmetic is ~20x slower
            m[np.abs(m) < _FLUSH_BELOW] = 0.0
            v[v < _FLUSH_BELOW] = 0.0


def predict(net: Mlp, x):
    """Arg-max class; ties go to the lowest index.

    A single input gives a :class:`FaultClass`, a batch gives an int array.
    """
    out = forward(net, x)
    if out.ndim == 1:
        return FaultClass(int(np.argmax(out)))
    return np.argmax(out, axis=1)


# --------------------------------------------------------------------------
# Checkpoints: header (magic, version, num_features, num_actions) then the
# little-endian float64 parameters in layer order.

def checkpoint_bytes(net: Mlp) -> bytes:
    header = _HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, net.num_features, net.num_actions)
    return header + b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.params())


def save_checkpoint(path, net: Mlp) -> None:
    Path(path).write_bytes(checkpoint_bytes(net))


def _hidden_from_count(n_values: int, f: int, a: int) -> int:
    # n = f*h + h + h*h + h + h*a + a  =>  h^2 + (f + a + 2) h + (a - n) = 0
    b = f + a + 2
    h = int(round((-b + np.sqrt(b * b - 4 * (a - n_values))) / 2))
    if h < 1 or h * h + b * h + a != n_values:
        raise ShapeMismatchError("checkpoint payload does not match any hidden width")
    return h


def load_checkpoint(path) -> Mlp:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ShapeMismatchError(f"{path}: truncated checkpoint header")
    magic, version, f, a = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC or version != CHECKPOINT_VERSION:
        raise ShapeMismatchError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
    payload = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    h = _hidden_from_count(payload.size, f, a)
    shapes = [(f, h), (h,), (h, h), (h,), (h, a), (a,)]
    arrays, pos = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(payload[pos:pos + size].reshape(shape).astype(np.float64))
        pos += size
    return Mlp.from_params(arrays)
