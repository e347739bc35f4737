"""A small dense-network engine in float64 numpy.

Layers compute ``act(x @ W.T + b)`` with ``W`` stored ``(out, in)``.
Parameter updates never write into existing arrays: the optimizer swaps in
fresh arrays, so a list of layer references captured earlier stays a valid,
immutable snapshot and a forward cache can detect that it went stale.
"""

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .exceptions import FormatError, InvalidInputError, StaleCacheError

ACTIVATIONS = ("none", "relu", "sigmoid")
_ACT_CODES = {name: code for code, name in enumerate(ACTIVATIONS)}

MAGIC = b"AIRX"
FORMAT_VERSION = 1


def relu(a):
    return np.maximum(a, 0.0)


def sigmoid(a):
    # split branches keep exp() from overflowing for large |a|
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    e = np.exp(a[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _activate(a, kind):
    if kind == "relu":
        return relu(a)
    if kind == "sigmoid":
        return sigmoid(a)
    return a


def _activation_grad(a, out, kind, grad):
    if kind == "relu":
        return grad * (a > 0)
    if kind == "sigmoid":
        return grad * out * (1.0 - out)
    return grad


@dataclass
class Dense:
    """Fully connected layer.

    Attributes
    ----------
    weight : ndarray, shape (out_dim, in_dim)
    bias : ndarray, shape (out_dim,)
    activation : {"none", "relu", "sigmoid"}
    trainable : bool
        Frozen layers get no gradient and are skipped by the optimizer.
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "none"
    trainable: bool = True

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise InvalidInputError("weight must be (out, in) and bias (out,)")

    @classmethod
    def init(cls, in_dim, out_dim, activation="none", rng=None):
        """Uniform(-1/sqrt(in), 1/sqrt(in)) weights and zero biases."""
        if in_dim <= 0 or out_dim <= 0:
            raise InvalidInputError("layer dimensions must be positive")
        rng = np.random.default_rng(rng)
        bound = 1.0 / np.sqrt(in_dim)
        return cls(rng.uniform(-bound, bound, size=(out_dim, in_dim)),
                   np.zeros(out_dim), activation)

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]

    def copy(self):
        return Dense(self.weight.copy(), self.bias.copy(), self.activation, self.trainable)


@dataclass
class ForwardCache:
    inputs: list
    preacts: list
    outputs: list
    weights: list


def forward(layers, x):
    """Run ``x`` (``(in,)`` or ``(batch, in)``) through ``layers``.

    Returns
    -------
    output : ndarray
    cache : ForwardCache
        Needed by :func:`backward`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layers[0].in_dim:
        raise InvalidInputError(
            f"input width {x.shape[-1]} does not match first layer ({layers[0].in_dim})")
    cache = ForwardCache([], [], [], [])
    h = x
    for layer in layers:
        if h.shape[-1] != layer.in_dim:
            raise InvalidInputError("consecutive layer dimensions do not chain")
        a = h @ layer.weight.T + layer.bias
        out = _activate(a, layer.activation)
        cache.inputs.append(h)
        cache.preacts.append(a)
        cache.outputs.append(out)
        cache.weights.append(layer.weight)
        h = out
    return h, cache


def predict(layers, x):
    return forward(layers, x)[0]


def backward(layers, cache, grad_output, need_input_grad=False):
    """Reverse-mode gradients of a scalar loss.

    Parameters
    ----------
    grad_output : ndarray
        dLoss/d(network output), same shape as the forward output.
    need_input_grad : bool
        Also propagate to the network input (through frozen layers too).

    Returns
    -------
    grads : list
        ``(dW, db)`` per layer, ``None`` for frozen layers.
    grad_input : ndarray or None
    """
    if len(cache.weights) != len(layers) or any(
            w is not layer.weight for w, layer in zip(cache.weights, layers)):
        raise StaleCacheError("forward cache does not match current parameters")
    grads = [None] * len(layers)
    g = np.asarray(grad_output, dtype=np.float64)
    first_needed = 0
    if not need_input_grad:
        trainable = [i for i, layer in enumerate(layers) if layer.trainable]
        if not trainable:
            return grads, None
        first_needed = trainable[0]
    for i in range(len(layers) - 1, first_needed - 1, -1):
        layer = layers[i]
        g = _activation_grad(cache.preacts[i], cache.outputs[i], layer.activation, g)
        if layer.trainable:
            x = cache.inputs[i]
            if g.ndim == 1:
                grads[i] = (np.outer(g, x), g.copy())
            else:
                grads[i] = (g.T @ x, g.sum(axis=0))
        if i > 0 or need_input_grad:
            g = g @ layer.weight
    return grads, (g if need_input_grad else None)


def mse_loss(pred, target):
    """Mean over all elements of the squared difference."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InvalidInputError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    return 2.0 * (pred - target) / pred.size


class Adam:
    """Adam with bias correction.

    ``step`` takes a list of parameter arrays and matching gradients (``None``
    entries are skipped) and returns new arrays; inputs are never modified.
    Moments are keyed by position, so always pass parameters in the same order.
    """

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(params) != len(self.m):
            raise InvalidInputError("parameter list changed between Adam steps")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            if g is None:
                out.append(p)
                continue
            if np.shape(g) != np.shape(p):
                raise InvalidInputError("gradient shape does not match parameter")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            m_hat = self.m[i] / c1
            v_hat = self.v[i] / c2
            out.append(p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
        return out


def adam_step(state, params, grads):
    return state.step(params, grads)


def layer_params(layers):
    """Flat ``[W0, b0, W1, b1, ...]`` list."""
    out = []
    for layer in layers:
        out.extend((layer.weight, layer.bias))
    return out


def layer_grads(layers, grads):
    out = []
    for layer, g in zip(layers, grads):
        out.extend((None, None) if g is None else g)
    return out


def apply_update(layers, new_params):
    """Rebind layer tensors to the arrays returned by the optimizer."""
    for i, layer in enumerate(layers):
        layer.weight = new_params[2 * i]
        layer.bias = new_params[2 * i + 1]


def count_params(layers):
    return int(sum(layer.in_dim * layer.out_dim + layer.out_dim for layer in layers))


def count_flops(layers):
    """Two FLOPs per multiply-add of each affine map; activations excluded."""
    return int(sum(2 * layer.in_dim * layer.out_dim for layer in layers))


# -- persistence --------------------------------------------------------------

def save_params(path, layers):
    """Write layers in the ``AIRX`` binary parameter format."""
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(layers)))
        for layer in layers:
            f.write(struct.pack("<IIB", layer.in_dim, layer.out_dim,
                                _ACT_CODES[layer.activation]))
            f.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as f:
        data = f.read()
    return decode_params(data)


def decode_params(data):
    if len(data) < 12:
        raise FormatError("truncated header", len(data))
    if data[:4] != MAGIC:
        raise FormatError("bad magic", 0)
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}", 4)
    pos = 12
    layers = []
    for _ in range(n_layers):
        if pos + 9 > len(data):
            raise FormatError("truncated layer header", pos)
        in_dim, out_dim, code = struct.unpack_from("<IIB", data, pos)
        if code >= len(ACTIVATIONS):
            raise FormatError(f"unknown activation code {code}", pos + 8)
        pos += 9
        nbytes = 8 * (in_dim * out_dim + out_dim)
        if pos + nbytes > len(data):
            raise FormatError("truncated layer payload", pos)
        w = np.frombuffer(data, dtype="<f8", count=in_dim * out_dim, offset=pos)
        b = np.frombuffer(data, dtype="<f8", count=out_dim, offset=pos + 8 * in_dim * out_dim)
        pos += nbytes
        layers.append(Dense(w.reshape(out_dim, in_dim).astype(np.float64),
                            b.astype(np.float64), ACTIVATIONS[code]))
    if pos != len(data):
        raise FormatError("trailing bytes after last layer", pos)
    return layers


def export_csv(path, layers):
    """One row per scalar: layer, role, row, col, value."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["layer", "role", "row", "col", "value"])
        for i, layer in enumerate(layers):
            for (r, c), v in np.ndenumerate(layer.weight):
                writer.writerow([i, "weight", r, c, repr(float(v))])
            for r, v in enumerate(layer.bias):
                writer.writerow([i, "bias", r, 0, repr(float(v))])
