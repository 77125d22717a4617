"""Sequential layer graphs: layer lists, initialization, forward and backward passes."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import SpecError, UsageError
from . import layers as L

KINDS = ("conv1d", "conv2d", "maxpool", "dense", "dropout", "lstm", "softmax", "frames", "sequence")
ACTIVATIONS = ("relu", "linear", "tanh", "sigmoid")


@dataclass(frozen=True)
class LayerSpec:
    """One layer. ``frames``/``sequence`` reshape (B, H, W, N) stacks into
    per-frame images and back into (B, N, features) for a recurrent head."""

    kind: str
    filters: int = 0
    kernel: tuple = ()
    pool: tuple = ()
    units: int = 0
    rate: float = 0.0
    recurrent_rate: float = 0.0
    activation: str = "linear"
    steps: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SpecError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise SpecError(f"unknown activation {self.activation!r}")
        if not (0 <= self.rate < 1 and 0 <= self.recurrent_rate < 1):
            raise SpecError("dropout rates must lie in [0, 1)")
        if self.kind in ("conv1d", "conv2d") and (self.filters <= 0 or not self.kernel or min(self.kernel) <= 0):
            raise SpecError(f"{self.kind} needs positive filters and kernel")
        if self.kind in ("dense", "lstm") and self.units <= 0:
            raise SpecError(f"{self.kind} needs positive units")
        if self.kind == "maxpool" and (not self.pool or min(self.pool) <= 0):
            raise SpecError("maxpool needs a positive pool size")


def conv1d(filters, k=3, activation="relu"):
    return LayerSpec("conv1d", filters=filters, kernel=(k,), activation=activation)


def conv2d(filters, k=3, activation="relu"):
    return LayerSpec("conv2d", filters=filters, kernel=(k, k), activation=activation)


def maxpool(*pool):
    return LayerSpec("maxpool", pool=tuple(pool))


def dense(units, activation="relu"):
    return LayerSpec("dense", units=units, activation=activation)


def dropout(rate):
    return LayerSpec("dropout", rate=rate)


def lstm(units, rate=0.0, recurrent_rate=0.0):
    return LayerSpec("lstm", units=units, rate=rate, recurrent_rate=recurrent_rate)


def softmax():
    return LayerSpec("softmax")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple
    input_shape: tuple
    n_classes: int = 2
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        self.shapes()

    def shapes(self):
        """Per-sample output shape after each layer; raises SpecError if the chain breaks."""
        shape = self.input_shape
        out = []
        for i, ls in enumerate(self.layers):
            shape = _out_shape(ls, shape, i)
            out.append(shape)
        if not self.layers or self.layers[-1].kind != "softmax":
            raise SpecError("model must end with a softmax layer")
        if shape != (self.n_classes,):
            raise SpecError(f"softmax receives {shape}, expected ({self.n_classes},)")
        return out

    def to_dict(self):
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "n_classes": self.n_classes,
            "layers": [{k: v for k, v in asdict(ls).items() if v not in (0, 0.0, (), "linear") or k == "kind"} for ls in self.layers],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        layers = []
        for rec in d["layers"]:
            rec = dict(rec)
            for key in ("kernel", "pool"):
                if key in rec:
                    rec[key] = tuple(rec[key])
            layers.append(LayerSpec(**rec))
        return cls(tuple(layers), tuple(d["input_shape"]), d.get("n_classes", 2), d.get("name", ""))


def _out_shape(ls, shape, i):
    k = ls.kind
    if k == "conv1d":
        if len(shape) != 2 or len(ls.kernel) != 1:
            raise SpecError(f"layer {i}: conv1d needs (L, C) input, got {shape}")
        return (shape[0], ls.filters)
    if k == "conv2d":
        if len(shape) != 3 or len(ls.kernel) != 2:
            raise SpecError(f"layer {i}: conv2d needs (H, W, C) input, got {shape}")
        return (shape[0], shape[1], ls.filters)
    if k == "maxpool":
        if len(shape) == 2 and len(ls.pool) == 1:
            out = (shape[0] // ls.pool[0], shape[1])
        elif len(shape) == 3 and len(ls.pool) == 2:
            out = (shape[0] // ls.pool[0], shape[1] // ls.pool[1], shape[2])
        else:
            raise SpecError(f"layer {i}: pool {ls.pool} does not fit input {shape}")
        if 0 in out:
            raise SpecError(f"layer {i}: pooling {shape} by {ls.pool} leaves nothing")
        return out
    if k == "dense":
        return (ls.units,)
    if k in ("dropout", "softmax"):
        return shape
    if k == "lstm":
        if len(shape) != 2:
            raise SpecError(f"layer {i}: lstm needs (T, F) input, got {shape}")
        return (ls.units,)
    if k == "frames":
        if len(shape) != 3:
            raise SpecError(f"layer {i}: frames needs (H, W, N) input, got {shape}")
        return (shape[0], shape[1], 1)
    if k == "sequence":
        if ls.steps <= 0:
            raise SpecError(f"layer {i}: sequence needs steps > 0")
        return (ls.steps, int(np.prod(shape)))
    raise SpecError(f"unknown layer kind {k!r}")


# --- parameters -------------------------------------------------------------------


def xavier_init(shape, rng, fan_in=None, fan_out=None, dtype=np.float32):
    """Glorot-uniform tensor: U(-sqrt(6 / (fan_in + fan_out)), +sqrt(...)).

    For kernels (..., C_in, C_out) the receptive field multiplies both fans.
    """
    shape = tuple(shape)
    if fan_in is None or fan_out is None:
        if len(shape) < 2:
            raise SpecError("fan-in/fan-out need at least a 2-D shape")
        receptive = int(np.prod(shape[:-2])) if len(shape) > 2 else 1
        fan_in, fan_out = shape[-2] * receptive, shape[-1] * receptive
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(spec, rng, dtype=np.float32):
    """Xavier weights, zero biases (LSTM forget-gate bias 1)."""
    params = {}
    shape = spec.input_shape
    for i, ls in enumerate(spec.layers):
        if ls.kind == "conv1d":
            params[f"{i}.W"] = xavier_init((ls.kernel[0], shape[-1], ls.filters), rng, dtype=dtype)
            params[f"{i}.b"] = np.zeros(ls.filters, dtype=dtype)
        elif ls.kind == "conv2d":
            params[f"{i}.W"] = xavier_init((*ls.kernel, shape[-1], ls.filters), rng, dtype=dtype)
            params[f"{i}.b"] = np.zeros(ls.filters, dtype=dtype)
        elif ls.kind == "dense":
            fan_in = int(np.prod(shape))
            params[f"{i}.W"] = xavier_init((fan_in, ls.units), rng, dtype=dtype)
            params[f"{i}.b"] = np.zeros(ls.units, dtype=dtype)
        elif ls.kind == "lstm":
            u, feat = ls.units, shape[-1]
            params[f"{i}.Wx"] = xavier_init((feat, 4 * u), rng, dtype=dtype)
            params[f"{i}.Wh"] = xavier_init((u, 4 * u), rng, dtype=dtype)
            b = np.zeros(4 * u, dtype=dtype)
            b[u : 2 * u] = 1.0
            params[f"{i}.b"] = b
        shape = _out_shape(ls, shape, i)
    return params


def n_params(params):
    return int(sum(v.size for v in params.values()))


# --- passes --------------------------------------------------------------------------


def forward(spec, params, x, training=False, rng=None):
    """Logits for a batch plus the per-layer caches needed by ``backward``."""
    dtype = next(iter(params.values())).dtype if params else np.float64
    x = np.asarray(x, dtype=dtype)
    if tuple(x.shape[1:]) != spec.input_shape:
        raise SpecError(f"input shape {x.shape[1:]} does not match model input {spec.input_shape}")
    if training and rng is None:
        raise UsageError("training forward pass needs an rng for dropout")
    caches = []
    for i, ls in enumerate(spec.layers):
        k = ls.kind
        if k in ("conv1d", "conv2d", "dense"):
            fwd = {"conv1d": L.conv1d_forward, "conv2d": L.conv2d_forward, "dense": L.dense_forward}[k]
            z, c = fwd(x, params[f"{i}.W"], params[f"{i}.b"])
            x = L.activation_forward(z, ls.activation)
            caches.append((c, x))
        elif k == "maxpool":
            if len(ls.pool) == 1:
                x, c = L.maxpool1d_forward(x, ls.pool[0])
            else:
                x, c = L.maxpool2d_forward(x, ls.pool)
            caches.append(c)
        elif k == "dropout":
            x, c = L.dropout_forward(x, ls.rate, training, rng)
            caches.append(c)
        elif k == "lstm":
            x, c = L.lstm_forward(
                x, params[f"{i}.Wx"], params[f"{i}.Wh"], params[f"{i}.b"], ls.rate, ls.recurrent_rate, training, rng
            )
            caches.append(c)
        elif k == "frames":
            b, h, w, n = x.shape
            x = x.transpose(0, 3, 1, 2).reshape(b * n, h, w, 1)
            caches.append((b, h, w, n))
        elif k == "sequence":
            caches.append(x.shape)
            x = x.reshape(-1, ls.steps, int(np.prod(x.shape[1:])))
        elif k == "softmax":
            caches.append(None)
    return x, caches


def backward(spec, params, caches, dlogits):
    """Parameter gradients (same keys/shapes as ``params``) and the input gradient."""
    if caches is None or len(caches) != len(spec.layers):
        raise UsageError("backward needs the cache of a matching forward pass")
    grads = {}
    d = dlogits
    for i in reversed(range(len(spec.layers))):
        ls, c = spec.layers[i], caches[i]
        k = ls.kind
        if k in ("conv1d", "conv2d", "dense"):
            inner, out = c
            d = L.activation_backward(d, out, ls.activation)
            bwd = {"conv1d": L.conv1d_backward, "conv2d": L.conv2d_backward, "dense": L.dense_backward}[k]
            d, grads[f"{i}.W"], grads[f"{i}.b"] = bwd(d, inner)
        elif k == "maxpool":
            d = L.maxpool1d_backward(d, c) if len(ls.pool) == 1 else L.maxpool2d_backward(d, c)
        elif k == "dropout":
            d = L.dropout_backward(d, c)
        elif k == "lstm":
            d, grads[f"{i}.Wx"], grads[f"{i}.Wh"], grads[f"{i}.b"] = L.lstm_backward(d, c)
        elif k == "frames":
            b, h, w, n = c
            d = d.reshape(b, n, h, w).transpose(0, 2, 3, 1)
        elif k == "sequence":
            d = d.reshape(c)
    return grads, d


def loss_and_grads(spec, params, x, y, training=False, rng=None):
    logits, caches = forward(spec, params, x, training, rng)
    loss, dlogits = L.softmax_cross_entropy(logits, y)
    grads, _ = backward(spec, params, caches, dlogits)
    return loss, grads, logits


def predict_proba(spec, params, x, batch_size=256):
    """Class probabilities at inference (dropout off), in batches."""
    out = []
    for s in range(0, len(x), batch_size):
        logits, _ = forward(spec, params, x[s : s + batch_size], training=False)
        out.append(L.softmax(logits.astype(np.float64)))
    return np.concatenate(out) if out else np.zeros((0, spec.n_classes))
