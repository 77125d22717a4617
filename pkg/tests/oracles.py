"""Independent numerical oracles shared by the unit and acceptance tests."""

import numpy as np

from idlecar.learncore.layers import softmax_cross_entropy
from idlecar.learncore.model import (
    LayerSpec,
    ModelSpec,
    backward,
    conv1d,
    conv2d,
    dense,
    dropout,
    forward,
    init_params,
    lstm,
    maxpool,
    softmax,
)

FD_EPS = 1e-5


def rel_error(a, b, floor=1e-6):
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def numeric_grad(f, arr, eps=FD_EPS):
    """Central differences of the scalar ``f()`` with respect to every entry of ``arr`` (in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + eps
        up = f()
        arr[i] = old - eps
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * eps)
    return g


def model_grad_error(spec, x, y, seed, training=False):
    """Max relative error of analytic parameter and input gradients for one random instance."""
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng, dtype=np.float64)
    for k in params:
        params[k] = params[k] + rng.normal(0.0, 0.2, params[k].shape)
    x = np.array(x, dtype=np.float64)

    def run():
        # the same dropout masks on every call
        r = np.random.default_rng(seed + 1) if training else None
        logits, caches = forward(spec, params, x, training=training, rng=r)
        loss, dl = softmax_cross_entropy(logits, y)
        return loss, caches, dl

    _, caches, dl = run()
    grads, dx = backward(spec, params, caches, dl)
    worst = 0.0
    for k, v in params.items():
        num = numeric_grad(lambda: run()[0], v)
        worst = max(worst, float(rel_error(num, grads[k]).max()))
    num_x = numeric_grad(lambda: run()[0], x)
    worst = max(worst, float(rel_error(num_x, dx).max()))
    return worst


def softmax_ce_grad_error(logits, targets):
    logits = np.array(logits, dtype=np.float64)
    _, d = softmax_cross_entropy(logits, targets)
    num = numeric_grad(lambda: softmax_cross_entropy(logits, targets)[0], logits)
    return float(rel_error(num, d).max())


def layer_cases():
    """Small model per layer kind: name -> (spec, run with dropout active)."""
    return {
        "conv1d": (ModelSpec((conv1d(3, 3, "tanh"), conv1d(2, 3, "relu"), dense(2, "linear"), softmax()), (7, 2)), False),
        "conv2d": (ModelSpec((conv2d(3, 3, "tanh"), conv2d(2, 3, "sigmoid"), dense(2, "linear"), softmax()), (5, 6, 2)), False),
        "maxpool": (ModelSpec((conv2d(2, 3, "tanh"), maxpool(2, 2), dropout(0.5), dense(2, "linear"), softmax()), (6, 6, 2)), False),
        "maxpool1d": (ModelSpec((conv1d(2, 3, "tanh"), maxpool(2), dense(2, "linear"), softmax()), (8, 2)), False),
        "dense": (ModelSpec((dense(5, "tanh"), dense(4, "relu"), dense(2, "linear"), softmax()), (6,)), False),
        "dropout": (ModelSpec((dense(5, "tanh"), dropout(0.5), dense(2, "linear"), softmax()), (4,)), True),
        "lstm": (ModelSpec((lstm(4, 0.3, 0.3), dense(2, "linear"), softmax()), (3, 2)), True),
        "frames+sequence": (
            ModelSpec(
                (LayerSpec("frames"), conv2d(2, 3, "tanh"), maxpool(2, 2), LayerSpec("sequence", steps=3), lstm(3), dense(2, "linear"), softmax()),
                (4, 4, 3),
            ),
            False,
        ),
    }


def random_input(spec, batch, rng):
    return rng.normal(0.0, 1.0, (batch, *spec.input_shape))


def random_targets(batch, rng):
    y = rng.integers(0, 2, batch)
    y[0] = 0
    y[-1] = 1
    return y


__all__ = [
    "rel_error",
    "numeric_grad",
    "model_grad_error",
    "softmax_ce_grad_error",
    "layer_cases",
    "random_input",
    "random_targets",
]
