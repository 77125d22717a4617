"""Forward/backward primitives.

Layouts are channels-last: conv2d/maxpool work on (B, H, W, C) and conv1d
on (B, L, C); an LSTM consumes (B, T, F). Every ``*_forward`` returns
``(out, cache)`` and the matching ``*_backward`` maps the upstream gradient
and that cache to the input gradient plus parameter gradients.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import SpecError

# --- activations ---------------------------------------------------------------


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def activation_forward(x, kind):
    if kind == "relu":
        return np.maximum(x, 0)
    if kind == "linear":
        return x
    if kind == "tanh":
        return np.tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise SpecError(f"unknown activation {kind!r}")


def activation_backward(dout, out, kind):
    """Gradient through an activation, expressed with its output."""
    if kind == "relu":
        return dout * (out > 0)
    if kind == "linear":
        return dout
    if kind == "tanh":
        return dout * (1 - out * out)
    if kind == "sigmoid":
        return dout * out * (1 - out)
    raise SpecError(f"unknown activation {kind!r}")


# --- convolution ------------------------------------------------------------------


def conv2d_forward(x, w, b):
    """'Same' zero-padded, stride-1 convolution. ``w`` has shape (kh, kw, C, F)."""
    kh, kw, c, f = w.shape
    if x.ndim != 4 or x.shape[3] != c:
        raise SpecError(f"conv2d expects (B, H, W, {c}), got {x.shape}")
    bsz, h, wd, _ = x.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = np.pad(x, ((0, 0), (ph, kh - 1 - ph), (pw, kw - 1 - pw), (0, 0)))
    # (B, H, W, C, kh, kw) view -> (B*H*W, C*kh*kw) copy
    cols = sliding_window_view(xp, (kh, kw), axis=(1, 2)).reshape(bsz * h * wd, c * kh * kw)
    wmat = w.transpose(2, 0, 1, 3).reshape(c * kh * kw, f)
    out = (cols @ wmat + b).reshape(bsz, h, wd, f)
    return out, (x.shape, cols, w)


def conv2d_backward(dout, cache):
    xshape, cols, w = cache
    kh, kw, c, f = w.shape
    bsz, h, wd, _ = xshape
    d2 = dout.reshape(-1, f)
    db = d2.sum(axis=0)
    dw = (cols.T @ d2).reshape(c, kh, kw, f).transpose(1, 2, 0, 3)
    wmat = w.transpose(2, 0, 1, 3).reshape(c * kh * kw, f)
    dcols = (d2 @ wmat.T).reshape(bsz, h, wd, c, kh, kw)
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    dxp = np.zeros((bsz, h + kh - 1, wd + kw - 1, c), dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + h, j : j + wd, :] += dcols[..., i, j]
    dx = dxp[:, ph : ph + h, pw : pw + wd, :]
    return dx, dw, db


def conv1d_forward(x, w, b):
    """'Same' stride-1 temporal convolution; ``x`` is (B, L, C), ``w`` is (k, C, F)."""
    if x.ndim != 3:
        raise SpecError(f"conv1d expects (B, L, C), got {x.shape}")
    out, cache = conv2d_forward(x[:, None], w[None], b)
    return out[:, 0], cache


def conv1d_backward(dout, cache):
    dx, dw, db = conv2d_backward(dout[:, None], cache)
    return dx[:, 0], dw[0], db


# --- pooling ---------------------------------------------------------------------


def maxpool2d_forward(x, pool):
    """Non-overlapping max pooling (stride = pool size); trailing rows/cols are dropped."""
    ph, pw = pool
    bsz, h, wd, c = x.shape
    ho, wo = h // ph, wd // pw
    if ho == 0 or wo == 0:
        raise SpecError(f"pool {pool} larger than input {x.shape[1:3]}")
    xr = x[:, : ho * ph, : wo * pw, :].reshape(bsz, ho, ph, wo, pw, c)
    win = xr.transpose(0, 1, 3, 5, 2, 4).reshape(bsz, ho, wo, c, ph * pw)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, pool)


def maxpool2d_backward(dout, cache):
    xshape, arg, (ph, pw) = cache
    bsz, h, wd, c = xshape
    ho, wo = h // ph, wd // pw
    dwin = np.zeros((bsz, ho, wo, c, ph * pw), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dxr = dwin.reshape(bsz, ho, wo, c, ph, pw).transpose(0, 1, 4, 2, 5, 3).reshape(bsz, ho * ph, wo * pw, c)
    dx = np.zeros(xshape, dtype=dout.dtype)
    dx[:, : ho * ph, : wo * pw, :] = dxr
    return dx


def maxpool1d_forward(x, pool):
    out, cache = maxpool2d_forward(x[:, None], (1, pool))
    return out[:, 0], cache


def maxpool1d_backward(dout, cache):
    return maxpool2d_backward(dout[:, None], cache)[:, 0]


# --- dense / dropout -----------------------------------------------------------------


def dense_forward(x, w, b):
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != w.shape[0]:
        raise SpecError(f"dense expects {w.shape[0]} inputs, got {flat.shape[1]}")
    return flat @ w + b, (x.shape, flat, w)


def dense_backward(dout, cache):
    xshape, flat, w = cache
    return (dout @ w.T).reshape(xshape), flat.T @ dout, dout.sum(axis=0)


def dropout_mask(shape, rate, rng, dtype):
    """Inverted-dropout mask: kept units are scaled by 1 / (1 - rate)."""
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(dtype) / dtype.type(keep)


def dropout_forward(x, rate, training, rng):
    if not training or rate == 0:
        return x, None
    mask = dropout_mask(x.shape, rate, rng, x.dtype)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


# --- LSTM ------------------------------------------------------------------------------
# gate order in the stacked weight columns: input, forget, candidate, output


def lstm_step(wx, wh, b, x_t, h_prev, c_prev, mask_x=None, mask_h=None):
    """One LSTM step; returns ``(h_t, c_t, cache)``.

    ``mask_x`` and ``mask_h`` are (variational) dropout masks applied to the
    input and to the recurrent state before the gate projections.
    """
    u = wh.shape[0]
    xin = x_t if mask_x is None else x_t * mask_x
    hin = h_prev if mask_h is None else h_prev * mask_h
    z = xin @ wx + hin @ wh + b
    i = sigmoid(z[:, :u])
    f = sigmoid(z[:, u : 2 * u])
    g = np.tanh(z[:, 2 * u : 3 * u])
    o = sigmoid(z[:, 3 * u :])
    c_t = f * c_prev + i * g
    tc = np.tanh(c_t)
    h_t = o * tc
    return h_t, c_t, (xin, hin, c_prev, i, f, g, o, tc)


def lstm_step_backward(dh, dc, wx, wh, cache, mask_x=None, mask_h=None):
    """Backprop one step; returns ``(dx_t, dh_prev, dc_prev, dwx, dwh, db)``."""
    xin, hin, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
    dwx = xin.T @ dz
    dwh = hin.T @ dz
    db = dz.sum(axis=0)
    dx = dz @ wx.T
    dhp = dz @ wh.T
    if mask_x is not None:
        dx = dx * mask_x
    if mask_h is not None:
        dhp = dhp * mask_h
    return dx, dhp, dc_prev, dwx, dwh, db


def lstm_forward(x, wx, wh, b, dropout=0.0, recurrent_dropout=0.0, training=False, rng=None):
    """Run an LSTM over (B, T, F) and return the final hidden state (B, U)."""
    if x.ndim != 3 or x.shape[2] != wx.shape[0]:
        raise SpecError(f"lstm expects (B, T, {wx.shape[0]}), got {x.shape}")
    bsz, steps, feat = x.shape
    u = wh.shape[0]
    mask_x = mask_h = None
    if training and dropout > 0:
        mask_x = dropout_mask((bsz, feat), dropout, rng, x.dtype)
    if training and recurrent_dropout > 0:
        mask_h = dropout_mask((bsz, u), recurrent_dropout, rng, x.dtype)
    h = np.zeros((bsz, u), dtype=x.dtype)
    c = np.zeros((bsz, u), dtype=x.dtype)
    caches = []
    for t in range(steps):
        h, c, cache = lstm_step(wx, wh, b, x[:, t], h, c, mask_x, mask_h)
        caches.append(cache)
    return h, (x.shape, caches, mask_x, mask_h, wx, wh)


def lstm_backward(dh, cache):
    xshape, caches, mask_x, mask_h, wx, wh = cache
    dx = np.zeros(xshape, dtype=dh.dtype)
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(wx.shape[1], dtype=dh.dtype)
    dc = np.zeros_like(dh)
    for t in reversed(range(xshape[1])):
        dxt, dh, dc, gwx, gwh, gb = lstm_step_backward(dh, dc, wx, wh, caches[t], mask_x, mask_h)
        dx[:, t] = dxt
        dwx += gwx
        dwh += gwh
        db += gb
    return dx, dwx, dwh, db


# --- loss ----------------------------------------------------------------------------------


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, targets):
    """Mean categorical cross entropy and its gradient w.r.t. the logits.

    ``targets`` is either integer class labels or a (B, K) probability matrix.
    """
    p = softmax(logits)
    bsz = logits.shape[0]
    if targets.ndim == 1:
        onehot = np.zeros_like(p)
        onehot[np.arange(bsz), targets] = 1
    else:
        onehot = targets.astype(p.dtype)
    logp = np.log(np.clip(p, np.finfo(p.dtype).tiny, None))
    loss = -float(np.sum(onehot * logp)) / bsz
    return loss, (p - onehot) / bsz
