"""Adam and Nesterov-momentum updates as pure functions of (state, params, grads)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"  # or "nesterov_momentum"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.1
    decay: float = 0.96
    decay_steps: int = 100
    max_epochs: int = 100
    batch_size: int = 32

    def __post_init__(self):
        if self.kind not in ("adam", "nesterov_momentum"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if not 0 < self.decay <= 1:
            raise ValueError("decay factor must lie in (0, 1]")
        if self.decay_steps <= 0 or self.max_epochs <= 0 or self.batch_size <= 0:
            raise ValueError("decay_steps, max_epochs and batch_size must be positive")


def init_state(params, cfg):
    zeros = {k: np.zeros_like(v) for k, v in params.items()}
    if cfg.kind == "adam":
        return {"t": 0, "m": zeros, "v": {k: np.zeros_like(v) for k, v in params.items()}}
    return {"velocity": zeros}


def adam_step(state, params, grads, cfg):
    """Bias-corrected Adam; returns ``(new_params, new_state)``."""
    t = state["t"] + 1
    b1, b2 = cfg.beta1, cfg.beta2
    new_params, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            new_params[k], m_new[k], v_new[k] = p, state["m"][k], state["v"][k]
            continue
        m = b1 * state["m"][k] + (1 - b1) * g
        v = b2 * state["v"][k] + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_params[k] = (p - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(p.dtype, copy=False)
        m_new[k], v_new[k] = m, v
    return new_params, {"t": t, "m": m_new, "v": v_new}


def staircase_lr(cfg, global_step):
    return cfg.lr * cfg.decay ** (global_step // cfg.decay_steps)


def nesterov_momentum_step(state, params, grads, cfg, global_step):
    """``v <- mu v - lr g``; ``p <- p + mu v - lr g`` with staircase-decayed lr."""
    lr = staircase_lr(cfg, global_step)
    mu = cfg.momentum
    new_params, vel = {}, {}
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            new_params[k], vel[k] = p, state["velocity"][k]
            continue
        v = mu * state["velocity"][k] - lr * g
        new_params[k] = (p + mu * v - lr * g).astype(p.dtype, copy=False)
        vel[k] = v
    return new_params, {"velocity": vel}


def step(state, params, grads, cfg, global_step):
    if cfg.kind == "adam":
        return adam_step(state, params, grads, cfg)
    return nesterov_momentum_step(state, params, grads, cfg, global_step)
