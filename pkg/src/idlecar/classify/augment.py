"""Training-time augmentation of (H, W, N) spatio-temporal stacks.

Every transform acts on all N slices together so the temporal signal of a
pixel is never scrambled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import UsageError


@dataclass(frozen=True)
class AugmentConfig:
    flip_p: float = 0.5
    max_rotation: float = 5.0  # degrees
    rotation_p: float = 1.0
    patch_max: int = 10  # erase/blur patch side, pixels
    patch_p: float = 0.5
    blur_max_sigma: float = 1.0
    blur_p: float = 0.5

    def __post_init__(self):
        for name in ("flip_p", "rotation_p", "patch_p", "blur_p"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {p}")
        if self.max_rotation < 0 or self.patch_max < 1 or self.blur_max_sigma <= 0:
            raise UsageError("augmentation sizes must be positive")

    @classmethod
    def off(cls):
        return cls(flip_p=0.0, rotation_p=0.0, patch_p=0.0, blur_p=0.0)


def hflip(stack):
    return stack[:, ::-1, :].copy()


def rotate(stack, degrees):
    """Rotate about the center with bilinear resampling and edge replication."""
    return ndimage.rotate(stack, degrees, axes=(1, 0), reshape=False, order=1, mode="nearest")


def _uniform_open_low(rng, hi):
    # (0, hi]
    return hi * (1.0 - rng.random())


def augment(stack, cfg, rng):
    """Randomly flip, rotate, erase or blur a patch, then blur one (H, W, N) stack."""
    out = np.array(stack, dtype=np.float32, copy=True)
    h, w = out.shape[:2]
    if rng.random() < cfg.flip_p:
        out = hflip(out)
    if cfg.max_rotation > 0 and rng.random() < cfg.rotation_p:
        out = rotate(out, rng.uniform(-cfg.max_rotation, cfg.max_rotation))
    if rng.random() < cfg.patch_p:
        ph = int(rng.integers(1, min(cfg.patch_max, h) + 1))
        pw = int(rng.integers(1, min(cfg.patch_max, w) + 1))
        r = int(rng.integers(0, h - ph + 1))
        c = int(rng.integers(0, w - pw + 1))
        region = (slice(r, r + ph), slice(c, c + pw))
        if rng.random() < 0.5:
            out[region] = out[region].mean(axis=(0, 1))
        else:
            sigma = _uniform_open_low(rng, cfg.blur_max_sigma)
            out[region] = ndimage.gaussian_filter(out, (sigma, sigma, 0), mode="nearest")[region]
    if rng.random() < cfg.blur_p:
        sigma = _uniform_open_low(rng, cfg.blur_max_sigma)
        out = ndimage.gaussian_filter(out, (sigma, sigma, 0), mode="nearest")
    return out.astype(np.float32, copy=False)


def augment_batch(batch, cfg, rng):
    """Augment each stack of an (B, H, W, N) batch with its own random draws."""
    return np.stack([augment(s, cfg, rng) for s in batch])


def batch_augmenter(cfg):
    """Adapter for the trainer's ``augment(xb, rng)`` hook."""

    def hook(xb, rng):
        return augment_batch(xb, cfg, rng)

    return hook
