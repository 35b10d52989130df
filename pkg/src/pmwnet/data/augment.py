"""Seeded label-preserving augmentation: rotation, zoom, horizontal mirroring."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..tensor import make_rng


@dataclass(frozen=True)
class AugmentConfig:
    rotation_deg: float = 20.0
    zoom_range: tuple[float, float] = (0.8, 1.2)
    hflip_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.zoom_range
        if lo <= 0 or hi < lo:
            raise ValueError(f"zoom_range must be positive and ordered, got {self.zoom_range}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ValueError(f"hflip_prob must be in [0, 1], got {self.hflip_prob}")
        if self.rotation_deg < 0:
            raise ValueError("rotation_deg must be >= 0")


IDENTITY = AugmentConfig(rotation_deg=0.0, zoom_range=(1.0, 1.0), hflip_prob=0.0)


def hflip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[..., ::-1])


def affine_sample(image: np.ndarray, angle_deg: float, zoom: float) -> np.ndarray:
    """Rotate by ``angle_deg`` and scale by ``zoom`` about the image centre.

    Bilinear sampling; coordinates falling outside the frame take the
    nearest edge pixel.
    """
    if angle_deg == 0.0 and zoom == 1.0:
        return image.copy()
    _, h, w = image.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64) - cy, np.arange(w, dtype=np.float64) - cx, indexing="ij")
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    # inverse map: output pixel -> source location
    sy = (c * yy - s * xx) / zoom + cy
    sx = (s * yy + c * xx) / zoom + cx
    sy = np.clip(sy, 0, h - 1)
    sx = np.clip(sx, 0, w - 1)
    y0 = np.floor(sy).astype(np.int64)
    x0 = np.floor(sx).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = sy - y0
    wx = sx - x0
    img = image.astype(np.float64)
    out = (
        img[:, y0, x0] * ((1 - wy) * (1 - wx))
        + img[:, y0, x1] * ((1 - wy) * wx)
        + img[:, y1, x0] * (wy * (1 - wx))
        + img[:, y1, x1] * (wy * wx)
    )
    return out.astype(image.dtype)


def draw_params(cfg: AugmentConfig, seed: int, index: int, epoch: int = 0) -> tuple[float, float, bool]:
    rng = make_rng(seed, "augment", epoch, index)
    angle = float(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)) if cfg.rotation_deg else 0.0
    lo, hi = cfg.zoom_range
    zoom = float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    flip = bool(rng.random() < cfg.hflip_prob)
    return angle, zoom, flip


def augment(image: np.ndarray, cfg: AugmentConfig, seed: int | None = None, index: int = 0, epoch: int = 0) -> np.ndarray:
    """Randomly rotate, zoom and mirror a CxHxW image.

    The transform is a pure function of ``(seed, epoch, index)``; ``seed``
    defaults to ``cfg.seed``.
    """
    angle, zoom, flip = draw_params(cfg, cfg.seed if seed is None else seed, index, epoch)
    out = affine_sample(image, angle, zoom)
    return hflip(out) if flip else out
