"""Synthetic stand-in dataset.

Positives show an elongated translucent float with several trailing wavy
tentacles on a sea-like gradient.  Negatives cycle through the non-PMW
image types: a blue disc-shaped float with a sail (velella), a dome with
straight tentacles (jellyfish), stick figures (person), hulls with sails
(ship), black line art on paper (illustration), ink curves on skin
(tattoo) and random blocks (random).

Every image is a pure function of ``(seed, class, index)``.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..tensor import make_rng
from .images import encode_ppm
from .manifest import NOT_PMW, PMW, SampleManifest, SampleRecord, content_hash

NEGATIVE_TYPES = ("velella", "jellyfish", "person", "ship", "illustration", "tattoo", "random")
DEFAULT_SIZE = 64


class Canvas:
    def __init__(self, size: int):
        self.size = size
        self.img = np.zeros((size, size, 3))
        self.yy, self.xx = np.mgrid[0:size, 0:size].astype(np.float64)

    def blend(self, mask: np.ndarray, color, alpha: float = 1.0) -> None:
        a = (mask.astype(np.float64) * alpha)[..., None]
        self.img = self.img * (1 - a) + np.asarray(color, dtype=np.float64) * a

    def gradient(self, top, bottom) -> None:
        t = (self.yy / (self.size - 1))[..., None]
        self.img = np.asarray(top) * (1 - t) + np.asarray(bottom) * t

    def ellipse(self, cy, cx, ry, rx, angle=0.0) -> np.ndarray:
        c, s = math.cos(angle), math.sin(angle)
        dy, dx = self.yy - cy, self.xx - cx
        u = (c * dx + s * dy) / rx
        v = (-s * dx + c * dy) / ry
        return u * u + v * v <= 1.0

    def ring(self, cy, cx, ry, rx, angle=0.0, width=1.2) -> np.ndarray:
        outer = self.ellipse(cy, cx, ry + width / 2, rx + width / 2, angle)
        inner = self.ellipse(cy, cx, max(ry - width / 2, 0.1), max(rx - width / 2, 0.1), angle)
        return outer & ~inner

    def polyline(self, pts: np.ndarray, width: float) -> np.ndarray:
        """Pixels within ``width / 2`` of a densely sampled polyline."""
        r2 = (width / 2.0) ** 2
        mask = np.zeros((self.size, self.size), dtype=bool)
        for y, x in pts:
            lo_y, hi_y = int(max(y - width, 0)), int(min(y + width + 1, self.size))
            lo_x, hi_x = int(max(x - width, 0)), int(min(x + width + 1, self.size))
            if lo_y >= hi_y or lo_x >= hi_x:
                continue
            dy = self.yy[lo_y:hi_y, lo_x:hi_x] - y
            dx = self.xx[lo_y:hi_y, lo_x:hi_x] - x
            mask[lo_y:hi_y, lo_x:hi_x] |= dy * dy + dx * dx <= r2
        return mask

    def polygon(self, verts) -> np.ndarray:
        verts = np.asarray(verts, dtype=np.float64)
        inside = np.zeros((self.size, self.size), dtype=bool)
        py, px = self.yy + 0.5, self.xx + 0.5
        n = len(verts)
        for i in range(n):
            y1, x1 = verts[i]
            y2, x2 = verts[(i + 1) % n]
            cond = (y1 > py) != (y2 > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = (x2 - x1) * (py - y1) / (y2 - y1) + x1
            inside ^= cond & (px < xint)
        return inside

    def to_uint8(self, rng, noise=0.02) -> np.ndarray:
        img = self.img + rng.normal(0, noise, self.img.shape)
        return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


def _wave(start, direction, length, amp, freq, phase, n=None):
    """Points along a sinusoid leaving ``start`` along ``direction`` (radians)."""
    n = n or max(int(length * 2), 4)
    t = np.linspace(0, length, n)
    wob = amp * np.sin(freq * t + phase)
    dy, dx = math.sin(direction), math.cos(direction)
    return np.stack([start[0] + t * dy + wob * dx, start[1] + t * dx - wob * dy], axis=1)


def _sea(c: Canvas, rng) -> None:
    top = rng.uniform([0.35, 0.55, 0.7], [0.6, 0.8, 0.95])
    bottom = rng.uniform([0.05, 0.25, 0.35], [0.3, 0.5, 0.6])
    if rng.random() < 0.3:  # sand
        bottom = rng.uniform([0.7, 0.6, 0.4], [0.9, 0.8, 0.6])
    c.gradient(top, bottom)


def _pmw(c: Canvas, rng) -> None:
    _sea(c, rng)
    s = c.size
    cy, cx = rng.uniform(0.3, 0.5) * s, rng.uniform(0.35, 0.65) * s
    rx = rng.uniform(0.15, 0.24) * s
    ry = rx / rng.uniform(2.0, 3.0)
    angle = rng.uniform(-0.5, 0.5)
    body = rng.uniform([0.55, 0.35, 0.75], [0.85, 0.6, 1.0])
    c.blend(c.ellipse(cy, cx, ry, rx, angle), body, 0.85)
    c.blend(c.ellipse(cy - ry * 0.3, cx, ry * 0.4, rx * 0.7, angle), (0.95, 0.8, 1.0), 0.4)
    ink = rng.uniform([0.1, 0.05, 0.35], [0.35, 0.2, 0.65])
    down = math.pi / 2 + angle
    for _ in range(int(rng.integers(3, 7))):
        off = rng.uniform(-0.8, 0.8) * rx
        start = (cy + off * math.sin(angle) + ry * 0.6, cx + off * math.cos(angle))
        pts = _wave(start, down + rng.uniform(-0.4, 0.4), rng.uniform(0.25, 0.5) * s,
                    rng.uniform(1.5, 3.5) * s / 64, rng.uniform(0.25, 0.5) * 64 / s, rng.uniform(0, 6.3))
        c.blend(c.polyline(pts, rng.uniform(1.2, 2.0) * s / 64), ink, 0.9)


def _velella(c: Canvas, rng) -> None:
    _sea(c, rng)
    s = c.size
    cy, cx = rng.uniform(0.35, 0.65) * s, rng.uniform(0.35, 0.65) * s
    rx = rng.uniform(0.12, 0.2) * s
    ry = rx / rng.uniform(1.1, 1.5)
    angle = rng.uniform(-0.6, 0.6)
    c.blend(c.ellipse(cy, cx, ry, rx, angle), rng.uniform([0.1, 0.25, 0.6], [0.3, 0.45, 0.9]), 0.9)
    c.blend(c.ring(cy, cx, ry * 0.6, rx * 0.6, angle, 1.0), (0.2, 0.15, 0.5), 0.5)
    sail = np.array([[cy - ry, cx - rx * 0.8], [cy + ry, cx + rx * 0.8]])
    pts = np.linspace(sail[0], sail[1], 40)
    c.blend(c.polyline(pts, 1.5 * s / 64), (0.92, 0.92, 0.95), 0.7)


def _jellyfish(c: Canvas, rng) -> None:
    _sea(c, rng)
    s = c.size
    cy, cx = rng.uniform(0.3, 0.45) * s, rng.uniform(0.35, 0.65) * s
    r = rng.uniform(0.12, 0.2) * s
    col = rng.uniform([0.75, 0.45, 0.35], [1.0, 0.8, 0.7])
    dome = c.ellipse(cy, cx, r * 0.8, r) & (c.yy <= cy)
    c.blend(dome, col, 0.8)
    for k in range(int(rng.integers(4, 9))):
        x0 = cx + (k / 7.0 - 0.5) * 1.6 * r
        pts = np.linspace([cy, x0], [cy + rng.uniform(0.25, 0.45) * s, x0 + rng.uniform(-2, 2)], 40)
        c.blend(c.polyline(pts, 1.0 * s / 64), col * 0.8, 0.8)


def _person(c: Canvas, rng) -> None:
    _sea(c, rng)
    s = c.size
    cx = rng.uniform(0.3, 0.7) * s
    top = rng.uniform(0.1, 0.3) * s
    hr = rng.uniform(0.06, 0.1) * s
    skin = rng.uniform([0.55, 0.35, 0.25], [0.95, 0.8, 0.65])
    c.blend(c.ellipse(top + hr, cx, hr, hr * 0.85), skin)
    cloth = rng.uniform(0, 1, 3)
    bw = hr * 1.4
    body = c.polygon([[top + 2 * hr, cx - bw], [top + 2 * hr, cx + bw], [top + 5 * hr, cx + bw * 0.8], [top + 5 * hr, cx - bw * 0.8]])
    c.blend(body, cloth)
    for side in (-1, 1):
        pts = np.linspace([top + 5 * hr, cx + side * bw * 0.5], [min(top + 8 * hr, s - 1), cx + side * bw * 0.7], 30)
        c.blend(c.polyline(pts, 2.0 * s / 64), cloth * 0.6)


def _ship(c: Canvas, rng) -> None:
    _sea(c, rng)
    s = c.size
    base = rng.uniform(0.55, 0.75) * s
    cx = rng.uniform(0.35, 0.65) * s
    half = rng.uniform(0.2, 0.32) * s
    hull = c.polygon([[base, cx - half], [base, cx + half], [base + 0.12 * s, cx + half * 0.7], [base + 0.12 * s, cx - half * 0.7]])
    c.blend(hull, rng.uniform([0.3, 0.15, 0.05], [0.55, 0.35, 0.2]))
    mast_top = base - rng.uniform(0.3, 0.45) * s
    c.blend(c.polyline(np.linspace([base, cx], [mast_top, cx], 30), 1.2 * s / 64), (0.2, 0.15, 0.1))
    sail_col = rng.uniform([0.85, 0.8, 0.7], [1.0, 1.0, 0.95])
    c.blend(c.polygon([[mast_top + 2, cx + 1], [base - 3, cx + 1], [base - 3, cx + half * 0.9]]), sail_col)
    if rng.random() < 0.5:
        c.blend(c.polygon([[mast_top + 5, cx - 1], [base - 3, cx - 1], [base - 3, cx - half * 0.7]]), sail_col)


def _illustration(c: Canvas, rng) -> None:
    paper = rng.uniform([0.88, 0.86, 0.8], [1.0, 1.0, 0.98])
    c.gradient(paper, paper)
    s = c.size
    ink = (0.05, 0.05, 0.08)
    for _ in range(int(rng.integers(1, 3))):
        cy, cx = rng.uniform(0.25, 0.6) * s, rng.uniform(0.25, 0.75) * s
        rx = rng.uniform(0.1, 0.22) * s
        ry = rx / rng.uniform(1.0, 2.5)
        if rng.random() < 0.5:
            c.blend(c.ellipse(cy, cx, ry, rx), rng.uniform(0.4, 1.0, 3), 0.6)
        c.blend(c.ring(cy, cx, ry, rx, 0.0, 1.3 * s / 64), ink)
    for _ in range(int(rng.integers(0, 3))):
        start = rng.uniform(0.3, 0.7, 2) * s
        pts = _wave(start, rng.uniform(0, 2 * math.pi), rng.uniform(0.15, 0.35) * s, 1.5, 0.4, rng.uniform(0, 6))
        c.blend(c.polyline(pts, 1.0 * s / 64), ink)


def _tattoo(c: Canvas, rng) -> None:
    skin = rng.uniform([0.6, 0.4, 0.3], [0.95, 0.78, 0.65])
    c.gradient(skin, skin * rng.uniform(0.85, 1.0))
    s = c.size
    ink = rng.uniform([0.02, 0.05, 0.1], [0.2, 0.25, 0.4])
    for _ in range(int(rng.integers(2, 5))):
        start = rng.uniform(0.2, 0.8, 2) * s
        pts = _wave(start, rng.uniform(0, 2 * math.pi), rng.uniform(0.2, 0.4) * s,
                    rng.uniform(1.5, 3.0), rng.uniform(0.25, 0.5), rng.uniform(0, 6))
        c.blend(c.polyline(pts, rng.uniform(1.0, 1.8) * s / 64), ink, 0.85)
    if rng.random() < 0.5:
        cy, cx = rng.uniform(0.3, 0.7, 2) * s
        c.blend(c.ring(cy, cx, 0.08 * s, 0.12 * s, rng.uniform(-1, 1), 1.2), ink, 0.85)


def _random(c: Canvas, rng) -> None:
    c.gradient(rng.uniform(0, 1, 3), rng.uniform(0, 1, 3))
    s = c.size
    for _ in range(int(rng.integers(2, 6))):
        if rng.random() < 0.5:
            y0, x0 = rng.uniform(0, 0.8, 2) * s
            h, w = rng.uniform(0.1, 0.4, 2) * s
            c.blend(c.polygon([[y0, x0], [y0, x0 + w], [y0 + h, x0 + w], [y0 + h, x0]]), rng.uniform(0, 1, 3))
        else:
            cy, cx = rng.uniform(0.1, 0.9, 2) * s
            r = rng.uniform(0.05, 0.2) * s
            c.blend(c.ellipse(cy, cx, r, r), rng.uniform(0, 1, 3))


_PAINTERS = {
    "pmw": _pmw,
    "velella": _velella,
    "jellyfish": _jellyfish,
    "person": _person,
    "ship": _ship,
    "illustration": _illustration,
    "tattoo": _tattoo,
    "random": _random,
}


def render(type_tag: str, seed: int, index: int, size: int = DEFAULT_SIZE) -> np.ndarray:
    """Render one HxWx3 uint8 image of the given type."""
    rng = make_rng(seed, "synth", list(_PAINTERS).index(type_tag), index)
    c = Canvas(size)
    _PAINTERS[type_tag](c, rng)
    return c.to_uint8(rng)


def negative_type(index: int) -> str:
    return NEGATIVE_TYPES[index % len(NEGATIVE_TYPES)]


def generate(out_dir, n_per_class: int, seed: int = 0, size: int = DEFAULT_SIZE) -> SampleManifest:
    """Write ``2 * n_per_class`` PPM images under ``out_dir`` plus ``manifest.jsonl``.

    Image paths in the manifest are relative to ``out_dir``.
    """
    out = Path(out_dir)
    (out / "PMW").mkdir(parents=True, exist_ok=True)
    (out / "not-PMW").mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n_per_class):
        data = encode_ppm(render("pmw", seed, i, size))
        rel = f"PMW/pmw_{i:05d}.ppm"
        (out / rel).write_bytes(data)
        records.append(SampleRecord(rel, PMW, "pmw", "other", "unassigned", content_hash(data)))
    for i in range(n_per_class):
        tag = negative_type(i)
        data = encode_ppm(render(tag, seed, i, size))
        rel = f"not-PMW/{tag}_{i:05d}.ppm"
        (out / rel).write_bytes(data)
        records.append(SampleRecord(rel, NOT_PMW, tag, "other", "unassigned", content_hash(data)))
    manifest = SampleManifest(records, [f"synthetic: n_per_class={n_per_class} seed={seed} size={size}"], seed, out.resolve())
    manifest.save(out / "manifest.jsonl")
    return manifest
