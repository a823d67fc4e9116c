"""Atmospheric scattering model: I = J * t + A * (1 - t).

Transmission comes from depth through Beer-Lambert attenuation,
t = exp(-beta * depth), floored at ``T_FLOOR`` so the model stays invertible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng

T_FLOOR = 1e-3
DEPTH_MODES = ("linear-ramp", "radial", "random-blobs")


@dataclass
class HazeTriplet:
    J: np.ndarray       # H x W x 3
    trmap: np.ndarray   # H x W x 1, in [T_FLOOR, 1]
    A: np.ndarray       # (3,)


@dataclass
class SynthesisParams:
    beta_haze: float = 1.5
    A: np.ndarray = field(default_factory=lambda: np.full(3, 0.9))
    depth_mode: str = "radial"

    def __post_init__(self):
        if self.beta_haze < 0:
            raise ValueError("beta_haze must be >= 0")
        if self.depth_mode not in DEPTH_MODES:
            raise ValueError(f"unknown depth_mode {self.depth_mode!r}")
        self.A = np.asarray(self.A, dtype=np.float64)


def _as_map(trmap, hw):
    trmap = np.asarray(trmap)
    if trmap.ndim == 2:
        trmap = trmap[..., None]
    if trmap.shape[:2] != hw or trmap.shape[2] != 1:
        raise ValueError(f"trmap shape {trmap.shape} does not match image {hw}")
    return trmap


def compose_asm(triplet: HazeTriplet) -> np.ndarray:
    J = np.asarray(triplet.J)
    if J.ndim != 3:
        raise ValueError(f"J must be H x W x C, got {J.shape}")
    t = _as_map(triplet.trmap, J.shape[:2])
    A = np.asarray(triplet.A).reshape(1, 1, -1)
    if A.shape[2] != J.shape[2]:
        raise ValueError("atmospheric light must have one value per channel")
    return J * t + A * (1.0 - t)


def transmission(depth, beta_haze: float) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if np.any(depth < 0):
        raise ValueError("depth must be non-negative")
    return np.clip(np.exp(-beta_haze * depth), T_FLOOR, 1.0)


def synth_haze(clear, depth, params: SynthesisParams):
    """Return (hazy, trmap) for a clear image and its depth map."""
    clear = np.asarray(clear, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim == 3:
        depth = depth[..., 0]
    if depth.shape != clear.shape[:2]:
        raise ValueError(f"depth {depth.shape} does not match image {clear.shape[:2]}")
    trmap = transmission(depth, params.beta_haze)[..., None]
    hazy = compose_asm(HazeTriplet(clear, trmap, params.A))
    return hazy, trmap


def _depth_map(rng: SeededRng, h: int, w: int, mode: str) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(h) / (h - 1), np.arange(w) / (w - 1), indexing="ij")
    if mode == "linear-ramp":
        angle = rng.uniform(1)[0] * 2 * np.pi
        d = np.cos(angle) * xx + np.sin(angle) * yy
    elif mode == "radial":
        cy, cx = rng.uniform(2)
        d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    elif mode == "random-blobs":
        d = np.zeros((h, w))
        for _ in range(3):
            cy, cx, s, amp = rng.uniform(4)
            d += (0.3 + amp) * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * (0.1 + 0.3 * s) ** 2))
    else:
        raise ValueError(f"unknown depth_mode {mode!r}")
    d = d - d.min()
    peak = d.max()
    if peak > 0:
        d = d / peak
    scale = 0.4 + 0.8 * rng.uniform(1)[0]
    return d * scale


def _smooth_field(rng: SeededRng, yy, xx):
    """Random colour: base + linear ramp + one low-frequency sinusoid per channel."""
    base, gx, gy, amp, fy, fx, ph = (rng.uniform(3) for _ in range(7))
    wave = np.sin(2 * np.pi * ((1 + 2 * fy) * yy[..., None] + (1 + 2 * fx) * xx[..., None]) + 2 * np.pi * ph)
    return base + (gx - 0.5) * xx[..., None] + (gy - 0.5) * yy[..., None] + 0.2 * amp * wave


def gen_toy_scene(rng: SeededRng, size, depth_mode: str = "radial"):
    """Procedural (clear, depth) pair: smooth colour field plus 2-5 shaded shapes.

    Depth is normalised to [0, 1] and rescaled by a random far-plane in [0.4, 1.2].
    """
    h, w = (size, size) if np.isscalar(size) else size
    if not (8 <= h <= 128 and 8 <= w <= 128):
        raise ValueError(f"scene size must lie in [8, 128], got {(h, w)}")
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")

    img = _smooth_field(rng, yy, xx)
    for _ in range(int(rng.integers(2, 5, 1)[0])):
        kind, cy, cx, ry, rx = rng.uniform(5)
        ry, rx = 0.1 + 0.25 * ry, 0.1 + 0.25 * rx
        if kind < 0.5:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= ry**2
        img[mask] = _smooth_field(rng, yy, xx)[mask]

    clear = np.clip(img, 0.0, 1.0)
    depth = _depth_map(rng, h, w, depth_mode)
    return clear, depth
