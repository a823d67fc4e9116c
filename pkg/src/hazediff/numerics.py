"""Seeded Gaussian sampling and 2-D discrete Fourier transforms.

Tensors are plain numpy arrays. Images use H x W x C layout with float64 in
the test/oracle path and float32 in the training path.

The random generator is SplitMix64 (Steele, Lea & Flood 2014) run in counter
mode, so a block of draws can be produced with vectorized uint64 arithmetic
and is identical on every platform. Gaussian variates use the basic
Box-Muller transform on consecutive uniform pairs.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class SeededRng:
    """SplitMix64 stream. Single owner: never share one instance between workers."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.state = self.seed

    def next_u64(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be non-negative")
        steps = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + steps * _GAMMA
            out = _mix64(z)
        self.state = (self.state + n * int(_GAMMA)) & _MASK64
        return out

    def uniform(self, n: int) -> np.ndarray:
        """n doubles in [0, 1) built from the top 53 bits of each draw."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def integers(self, low: int, high: int, n: int) -> np.ndarray:
        """n integers uniform on [low, high] (inclusive)."""
        if high < low:
            raise ValueError("empty integer range")
        span = high - low + 1
        return low + np.floor(self.uniform(n) * span).astype(np.int64)

    def spawn(self, tag: str) -> "SeededRng":
        """Independent child stream keyed by a purpose tag; does not advance self."""
        key = np.uint64(zlib.crc32(tag.encode("utf-8")))
        with np.errstate(over="ignore"):
            child = _mix64(np.uint64(self.state) ^ (key * _GAMMA + _MIX2))
        return SeededRng(int(child))


def gaussian_sample(rng: SeededRng, shape) -> np.ndarray:
    """I.i.d. standard normal float64 array drawn from ``rng``."""
    shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ValueError(f"invalid sample shape {shape}")
    n = int(np.prod(shape))
    m = (n + 1) // 2
    u = rng.uniform(2 * m).reshape(m, 2)
    r = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))  # 1-u in (0, 1]
    theta = 2.0 * np.pi * u[:, 1]
    z = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1).reshape(-1)
    return z[:n].reshape(shape)


@dataclass(frozen=True)
class Spectrum:
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        if self.real.shape != self.imag.shape or self.real.ndim != 2:
            raise ValueError(
                f"spectrum parts must be matching 2-D arrays, got {self.real.shape} and {self.imag.shape}"
            )

    @property
    def shape(self):
        return self.real.shape

    @classmethod
    def from_complex(cls, z: np.ndarray) -> "Spectrum":
        return cls(np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag))

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag


def _check_2d(img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D single-channel array, got shape {img.shape}")
    return img


def dft2(img) -> Spectrum:
    """Unnormalized forward 2-D DFT, X[k,l] = sum x[m,n] exp(-2 pi i (km/H + ln/W))."""
    img = _check_2d(img)
    return Spectrum.from_complex(np.fft.fft2(img.astype(np.float64, copy=False)))


def idft2(spec: Spectrum) -> np.ndarray:
    """Inverse of :func:`dft2` (carries the 1/(H W) factor); returns the real part."""
    return np.fft.ifft2(spec.to_complex()).real


def dft2_adjoint(spec: Spectrum) -> np.ndarray:
    """Adjoint of :func:`dft2` viewed as a real-linear map R^{HW} -> R^{2HW}.

    Satisfies <dft2(x), y> = <x, dft2_adjoint(y)> with the real inner product
    over (real, imag) pairs.
    """
    h, w = spec.shape
    return h * w * np.fft.ifft2(spec.to_complex()).real


def fftshift2(a: np.ndarray) -> np.ndarray:
    """Quadrant swap over the first two axes; DC moves to (H//2, W//2)."""
    return np.fft.fftshift(a, axes=(0, 1))


def ifftshift2(a: np.ndarray) -> np.ndarray:
    return np.fft.ifftshift(a, axes=(0, 1))


def centered_amplitude(img) -> np.ndarray:
    """|dft2(img)| with the DC bin moved to (H//2, W//2)."""
    spec = dft2(img)
    return fftshift2(np.hypot(spec.real, spec.imag))
