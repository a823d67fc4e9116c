"""Closed-form DDPM quantities for a fixed noise schedule.

Step indices are 1-based (t = 1..T). ``alpha_bar_at(0)`` is 1 by convention so
the posterior at t = 1 collapses onto x0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALPHA_BAR_MIN = 1e-12


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.ndim != 1 or beta.size < 1:
            raise ValueError("beta must be a non-empty 1-D array")
        if np.any(beta <= 0) or np.any(beta >= 1):
            raise ValueError("beta entries must lie in (0, 1)")
        object.__setattr__(self, "beta", beta)
        alpha = 1.0 - beta
        alpha_bar = np.empty_like(alpha)
        acc = 1.0
        for i, a in enumerate(alpha):
            acc = acc * a
            alpha_bar[i] = acc
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", alpha_bar)

    @property
    def T(self) -> int:
        return self.beta.size

    def check_t(self, t: int, lo: int = 1):
        if not (lo <= t <= self.T):
            raise ValueError(f"step {t} outside [{lo}, {self.T}]")

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[t - 1])

    def alpha_bar_at(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])


def make_linear_schedule(T: int = 100, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not (0 < beta_start <= beta_end < 1):
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    return NoiseSchedule(np.linspace(beta_start, beta_end, T))


def q_sample(x0, t: int, eps, sched: NoiseSchedule):
    """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps."""
    sched.check_t(t)
    x0, eps = np.asarray(x0), np.asarray(eps)
    if x0.shape != eps.shape:
        raise ValueError(f"shape mismatch {x0.shape} vs {eps.shape}")
    ab = sched.alpha_bar_at(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def posterior_coefs(t: int, sched: NoiseSchedule):
    """(coef_x0, coef_xt, beta_tilde) of q(x_{t-1} | x_t, x0)."""
    sched.check_t(t)
    a = sched.alpha_at(t)
    ab = sched.alpha_bar_at(t)
    ab_prev = sched.alpha_bar_at(t - 1)
    c0 = np.sqrt(ab_prev) * (1.0 - a) / (1.0 - ab)
    ct = np.sqrt(a) * (1.0 - ab_prev) / (1.0 - ab)
    var = (1.0 - ab_prev) * (1.0 - a) / (1.0 - ab)
    return c0, ct, var


def posterior_mean_var(x0, xt, t: int, sched: NoiseSchedule):
    """Mean and (scalar) variance of q(x_{t-1} | x_t, x0)."""
    c0, ct, var = posterior_coefs(t, sched)
    return c0 * np.asarray(x0) + ct * np.asarray(xt), var


def _check_invertible(t, sched):
    sched.check_t(t)
    ab = sched.alpha_bar_at(t)
    if ab < ALPHA_BAR_MIN:
        raise ValueError(f"alpha_bar_{t} = {ab:g} too small to invert")
    return ab


def eps_to_x0(xt, eps, t: int, sched: NoiseSchedule):
    ab = _check_invertible(t, sched)
    return (np.asarray(xt) - np.sqrt(1.0 - ab) * np.asarray(eps)) / np.sqrt(ab)


def x0_to_eps(xt, x0, t: int, sched: NoiseSchedule):
    ab = _check_invertible(t, sched)
    return (np.asarray(xt) - np.sqrt(ab) * np.asarray(x0)) / np.sqrt(1.0 - ab)


@dataclass(frozen=True)
class DiffusionSpace:
    """Affine map between pixel range [lo, hi] and model range [-1, 1]."""

    lo: float = 0.0
    hi: float = 1.0

    def to_model(self, x):
        return 2.0 * (np.asarray(x) - self.lo) / (self.hi - self.lo) - 1.0

    def from_model(self, x):
        return (np.asarray(x) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo


PIXEL_SPACE = DiffusionSpace()
