"""Noise-prediction objective with a frequency prior, Adam warmup and EMA."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import denoiser, nn
from .diffusion import NoiseSchedule, q_sample
from .numerics import SeededRng, gaussian_sample


@dataclass
class TrainConfig:
    lr: float = 1e-4
    warmup_steps: int = 200
    ema_decay: float = 0.999
    lambda_fre: float = 0.01
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.lambda_fre < 0:
            raise ValueError("lambda_fre must be >= 0")
        if not 0.0 <= self.ema_decay <= 1.0:
            raise ValueError("ema_decay must lie in [0, 1]")


@dataclass
class EmaState:
    shadow: dict
    decay: float = 0.999

    @classmethod
    def from_params(cls, params, decay=0.999):
        return cls({k: v.copy() for k, v in params.items()}, decay)


def ema_update(ema: EmaState, params) -> EmaState:
    """shadow <- decay * shadow + (1 - decay) * params."""
    if ema.shadow.keys() != params.keys():
        raise ValueError("EMA shadow and params have different tensors")
    d = ema.decay
    new = {}
    for k, s in ema.shadow.items():
        p = params[k]
        if s.shape != p.shape:
            raise ValueError(f"shape mismatch for {k}: {s.shape} vs {p.shape}")
        if d == 1.0:
            new[k] = s.copy()
        elif d == 0.0:
            new[k] = p.copy()
        else:
            new[k] = (d * s + (1.0 - d) * p).astype(s.dtype)
    return EmaState(new, d)


def weight_map(H: int, W: int) -> np.ndarray:
    """((x - W/2)^2 + (y - H/2)^2) / ((W/2)^2 + (H/2)^2) on pixel coordinates."""
    if H < 2 or W < 2:
        raise ValueError("weight map needs H, W >= 2")
    y, x = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
    return ((x - W / 2) ** 2 + (y - H / 2) ** 2) / ((W / 2) ** 2 + (H / 2) ** 2)


def loss_simple(eps, eps_hat) -> float:
    eps, eps_hat = np.asarray(eps), np.asarray(eps_hat)
    if eps.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch {eps.shape} vs {eps_hat.shape}")
    return float(np.mean(np.abs(eps - eps_hat)))


# Spectra below are taken over the spatial axes of N x H x W x C stacks, so the
# 2-D transforms act per item and per channel.
_AX = (1, 2)


def _centered_amp(x):
    X = np.fft.fft2(x, axes=_AX)
    return np.fft.fftshift(np.abs(X), axes=_AX), X


def _as_batch(a):
    a = np.asarray(a, dtype=np.float64)
    return a[None] if a.ndim == 3 else a


def _x0_coefs(t, sched, n):
    t = np.broadcast_to(np.asarray(t), (n,))
    for ti in t:
        sched.check_t(int(ti))
    ab = np.array([sched.alpha_bar_at(int(ti)) for ti in t])
    return (1.0 / np.sqrt(ab)).reshape(-1, 1, 1, 1), (np.sqrt(1.0 - ab) / np.sqrt(ab)).reshape(-1, 1, 1, 1)


def loss_frequency_and_grad(x0, x_t, eps_hat, t, sched: NoiseSchedule, wmap=None):
    """Weighted L1 between centred amplitude spectra of x0 and the x0 implied by eps_hat.

    Returns (loss, dloss/d eps_hat). Arrays are H x W x C or N x H x W x C;
    the loss is the mean over items, channels and frequency bins.
    """
    x0, x_t, eps_hat = _as_batch(x0), _as_batch(x_t), _as_batch(eps_hat)
    if not (x0.shape == x_t.shape == eps_hat.shape):
        raise ValueError("x0, x_t and eps_hat must share a shape")
    n, h, w, _ = x0.shape
    if wmap is None:
        wmap = weight_map(h, w)
    if wmap.shape != (h, w):
        raise ValueError(f"weight map {wmap.shape} does not match {h}x{w}")
    inv_sqrt_ab, k_eps = _x0_coefs(t, sched, n)
    x0_hat = inv_sqrt_ab * x_t - k_eps * eps_hat
    amp_true, _ = _centered_amp(x0)
    amp_hat, X = _centered_amp(x0_hat)
    wm = wmap[None, :, :, None]
    diff = amp_true - amp_hat
    loss = float(np.mean(wm * np.abs(diff)))

    d_amp = -wm * np.sign(diff) / diff.size
    d_amp = np.fft.ifftshift(d_amp, axes=_AX)
    mag = np.abs(X)
    safe = np.where(mag > 0, mag, 1.0)
    G = np.where(mag > 0, d_amp / safe, 0.0) * X  # dRe + i dIm
    d_x0_hat = h * w * np.fft.ifft2(G, axes=_AX).real  # DFT adjoint
    return loss, -k_eps * d_x0_hat


def loss_frequency(x0, x_t, eps_hat, t, sched: NoiseSchedule, wmap=None) -> float:
    return loss_frequency_and_grad(x0, x_t, eps_hat, t, sched, wmap)[0]


def total_loss_and_grad(params, x0, J, trmap, t, eps, sched, lambda_fre=0.01, wmap=None):
    """loss_simple + lambda_fre * loss_frequency on one batch, with parameter grads."""
    x0 = _as_batch(x0)
    eps = _as_batch(eps)
    if eps.shape != x0.shape:
        raise ValueError(f"shape mismatch {x0.shape} vs {eps.shape}")
    t = np.broadcast_to(np.asarray(t), (x0.shape[0],))
    x_t = np.stack([q_sample(x0[i], int(t[i]), eps[i], sched) for i in range(x0.shape[0])])
    eps_hat, cache = denoiser.denoise_forward_with_cache(params, x_t, J, trmap, t)
    eps_hat64 = eps_hat.astype(np.float64)
    l_simple = loss_simple(eps, eps_hat64)
    d = np.sign(eps_hat64 - eps) / eps.size
    l_fre = 0.0
    if lambda_fre:
        l_fre, d_fre = loss_frequency_and_grad(x0, x_t, eps_hat64, t, sched, wmap)
        d = d + lambda_fre * d_fre
    grads = denoiser.denoise_backward(params, cache, d.astype(eps_hat.dtype))
    losses = {"simple": l_simple, "frequency": l_fre, "total": l_simple + lambda_fre * l_fre}
    return losses, grads


@dataclass
class DiffusionTrainer:
    """Holds optimizer and EMA state across :func:`train_step` calls."""

    params: dict
    config: TrainConfig = field(default_factory=TrainConfig)
    ema: EmaState | None = None
    opt: nn.Adam | None = None

    def __post_init__(self):
        if self.ema is None:
            self.ema = EmaState.from_params(self.params, self.config.ema_decay)
        if self.opt is None:
            self.opt = nn.Adam(self.params)


def warmup_lr(config: TrainConfig, step: int) -> float:
    if config.warmup_steps <= 0:
        return config.lr
    return config.lr * min(1.0, step / config.warmup_steps)


def train_step(params, ema: EmaState, batch, t_sampler: SeededRng, config: TrainConfig,
               sched: NoiseSchedule, opt: nn.Adam | None = None, wmap=None):
    """One optimisation step on a list of (x0, J, trmap) triples in model space.

    Draws t uniformly on [1, T] and eps ~ N(0, I) per item from ``t_sampler``,
    applies Adam with linear warmup, then the EMA update.
    Returns (params', ema', losses).
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    x0 = np.stack([np.asarray(b[0], dtype=np.float64) for b in batch])
    J = np.stack([np.asarray(b[1]) for b in batch])
    trmap = np.stack([np.asarray(b[2]) for b in batch])
    t = t_sampler.integers(1, sched.T, len(batch))
    eps = gaussian_sample(t_sampler, x0.shape)
    losses, grads = total_loss_and_grad(params, x0, J, trmap, t, eps, sched, config.lambda_fre, wmap)
    if not np.isfinite(losses["total"]):
        raise FloatingPointError(f"diffusion loss diverged: {losses['total']}")
    opt = opt if opt is not None else nn.Adam(params)
    lr = warmup_lr(config, opt.step_count + 1)
    new_params = opt.step(params, grads, lr)
    return new_params, ema_update(ema, new_params), losses
