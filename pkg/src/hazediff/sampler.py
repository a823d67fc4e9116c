"""Reverse diffusion with stage-1 conditioning and transmission-guided fusion.

Each reverse step t = T..1 predicts the noise, forms the posterior mean from the
implied clean image and adds sqrt(beta_tilde) * z. At fusion steps the same z
diffuses the stage-1 image J to level t - 1 and the two branches are blended
per pixel with trmap as the weight on J.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import denoiser
from .diffusion import PIXEL_SPACE, NoiseSchedule, eps_to_x0, posterior_mean_var
from .numerics import SeededRng, gaussian_sample

DENSE_TRMAP = 0.3


def default_fusion_steps(T: int, dense: bool) -> frozenset:
    """Last 80% of reverse steps for dense haze, last 20% otherwise."""
    frac = 0.8 if dense else 0.2
    return frozenset(range(1, max(1, int(round(frac * T))) + 1))


@dataclass
class SamplerConfig:
    T: int = 100
    fusion_steps: frozenset | str = "auto"
    seed: int = 0
    clamp_x0: bool = True
    use_ema: bool = True
    dense_threshold: float = DENSE_TRMAP

    def __post_init__(self):
        if self.fusion_steps == "auto":
            return
        if isinstance(self.fusion_steps, str):
            raise ValueError("fusion_steps must be 'auto' or a set of steps")
        steps = frozenset(int(s) for s in self.fusion_steps)
        bad = [s for s in steps if not 1 <= s <= self.T]
        if bad:
            raise ValueError(f"fusion steps outside [1, {self.T}]: {sorted(bad)}")
        self.fusion_steps = steps

    def steps_for(self, trmap) -> frozenset:
        if self.fusion_steps != "auto":
            return self.fusion_steps
        return default_fusion_steps(self.T, float(np.min(trmap)) <= self.dense_threshold)


def _predict(model, x_t, J, trmap, t):
    if callable(model):
        return model(x_t, J, trmap, t)
    return denoiser.denoise_forward(model, x_t, J, trmap, t)


def _broadcast_map(trmap, like):
    trmap = np.asarray(trmap)
    if trmap.ndim == like.ndim - 1:
        trmap = trmap[..., None]
    return trmap


def p_sample_step(model, x_t, J, trmap, t: int, rng: SeededRng | None, sched: NoiseSchedule,
                  clamp_x0: bool = True, z=None):
    """x_{t-1} from x_t. ``model`` is denoiser params or a callable eps-predictor.

    Supply either ``rng`` or an explicit noise array ``z``. Returns (x_prev, x0_hat, z).
    """
    sched.check_t(t)
    eps_hat = np.asarray(_predict(model, x_t, J, trmap, t), dtype=np.float64)
    x0_hat = eps_to_x0(x_t, eps_hat, t, sched)
    if clamp_x0:
        x0_hat = np.clip(x0_hat, -1.0, 1.0)
    mean, var = posterior_mean_var(x0_hat, x_t, t, sched)
    if z is None:
        z = gaussian_sample(rng, np.shape(x_t))
    return mean + np.sqrt(var) * z, x0_hat, z


def diffuse_condition(J, t: int, eps, sched: NoiseSchedule):
    """Stage-1 image noised to level t (t = 0 returns J itself)."""
    sched.check_t(t, lo=0)
    if t == 0:
        return np.asarray(J)
    ab = sched.alpha_bar_at(t)
    return np.sqrt(ab) * np.asarray(J) + np.sqrt(1.0 - ab) * np.asarray(eps)


def fuse(x, J_t, trmap):
    """trmap * J_t + (1 - trmap) * x, with trmap broadcast over channels."""
    x, J_t = np.asarray(x), np.asarray(J_t)
    if x.shape != J_t.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {J_t.shape}")
    trmap = _broadcast_map(trmap, x)
    if np.any(trmap < 0) or np.any(trmap > 1):
        raise ValueError("trmap entries must lie in [0, 1]")
    return trmap * J_t + (1.0 - trmap) * x


def sample(model, J, trmap, config: SamplerConfig, sched: NoiseSchedule,
           return_model_space: bool = False, on_step=None, item_offset: int = 0):
    """Run the full reverse chain for one image (H x W x 3) or a batch.

    ``J`` is in model space ([-1, 1]). The result is mapped to [0, 1] and
    clipped unless ``return_model_space``. ``on_step(t, x_prev, x0_hat)`` is
    called after every step when given.

    Item i of a batch draws its noise from its own stream keyed by
    ``config.seed`` and ``item_offset + i``, so results do not depend on how
    images are grouped into batches.
    """
    if config.T != sched.T:
        raise ValueError(f"sampler T={config.T} does not match schedule T={sched.T}")
    J = np.asarray(J, dtype=np.float64)
    trmap = _broadcast_map(np.asarray(trmap, dtype=np.float64), J)
    batched = J.ndim == 4
    if not batched:
        J, trmap = J[None], trmap[None]
    steps = [config.steps_for(tm) for tm in trmap]
    root = SeededRng(config.seed)
    rngs = [root.spawn(f"item-{item_offset + i}") for i in range(J.shape[0])]

    def noise():
        return np.stack([gaussian_sample(r, J.shape[1:]) for r in rngs])

    x = noise()
    for t in range(sched.T, 0, -1):
        x, x0_hat, z = p_sample_step(model, x, J, trmap, t, None, sched, config.clamp_x0, z=noise())
        mask = np.array([t in s for s in steps])
        if mask.any():
            J_prev = diffuse_condition(J, t - 1, z, sched)
            x = np.where(mask[:, None, None, None], fuse(x, J_prev, trmap), x)
        if on_step is not None:
            on_step(t, x if batched else x[0], x0_hat if batched else x0_hat[0])
    if not batched:
        x = x[0]
    if return_model_space:
        return x
    return np.clip(PIXEL_SPACE.from_model(x), 0.0, 1.0)
