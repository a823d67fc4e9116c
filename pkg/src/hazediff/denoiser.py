"""Conditional noise predictor eps_hat = f(x_t, J, trmap, t).

A one-level U-shaped convnet on the channel concatenation of the noisy image,
the stage-1 estimate and the transmission map::

    in:   conv3x3(7->32) SiLU ------------------------------+ skip
    down: conv3x3/2(32->64) SiLU                            |
    mid:  conv3x3(64->64) + Linear(temb) SiLU               |
    up:   nearest x2, concat skip, conv3x3(96->32) SiLU  <--+
    out:  conv3x3(32->3)
"""

from __future__ import annotations

import numpy as np

from . import nn

TEMB_DIM = 64
DENOISER_SHAPES = {
    "in_w": (32, 7, 3, 3), "in_b": (32,),
    "down_w": (64, 32, 3, 3), "down_b": (64,),
    "mid_w": (64, 64, 3, 3), "mid_b": (64,),
    "temb_w": (64, TEMB_DIM), "temb_b": (64,),
    "up_w": (32, 96, 3, 3), "up_b": (32,),
    "out_w": (3, 32, 3, 3), "out_b": (3,),
}
DENOISER_PARAM_COUNT = sum(int(np.prod(s)) for s in DENOISER_SHAPES.values())  # 90179


def time_embed(t, dim: int = TEMB_DIM) -> np.ndarray:
    """Sinusoidal features [sin(t f_k)..., cos(t f_k)...], f_k = 10000^(-2k/dim).

    ``t`` may be an int (returns (dim,)) or a 1-D array of steps (returns (N, dim)).
    """
    if dim % 2:
        raise ValueError("time embedding dim must be even")
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0):
        raise ValueError("time step must be >= 0")
    freqs = 10000.0 ** (-2.0 * np.arange(dim // 2) / dim)
    phase = t_arr[..., None] * freqs
    return np.concatenate([np.sin(phase), np.cos(phase)], axis=-1)


def init_denoiser(rng, dtype=np.float32):
    return nn.init_params(DENOISER_SHAPES, rng, dtype)


def zero_denoiser(dtype=np.float32):
    return {k: np.zeros(s, dtype=dtype) for k, s in DENOISER_SHAPES.items()}


def _prepare(params, x_t, J, trmap, t):
    x_t, J, trmap = np.asarray(x_t), np.asarray(J), np.asarray(trmap)
    single = x_t.ndim == 3
    if single:
        x_t, J, trmap = x_t[None], J[None], trmap[None]
    if trmap.ndim == 3:
        trmap = trmap[..., None]
    if x_t.shape[-1] != 3 or J.shape[-1] != 3 or trmap.shape[-1] != 1:
        raise ValueError(
            f"channel mismatch: x_t {x_t.shape}, J {J.shape}, trmap {trmap.shape} (want 3, 3, 1)"
        )
    if not (x_t.shape[:3] == J.shape[:3] == trmap.shape[:3]):
        raise ValueError("spatial shapes of x_t, J and trmap differ")
    h, w = x_t.shape[1:3]
    if h % 2 or w % 2:
        raise ValueError(f"spatial dims must be even, got {h}x{w}")
    dtype = params["in_w"].dtype
    x = nn.to_nchw(np.concatenate([x_t, J, trmap], axis=-1)).astype(dtype, copy=False)
    t = np.broadcast_to(np.asarray(t), (x.shape[0],))
    emb = time_embed(t, params["temb_w"].shape[1]).astype(dtype)
    return x, emb, single


def _forward(params, x, emb):
    z1, c1 = nn.conv2d(x, params["in_w"], params["in_b"])
    h1 = nn.silu(z1)
    z2, c2 = nn.conv2d(h1, params["down_w"], params["down_b"], stride=2)
    h2 = nn.silu(z2)
    z3, c3 = nn.conv2d(h2, params["mid_w"], params["mid_b"])
    z3 = z3 + (emb @ params["temb_w"].T + params["temb_b"])[:, :, None, None]
    h3 = nn.silu(z3)
    u = np.concatenate([nn.upsample2(h3), h1], axis=1)
    z4, c4 = nn.conv2d(u, params["up_w"], params["up_b"])
    h4 = nn.silu(z4)
    out, c5 = nn.conv2d(h4, params["out_w"], params["out_b"])
    return out, (z1, c1, z2, c2, z3, c3, z4, c4, c5, emb)


def _backward(params, cache, dout):
    z1, c1, z2, c2, z3, c3, z4, c4, c5, emb = cache
    g = {}
    dh4, g["out_w"], g["out_b"] = nn.conv2d_backward(dout, c5)
    du, g["up_w"], g["up_b"] = nn.conv2d_backward(nn.silu_grad(z4, dh4), c4)
    nh3 = params["mid_w"].shape[0]
    dh3 = nn.upsample2_backward(du[:, :nh3])
    dh1 = du[:, nh3:]
    dz3 = nn.silu_grad(z3, dh3)
    dproj = dz3.sum(axis=(2, 3))
    g["temb_w"] = dproj.T @ emb
    g["temb_b"] = dproj.sum(axis=0)
    dh2, g["mid_w"], g["mid_b"] = nn.conv2d_backward(dz3, c3)
    d, g["down_w"], g["down_b"] = nn.conv2d_backward(nn.silu_grad(z2, dh2), c2)
    dh1 = dh1 + d
    _, g["in_w"], g["in_b"] = nn.conv2d_backward(nn.silu_grad(z1, dh1), c1)
    return {k: g[k].astype(params[k].dtype, copy=False) for k in params}


def denoise_forward(params, x_t, J, trmap, t) -> np.ndarray:
    """Predicted noise, same shape as ``x_t`` (H x W x 3 or N x H x W x 3).

    ``J`` is in model space; ``trmap`` is H x W (x 1); ``t`` an int or per-item array.
    """
    x, emb, single = _prepare(params, x_t, J, trmap, t)
    out, _ = _forward(params, x, emb)
    out = nn.to_nhwc(out)
    return out[0] if single else out


def denoise_forward_with_cache(params, x_t, J, trmap, t):
    """Batched forward that keeps what :func:`denoise_backward` needs."""
    x, emb, _ = _prepare(params, x_t, J, trmap, t)
    out, cache = _forward(params, x, emb)
    return nn.to_nhwc(out), cache


def denoise_backward(params, cache, d_eps_hat):
    """Parameter gradients given dLoss/d eps_hat in N x H x W x 3 layout."""
    return _backward(params, cache, nn.to_nchw(np.asarray(d_eps_hat)))
