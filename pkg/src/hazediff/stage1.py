"""First stage: decompose a hazy image into (J, trmap, A) under the ASM.

Fixed architecture::

    conv3x3(3->16) SiLU conv3x3(16->16) SiLU
      J-head: conv3x3(16->3) sigmoid
      t-head: conv3x3(16->1) sigmoid, rescaled to [T_FLOOR, 1]
      A-head: global average pool, affine(16->3), sigmoid
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .haze import T_FLOOR, HazeTriplet

WIDTH = 16
LAMBDA_REC = 1.0
STAGE1_SHAPES = {
    "conv1_w": (WIDTH, 3, 3, 3), "conv1_b": (WIDTH,),
    "conv2_w": (WIDTH, WIDTH, 3, 3), "conv2_b": (WIDTH,),
    "j_w": (3, WIDTH, 3, 3), "j_b": (3,),
    "t_w": (1, WIDTH, 3, 3), "t_b": (1,),
    "a_w": (3, WIDTH), "a_b": (3,),
}
STAGE1_PARAM_COUNT = sum(int(np.prod(s)) for s in STAGE1_SHAPES.values())  # 3399


@dataclass
class Stage1Output:
    J: np.ndarray       # [N,] H x W x 3
    trmap: np.ndarray   # [N,] H x W x 1
    A: np.ndarray       # [N,] 3

    def triplet(self) -> HazeTriplet:
        return HazeTriplet(self.J, self.trmap, self.A)


def init_stage1(rng, dtype=np.float64):
    return nn.init_params(STAGE1_SHAPES, rng, dtype)


def zero_stage1(dtype=np.float64):
    return {k: np.zeros(s, dtype=dtype) for k, s in STAGE1_SHAPES.items()}


def _forward(params, I):
    single = I.ndim == 3
    if I.shape[-1] != 3:
        raise ValueError(f"stage 1 expects 3 channels, got {I.shape[-1]}")
    if I.shape[-3] < 8 or I.shape[-2] < 8:
        raise ValueError("stage 1 expects H, W >= 8")
    x = nn.to_nchw(I).astype(params["conv1_w"].dtype, copy=False)
    z1, c1 = nn.conv2d(x, params["conv1_w"], params["conv1_b"])
    h1 = nn.silu(z1)
    z2, c2 = nn.conv2d(h1, params["conv2_w"], params["conv2_b"])
    h2 = nn.silu(z2)
    zj, cj = nn.conv2d(h2, params["j_w"], params["j_b"])
    zt, ct = nn.conv2d(h2, params["t_w"], params["t_b"])
    pooled = h2.mean(axis=(2, 3))
    za = pooled @ params["a_w"].T + params["a_b"]
    J = nn.sigmoid(zj)
    st = nn.sigmoid(zt)
    A = nn.sigmoid(za)
    out = Stage1Output(nn.to_nhwc(J), nn.to_nhwc(T_FLOOR + (1.0 - T_FLOOR) * st), A)
    if single:
        out = Stage1Output(out.J[0], out.trmap[0], out.A[0])
    cache = (z1, c1, z2, c2, cj, ct, pooled, J, st, A, h2.shape)
    return out, cache


def _backward(params, cache, dJ, dtrmap, dA):
    """Gradients w.r.t. params given upstream grads on batched NHWC outputs."""
    z1, c1, z2, c2, cj, ct, pooled, J, st, A, hshape = cache
    dzj = nn.to_nchw(dJ) * J * (1.0 - J)
    dzt = nn.to_nchw(dtrmap) * (1.0 - T_FLOOR) * st * (1.0 - st)
    dza = dA * A * (1.0 - A)
    g = {"a_w": dza.T @ pooled, "a_b": dza.sum(axis=0)}
    dh2 = np.broadcast_to(
        (dza @ params["a_w"])[:, :, None, None] / (hshape[2] * hshape[3]), hshape
    ).copy()
    d, g["j_w"], g["j_b"] = nn.conv2d_backward(dzj, cj)
    dh2 += d
    d, g["t_w"], g["t_b"] = nn.conv2d_backward(dzt, ct)
    dh2 += d
    dh1, g["conv2_w"], g["conv2_b"] = nn.conv2d_backward(nn.silu_grad(z2, dh2), c2)
    _, g["conv1_w"], g["conv1_b"] = nn.conv2d_backward(nn.silu_grad(z1, dh1), c1)
    return {k: g[k] for k in params}


def stage1_forward(params, I) -> Stage1Output:
    """Decompose one image (H x W x 3) or a batch (N x H x W x 3)."""
    return _forward(params, np.asarray(I))[0]


def _mae(a, b):
    return float(np.mean(np.abs(a - b)))


def stage1_loss(out: Stage1Output, gt_J, I) -> float:
    """MAE(J, gt) + LAMBDA_REC * MAE(ASM reconstruction, I)."""
    gt_J, I = np.asarray(gt_J), np.asarray(I)
    if out.J.shape != gt_J.shape or gt_J.shape != I.shape:
        raise ValueError(f"shape mismatch: J {out.J.shape}, gt {gt_J.shape}, input {I.shape}")
    rec = _compose_batched(out)
    return _mae(out.J, gt_J) + LAMBDA_REC * _mae(rec, I)


def _compose_batched(out):
    A = out.A[..., None, None, :]
    return out.J * out.trmap + A * (1.0 - out.trmap)


def stage1_loss_and_grad(params, I, gt_J):
    """Loss on a batch (N x H x W x 3) and its gradient for every parameter."""
    I, gt_J = np.asarray(I), np.asarray(gt_J)
    if I.ndim == 3:
        I, gt_J = I[None], gt_J[None]
    out, cache = _forward(params, I)
    loss = stage1_loss(out, gt_J, I)
    rec = _compose_batched(out)
    n = I.size
    dJ = np.sign(out.J - gt_J) / n
    drec = LAMBDA_REC * np.sign(rec - I) / n
    dJ = dJ + drec * out.trmap
    dtrmap = (drec * (out.J - out.A[:, None, None, :])).sum(axis=-1, keepdims=True)
    dA = (drec * (1.0 - out.trmap)).sum(axis=(1, 2))
    return loss, _backward(params, cache, dJ, dtrmap, dA)


def stage1_train_step(params, batch, lr, opt: nn.Adam | None = None):
    """One Adam update on a list of (hazy, clear) pairs; returns (params', pre-update loss).

    Pass the same ``opt`` across steps to keep moment estimates.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    I = np.stack([b[0] for b in batch])
    gt = np.stack([b[1] for b in batch])
    loss, grads = stage1_loss_and_grad(params, I, gt)
    if not np.isfinite(loss):
        raise FloatingPointError(f"stage 1 loss diverged: {loss}")
    opt = opt if opt is not None else nn.Adam(params)
    return opt.step(params, grads, lr), loss
