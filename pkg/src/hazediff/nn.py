"""Hand-differentiated layer primitives on N x C x H x W arrays, plus Adam."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numerics import gaussian_sample


def conv2d(x, w, b, stride=1):
    """3x3 (or k x k) convolution with 'same'-style zero padding of k // 2.

    Returns (out, cache); cache feeds :func:`conv2d_backward`.
    """
    k = w.shape[-1]
    p = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    cols = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # N, Ho, Wo, O
    out = out.transpose(0, 3, 1, 2) + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out), (cols, w, x.shape, stride)


def conv2d_backward(dout, cache):
    cols, w, xshape, stride = cache
    k = w.shape[-1]
    p = k // 2
    n, c, h, wd = xshape
    ho, wo = dout.shape[2:]
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
    db = dout.sum(axis=(0, 2, 3))
    dcols = np.tensordot(dout, w, axes=([1], [0]))  # N, Ho, Wo, C, k, k
    dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=dout.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    return dxp[:, :, p:p + h, p:p + wd], dw, db


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def silu(x):
    return x * sigmoid(x)


def silu_grad(x, dy):
    s = sigmoid(x)
    return dy * s * (1.0 + x * (1.0 - s))


def upsample2(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(dy):
    n, c, h, w = dy.shape
    return dy.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def to_nchw(img):
    img = np.asarray(img)
    return img.transpose(0, 3, 1, 2) if img.ndim == 4 else img.transpose(2, 0, 1)[None]


def to_nhwc(x):
    return x.transpose(0, 2, 3, 1)


def init_params(shapes, rng, dtype=np.float64):
    """He-style normal init for weights, zeros for biases (names ending in '_b')."""
    params = {}
    for name, shape in shapes.items():
        if name.endswith("_b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:]))
            params[name] = (gaussian_sample(rng, shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return params


class Adam:
    """Adam with bias correction; state keyed by parameter name."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.step_count = 0

    def step(self, params, grads, lr):
        """Return updated params; lr == 0 leaves every tensor bit-identical."""
        self.step_count += 1
        c1 = 1.0 - self.beta1**self.step_count
        c2 = 1.0 - self.beta2**self.step_count
        new = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            if lr == 0:
                new[k] = p
                continue
            upd = lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)
            new[k] = (p - upd).astype(p.dtype)
        return new
