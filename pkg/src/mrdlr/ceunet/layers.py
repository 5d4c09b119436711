"""Array-level layer primitives with explicit backward passes.

Tensors are ``[N, C, H, W]``. Convolutions are cross-correlations with
square kernels, "same"-style padding ``k // 2`` and either zero or periodic
boundary handling.
"""

import numpy as np


def pad(x, p, mode):
    if p == 0:
        return x
    widths = ((0, 0), (0, 0), (p, p), (p, p))
    if mode == "periodic":
        return np.pad(x, widths, mode="wrap")
    return np.pad(x, widths, mode="constant")


def unpad_grad(gp, p, mode):
    """Adjoint of :func:`pad`."""
    if p == 0:
        return gp
    if mode == "periodic":
        g = gp.copy()
        g[:, :, p:2 * p, :] += g[:, :, -p:, :]
        g[:, :, -2 * p:-p, :] += g[:, :, :p, :]
        g[:, :, :, p:2 * p] += g[:, :, :, -p:]
        g[:, :, :, -2 * p:-p] += g[:, :, :, :p]
        return g[:, :, p:-p, p:-p]
    return gp[:, :, p:-p, p:-p]


def conv_forward(x, w, b, stride=1, mode="zero"):
    """Returns ``(out, cache)``; ``w`` is ``[Co, C, k, k]``."""
    n, c, h, wd = x.shape
    co, _, k, _ = w.shape
    p = k // 2
    xp = pad(x, p, mode)
    ho = (h + 2 * p - k) // stride + 1
    wo = (wd + 2 * p - k) // stride + 1
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    cols = cols.reshape(n, c * k * k, ho * wo)
    out = np.matmul(w.reshape(co, -1), cols) + b[None, :, None]
    return out.reshape(n, co, ho, wo), (cols, x.shape, stride, mode, k)


def conv_backward(g, w, cache):
    """Returns ``(dx, dw, db)``."""
    cols, xshape, stride, mode, k = cache
    n, c, h, wd = xshape
    co = w.shape[0]
    p = k // 2
    ho, wo = g.shape[2:]
    g2 = g.reshape(n, co, ho * wo)
    dw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    db = g2.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(co, -1).T, g2).reshape(n, c, k, k, ho, wo)
    dxp = np.zeros((n, c, h + 2 * p, wd + 2 * p), dtype=g.dtype)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, :, i, j]
    return unpad_grad(dxp, p, mode), dw, db


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(g, mask):
    return g * mask


def upsample_forward(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample_backward(g):
    n, c, h, w = g.shape
    return g.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def dense_forward(x, w, b):
    return x @ w + b


def dense_backward(g, x, w):
    return g @ w.T, x.T @ g, g.sum(axis=0)
