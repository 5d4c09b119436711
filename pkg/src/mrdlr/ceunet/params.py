"""Flat parameter storage and the ADAM update."""

from dataclasses import dataclass

import numpy as np


class ParamStore:
    """One flat vector with named reshaped views into it.

    ``grads`` and the ADAM moment buffers share the same layout, so an update
    on the flat vectors is reflected in every view.
    """

    def __init__(self, layout, dtype=np.float64):
        self.layout = [(name, tuple(shape)) for name, shape in layout]
        self.dtype = np.dtype(dtype)
        self.offsets = {}
        off = 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            self.offsets[name] = (off, off + size, shape)
            off += size
        self.size = off
        self.flat = np.zeros(off, dtype=self.dtype)
        self.m = np.zeros(off, dtype=self.dtype)
        self.v = np.zeros(off, dtype=self.dtype)
        self.t = 0

    def view(self, vec, name):
        lo, hi, shape = self.offsets[name]
        return vec[lo:hi].reshape(shape)

    def __getitem__(self, name):
        return self.view(self.flat, name)

    def zeros_like(self):
        return np.zeros(self.size, dtype=self.dtype)

    def names(self, prefix=""):
        return [n for n, _ in self.layout if n.startswith(prefix)]

    def slice_of(self, name):
        lo, hi, _ = self.offsets[name]
        return slice(lo, hi)

    def astype(self, dtype):
        other = ParamStore(self.layout, dtype)
        other.flat[:] = self.flat
        other.m[:] = self.m
        other.v[:] = self.v
        other.t = self.t
        return other


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(store, grads, lr, t, cfg=AdamConfig()):
    """In-place bias-corrected ADAM update of ``store.flat`` at step ``t >= 1``."""
    if t < 1:
        raise ValueError("ADAM step index must be >= 1")
    g = np.asarray(grads, dtype=store.dtype)
    if g.shape != store.flat.shape:
        raise ValueError(f"gradient length {g.shape} does not match parameters {store.flat.shape}")
    b1, b2 = cfg.beta1, cfg.beta2
    store.m *= b1
    store.m += (1.0 - b1) * g
    store.v *= b2
    store.v += (1.0 - b2) * g * g
    m_hat = store.m / (1.0 - b1 ** t)
    v_hat = store.v / (1.0 - b2 ** t)
    store.flat -= (lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(store.dtype)
    store.t = t
    return store
