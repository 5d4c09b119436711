"""Context-enhanced U-Net with a dynamic modulation pathway (DMP).

Encoder levels halve resolution with stride-2 convolutions; the decoder uses
nearest-neighbour upsampling followed by a convolution and a skip
concatenation. At the bottleneck a fully connected stack maps the context
vector to a per-sample 1x1 kernel and bias, applied as
``h + K(ctx) @ h + b(ctx)``. The last DMP layer starts at zero so the
modulation is an exact identity until training moves it.

The network predicts a residual added to the centre input channel.
"""

from dataclasses import asdict, dataclass

import numpy as np

from ..context import CONTEXT_LEN
from ..errors import ValidationError
from ..rng import make_rng
from . import layers as L
from .params import ParamStore


@dataclass(frozen=True)
class UNetSpec:
    depth: int = 2
    base_channels: int = 8
    in_channels: int = 1
    out_channels: int = 1
    pad_mode: str = "zero"

    def __post_init__(self):
        if self.depth < 1:
            raise ValidationError("depth must be >= 1")
        if self.base_channels < 1:
            raise ValidationError("base_channels must be >= 1")
        if self.in_channels not in (1, 7):
            raise ValidationError("in_channels must be 1 (2D) or 7 (3D stack)")
        if self.out_channels != 1:
            raise ValidationError("out_channels must be 1")
        if self.pad_mode not in ("zero", "periodic"):
            raise ValidationError("pad_mode must be 'zero' or 'periodic'")

    def channels(self, level):
        return self.base_channels * 2 ** level

    @property
    def bottleneck_channels(self):
        return self.channels(self.depth)

    @property
    def multiple(self):
        return 2 ** self.depth

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class DMPSpec:
    context_len: int = CONTEXT_LEN
    hidden: tuple = (64, 64)

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self):
        return {"context_len": self.context_len, "hidden": list(self.hidden)}


def _layout(spec, dmp):
    C = spec.channels
    out = []

    def conv(name, co, ci, k=3):
        out.append((name + ".w", (co, ci, k, k)))
        out.append((name + ".b", (co,)))

    conv("enc0a", C(0), spec.in_channels)
    conv("enc0b", C(0), C(0))
    for lvl in range(1, spec.depth + 1):
        conv(f"down{lvl}", C(lvl), C(lvl - 1))
        if lvl < spec.depth:
            conv(f"enc{lvl}", C(lvl), C(lvl))
    conv("bott_a", C(spec.depth), C(spec.depth))
    conv("bott_b", C(spec.depth), C(spec.depth))
    for lvl in range(spec.depth - 1, -1, -1):
        conv(f"up{lvl}", C(lvl), C(lvl + 1))
        conv(f"dec{lvl}", C(lvl), 2 * C(lvl))
    conv("head", spec.out_channels, C(0), k=1)
    cb = spec.bottleneck_channels
    sizes = (dmp.context_len,) + dmp.hidden + (cb * cb + cb,)
    for i in range(len(sizes) - 1):
        name = f"dmp.fc{i}" if i < len(sizes) - 2 else "dmp.out"
        out.append((name + ".w", (sizes[i], sizes[i + 1])))
        out.append((name + ".b", (sizes[i + 1],)))
    return out


class CEUNet:
    def __init__(self, spec=UNetSpec(), dmp=DMPSpec(), seed=0, dtype=np.float64):
        self.spec = spec
        self.dmp = dmp
        self.params = ParamStore(_layout(spec, dmp), dtype)
        self._cache = None
        self.init_params(seed)

    @property
    def dtype(self):
        return self.params.dtype

    def init_params(self, seed):
        rng = make_rng(seed, 0x554E4554)
        p = self.params
        for name, shape in p.layout:
            if not name.endswith(".w") or name.startswith("dmp.out"):
                continue
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            std = np.sqrt(2.0 / fan_in)
            if name == "head.w":
                std *= 0.1
            p[name][...] = rng.normal(0.0, std, size=shape)

    # -------------------------------------------------------------- DMP

    def _dmp_names(self):
        n_hidden = len(self.dmp.hidden)
        return [f"dmp.fc{i}" for i in range(n_hidden)] + ["dmp.out"]

    def _dmp_forward(self, ctx):
        p = self.params
        h = ctx
        caches = []
        names = self._dmp_names()
        for i, name in enumerate(names):
            x_in = h
            h = L.dense_forward(h, p[name + ".w"], p[name + ".b"])
            mask = None
            if i < len(names) - 1:
                h, mask = L.relu_forward(h)
            caches.append((name, x_in, mask))
        cb = self.spec.bottleneck_channels
        kernel = h[:, :cb * cb].reshape(-1, cb, cb)
        bias = h[:, cb * cb:]
        return kernel, bias, caches

    def _dmp_backward(self, dkernel, dbias, caches, grad):
        p = self.params
        g = np.concatenate([dkernel.reshape(dkernel.shape[0], -1), dbias], axis=1)
        for name, x_in, mask in reversed(caches):
            if mask is not None:
                g = L.relu_backward(g, mask)
            g, dw, db = L.dense_backward(g, x_in, p[name + ".w"])
            self.params.view(grad, name + ".w")[...] += dw
            self.params.view(grad, name + ".b")[...] += db

    def dmp_generate(self, ctx):
        """1x1 bottleneck kernel (identity + generated delta) and bias for each context."""
        ctx = self._check_ctx(ctx)
        delta, bias, _ = self._dmp_forward(ctx)
        eye = np.eye(self.spec.bottleneck_channels, dtype=self.dtype)
        return eye[None] + delta, bias

    def _check_ctx(self, ctx):
        ctx = np.asarray(ctx, dtype=self.dtype)
        if ctx.ndim == 1:
            ctx = ctx[None]
        if ctx.shape[-1] != self.dmp.context_len:
            raise ValidationError(f"context length {ctx.shape[-1]} != {self.dmp.context_len}")
        return ctx

    # ---------------------------------------------------------- forward

    def _conv(self, name, x, tape, stride=1, relu=True):
        p = self.params
        out, cache = L.conv_forward(x, p[name + ".w"], p[name + ".b"], stride, self.spec.pad_mode)
        mask = None
        if relu:
            out, mask = L.relu_forward(out)
        tape[name] = (cache, mask)
        return out

    def forward(self, x, ctx, keep_cache=True):
        """Map ``[N, Cin, H, W]`` slices plus ``[N, 16]`` contexts to ``[N, 1, H, W]``."""
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 3:
            x = x[None]
        spec = self.spec
        if x.ndim != 4 or x.shape[1] != spec.in_channels:
            raise ValidationError(f"expected input [N, {spec.in_channels}, H, W], got {x.shape}")
        if x.shape[2] % spec.multiple or x.shape[3] % spec.multiple:
            raise ValidationError(f"spatial dims {x.shape[2:]} must be divisible by {spec.multiple}")
        ctx = self._check_ctx(ctx)
        if ctx.shape[0] == 1 and x.shape[0] > 1:
            ctx = np.repeat(ctx, x.shape[0], axis=0)
        if ctx.shape[0] != x.shape[0]:
            raise ValidationError("one context vector per input sample is required")

        tape = {}
        h = self._conv("enc0a", x, tape)
        h = self._conv("enc0b", h, tape)
        skips = [h]
        for lvl in range(1, spec.depth + 1):
            h = self._conv(f"down{lvl}", h, tape, stride=2)
            if lvl < spec.depth:
                h = self._conv(f"enc{lvl}", h, tape)
                skips.append(h)
        h = self._conv("bott_a", h, tape)
        delta, bias, dmp_caches = self._dmp_forward(ctx)
        mod_in = h
        h = h + np.einsum("noc,nchw->nohw", delta, h) + bias[:, :, None, None]
        h = self._conv("bott_b", h, tape)
        for lvl in range(spec.depth - 1, -1, -1):
            h = self._conv(f"up{lvl}", L.upsample_forward(h), tape)
            h = self._conv(f"dec{lvl}", np.concatenate([h, skips[lvl]], axis=1), tape)
        res = self._conv("head", h, tape, relu=False)
        centre = spec.in_channels // 2
        out = x[:, centre:centre + 1] + res
        if keep_cache:
            self._cache = dict(tape=tape, delta=delta, mod_in=mod_in, dmp=dmp_caches,
                               skip_channels=[s.shape[1] for s in skips], n=x.shape[0])
        return out

    # --------------------------------------------------------- backward

    def _conv_back(self, name, g, tape, grad):
        cache, mask = tape[name]
        if mask is not None:
            g = L.relu_backward(g, mask)
        dx, dw, db = L.conv_backward(g, self.params[name + ".w"], cache)
        self.params.view(grad, name + ".w")[...] += dw
        self.params.view(grad, name + ".b")[...] += db
        return dx

    def backward(self, grad_out):
        """Gradient of ``sum(grad_out * forward(...))`` w.r.t. every parameter (flat vector)."""
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        c = self._cache
        tape = c["tape"]
        spec = self.spec
        grad = self.params.zeros_like()
        g = np.asarray(grad_out, dtype=self.dtype)
        g = self._conv_back("head", g, tape, grad)
        skip_grads = [None] * spec.depth
        for lvl in range(spec.depth):
            g = self._conv_back(f"dec{lvl}", g, tape, grad)
            ch = c["skip_channels"][lvl]
            skip_grads[lvl] = g[:, -ch:]
            g = g[:, :-ch]
            g = self._conv_back(f"up{lvl}", g, tape, grad)
            g = L.upsample_backward(g)
        g = self._conv_back("bott_b", g, tape, grad)
        delta, h = c["delta"], c["mod_in"]
        ddelta = np.einsum("nohw,nchw->noc", g, h)
        dbias = g.sum(axis=(2, 3))
        g = g + np.einsum("noc,nohw->nchw", delta, g)
        self._dmp_backward(ddelta, dbias, c["dmp"], grad)
        g = self._conv_back("bott_a", g, tape, grad)
        for lvl in range(spec.depth, 0, -1):
            if lvl < spec.depth:
                g = g + skip_grads[lvl]
                g = self._conv_back(f"enc{lvl}", g, tape, grad)
            g = self._conv_back(f"down{lvl}", g, tape, grad)
        g = g + skip_grads[0]
        g = self._conv_back("enc0b", g, tape, grad)
        self._conv_back("enc0a", g, tape, grad)
        return grad

    # ------------------------------------------------------------- loss

    def l1_loss_and_grad(self, x, ctx, target):
        out = self.forward(x, ctx)
        target = np.asarray(target, dtype=self.dtype)
        diff = out - target
        loss = float(np.abs(diff).mean())
        grad = self.backward(np.sign(diff) / diff.size)
        return loss, grad

    def l1_loss(self, x, ctx, target):
        out = self.forward(x, ctx, keep_cache=False)
        return float(np.abs(out - np.asarray(target, dtype=self.dtype)).mean())

    def n_params(self):
        return self.params.size
