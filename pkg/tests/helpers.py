"""Shared oracles for the unit and acceptance suites."""

import numpy as np

from mrdlr.ceunet import CEUNet, UNetSpec
from mrdlr.context import CONTEXT_LEN
from mrdlr.rng import make_rng


def perturbed_net(spec, seed=0):
    """Double-precision net whose DMP output layer is non-zero, so every parameter has a path."""
    net = CEUNet(spec, seed=seed, dtype=np.float64)
    rng = make_rng(seed, 77)
    for name in ("dmp.out.w", "dmp.out.b"):
        net.params[name][...] = rng.normal(0.0, 0.05, net.params[name].shape)
    return net


def finite_difference_check(in_channels, n_params=50, seed=0, eps=1e-5, pad_mode="zero"):
    """Max relative error between central differences and backprop.

    The loss is ``sum(G * net(x))`` for a fixed random ``G``. An L1 loss would
    put a kink at every zero residual, and a residual within ``eps`` of zero
    invalidates the central difference. The sampled indices always include a
    share of DMP parameters.
    """
    spec = UNetSpec(in_channels=in_channels, pad_mode=pad_mode)
    net = perturbed_net(spec, seed)
    rng = make_rng(seed, 78)
    x = rng.standard_normal((2, in_channels, 8, 8))
    ctx = rng.uniform(0.0, 2.0, (2, CONTEXT_LEN))
    g_out = rng.standard_normal((2, 1, 8, 8))
    net.forward(x, ctx)
    grad = net.backward(g_out)

    def loss():
        return float(np.sum(g_out * net.forward(x, ctx, keep_cache=False)))

    dmp_idx = np.concatenate([np.arange(net.params.size)[net.params.slice_of(n)]
                              for n in net.params.names("dmp.")])
    conv_idx = np.setdiff1d(np.arange(net.params.size), dmp_idx)
    n_dmp = n_params // 3
    idx = np.concatenate([rng.choice(dmp_idx, n_dmp, replace=False),
                          rng.choice(conv_idx, n_params - n_dmp, replace=False)])
    flat = net.params.flat
    worst = 0.0
    for i in idx:
        keep = flat[i]
        flat[i] = keep + eps
        up = loss()
        flat[i] = keep - eps
        down = loss()
        flat[i] = keep
        num = (up - down) / (2 * eps)
        denom = max(abs(num), abs(grad[i]), 1e-7)
        worst = max(worst, abs(num - grad[i]) / denom)
    return worst
