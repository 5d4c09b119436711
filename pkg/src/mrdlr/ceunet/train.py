"""Mini-batch ADAM training with a step learning-rate schedule."""

import time
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DivergenceError, ValidationError
from ..rng import make_rng
from .net import CEUNet, DMPSpec
from .params import AdamConfig, adam_step


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 1e-3
    decay_after: int = 10
    extra_epochs: int = 3
    decay_factor: float = 0.1
    batch_size: int = 16
    seed: int = 0
    dtype: str = "float32"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValidationError("lr0 must be > 0")
        if self.decay_after < 0 or self.extra_epochs < 0:
            raise ValidationError("epoch counts must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValidationError("dtype must be float32 or float64")

    @property
    def epochs(self):
        return self.decay_after + self.extra_epochs

    def lr_at(self, epoch):
        return self.lr0 if epoch < self.decay_after else self.lr0 * self.decay_factor

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValidationError(f"unknown train config fields: {sorted(extra)}")
        return cls(**d)


@dataclass
class TrainingSet:
    """In-memory pairs: inputs ``[N, C, H, W]``, targets ``[N, 1, H, W]``, contexts ``[N, 16]``."""

    inputs: np.ndarray
    targets: np.ndarray
    contexts: np.ndarray

    def __post_init__(self):
        n = len(self.inputs)
        if len(self.targets) != n or len(self.contexts) != n:
            raise ValidationError("inputs, targets and contexts must have equal length")
        if n and (self.inputs.ndim != 4 or self.targets.ndim != 4):
            raise ValidationError("inputs and targets must be [N, C, H, W]")

    def __len__(self):
        return len(self.inputs)


def train(dataset, spec, cfg=TrainConfig(), dmp=DMPSpec(), net=None, log=None):
    """Train a CE U-Net; returns ``(net, history)`` with one mean L1 per epoch.

    Raises :class:`DivergenceError` carrying the epoch index on a non-finite loss.
    """
    if len(dataset) == 0:
        raise ValidationError("training set is empty")
    dtype = np.dtype(cfg.dtype)
    if net is None:
        net = CEUNet(spec, dmp, seed=cfg.seed, dtype=dtype)
    adam = AdamConfig(cfg.beta1, cfg.beta2, cfg.eps)
    x_all = np.asarray(dataset.inputs, dtype=dtype)
    y_all = np.asarray(dataset.targets, dtype=dtype)
    c_all = np.asarray(dataset.contexts, dtype=dtype)
    n = len(dataset)
    history = []
    step = net.params.t
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr_at(epoch)
        order = make_rng(cfg.seed, 0x5452, epoch).permutation(n)
        total, count = 0.0, 0
        for lo in range(0, n, cfg.batch_size):
            idx = np.sort(order[lo:lo + cfg.batch_size])
            loss, grad = net.l1_loss_and_grad(x_all[idx], c_all[idx], y_all[idx])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            step += 1
            adam_step(net.params, grad, lr, step, adam)
            total += loss * len(idx)
            count += len(idx)
        history.append(total / count)
        if log is not None:
            log(f"epoch {epoch + 1}/{cfg.epochs} lr={lr:.1e} l1={history[-1]:.5f} "
                f"({time.perf_counter() - t0:.1f}s)")
    return net, history
