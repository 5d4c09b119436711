"""Model checkpoints as MRV1 files holding the float32 parameter vector."""

import numpy as np

from .. import mrv
from ..errors import ValidationError
from .net import CEUNet, DMPSpec, UNetSpec

KIND = "ceunet-checkpoint"


def save_checkpoint(path, net, train_cfg=None, epoch=None, history=()):
    meta = {
        "kind": KIND,
        "spec": net.spec.to_dict(),
        "dmp": net.dmp.to_dict(),
        "train": train_cfg.to_dict() if train_cfg is not None else None,
        "epoch": epoch,
        "history": [float(h) for h in history],
        "layout": [[name, list(shape)] for name, shape in net.params.layout],
    }
    return mrv.write(path, net.params.flat.astype(np.float32), meta=meta, axes=["param"], dtype="f32")


def load_checkpoint(path, dtype=np.float32):
    """Return ``(net, meta)``."""
    flat, header = mrv.read(path)
    meta = header["meta"]
    if meta.get("kind") != KIND:
        raise ValidationError(f"{path}: not a CE U-Net checkpoint")
    net = CEUNet(UNetSpec(**meta["spec"]), DMPSpec(**meta["dmp"]), seed=0, dtype=dtype)
    layout = [(name, tuple(shape)) for name, shape in meta["layout"]]
    if layout != net.params.layout or flat.shape != (net.params.size,):
        raise ValidationError(f"{path}: parameter layout does not match the network spec")
    net.params.flat[:] = flat
    return net, meta
