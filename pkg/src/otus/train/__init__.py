"""OT-cycleGAN objective, supervised baseline and training loops."""

from .config import TrainConfig, supervised_defaults
from .losses import cycle_loss, cycle_terms, lsgan_disc_loss, lsgan_gen_loss
from .loop import (
    LossReport,
    TrainResult,
    build_networks,
    enhance,
    from_net,
    read_losses,
    smoothed,
    to_net,
    train_supervised,
    train_unsupervised,
)
from .optim import Adam

__all__ = [
    "Adam", "LossReport", "TrainConfig", "TrainResult", "build_networks", "cycle_loss",
    "cycle_terms", "enhance", "from_net", "lsgan_disc_loss", "lsgan_gen_loss", "read_losses",
    "smoothed", "supervised_defaults", "to_net", "train_supervised", "train_unsupervised",
]
