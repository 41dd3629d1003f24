"""Autoencoder, projection estimator, and the training losses."""

from confae.model.autoencoder import (
    ENC_CHANNELS,
    IMAGE_SIZE,
    LEAKY_SLOPE,
    ModelState,
    as_image_batch,
)
from confae.model.checkpoint import load_model, save_model
from confae.model.losses import (
    batch_pearson,
    corr_upper_bound,
    loss_corr,
    loss_joint,
    loss_ncc,
    loss_rec,
)

__all__ = [
    "ENC_CHANNELS", "IMAGE_SIZE", "LEAKY_SLOPE", "ModelState", "as_image_batch",
    "load_model", "save_model", "batch_pearson", "corr_upper_bound",
    "loss_corr", "loss_joint", "loss_ncc", "loss_rec",
]
