"""Neural-representation reconstruction: hash encoding, MLP, training."""

from .encoding import HashEncodingConfig, encode_backward, encode_forward
from .field import FieldDomain, NeuralField
from .network import Adam, mlp_backward, mlp_forward, mlp_init
from .trainer import (
    RaySet,
    TrainConfig,
    TrainResult,
    fit,
    loss_and_gradients,
    predict_signals,
    train,
)

__all__ = [
    "HashEncodingConfig",
    "encode_forward",
    "encode_backward",
    "FieldDomain",
    "NeuralField",
    "Adam",
    "mlp_init",
    "mlp_forward",
    "mlp_backward",
    "RaySet",
    "TrainConfig",
    "TrainResult",
    "fit",
    "train",
    "predict_signals",
    "loss_and_gradients",
]
