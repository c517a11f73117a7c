"""Semi-supervised variational autoencoder with an explicit label-noise channel."""

from .errors import MVaeError
from .model import ModelDims, MVaeModel, build_model, predict, predict_labels, predict_proba
from .noise import NoiseMatrix, f_weight, new_noise_matrix, per_class_flip, uniform_noise
from .objective import elbo_terms, m1m2_objective
from .trainer import TrainConfig, train

__all__ = [
    "MVaeError", "ModelDims", "MVaeModel", "build_model", "predict", "predict_labels",
    "predict_proba", "NoiseMatrix", "f_weight", "new_noise_matrix", "per_class_flip",
    "uniform_noise", "elbo_terms", "m1m2_objective", "TrainConfig", "train",
]
__version__ = "0.1.0"
