"""Mosaic classifier: layers, network, training loop, and baseline."""

from .baseline import baseline_predict, lumen_width_profile, max_relative_width_drop
from .layers import bce_with_logits, sigmoid
from .network import (DECISION_CLEAR, DECISION_POSITIVE, DECISION_THRESHOLD,
                      INPUT_SCALE, ClassifierError, Model, ModelSpec,
                      ShapeMismatchError, decide, fit_input, load_model, predict,
                      saliency, save_model)
from .training import TrainConfig, fit, manifest_hash, train

__all__ = [
    "DECISION_CLEAR", "DECISION_POSITIVE", "DECISION_THRESHOLD", "INPUT_SCALE",
    "ClassifierError", "Model", "ModelSpec", "ShapeMismatchError", "TrainConfig",
    "baseline_predict", "bce_with_logits", "decide", "fit", "fit_input",
    "load_model", "lumen_width_profile", "manifest_hash", "max_relative_width_drop",
    "predict", "saliency", "save_model", "sigmoid", "train",
]
