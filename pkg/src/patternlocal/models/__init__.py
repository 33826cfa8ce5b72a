"""Classifiers with a uniform score-and-gradient interface."""
from .analytic import LinearModel, SmoothXorModel, smooth_xor_classifier, train_lda
from .base import ModelHandle, audit_probes, finite_difference_gradient, gradient_audit
from .checkpoint import load_model, read_manifest, save_model
from .training import (
    QUALIFICATION_ACCURACY,
    CnnConfig,
    MlpConfig,
    NetworkModel,
    TrainReport,
    build_cnn_small,
    build_mlp,
    train_cnn_small,
    train_mlp,
)

__all__ = [
    "QUALIFICATION_ACCURACY",
    "CnnConfig",
    "LinearModel",
    "MlpConfig",
    "ModelHandle",
    "NetworkModel",
    "SmoothXorModel",
    "TrainReport",
    "build_cnn_small",
    "build_mlp",
    "audit_probes",
    "finite_difference_gradient",
    "gradient_audit",
    "load_model",
    "read_manifest",
    "save_model",
    "smooth_xor_classifier",
    "train_cnn_small",
    "train_lda",
    "train_mlp",
]
