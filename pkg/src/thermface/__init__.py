"""Thermal face recognition with log-polar registration, line features, PCA and an MLP."""

from .classifier import MlpConfig, MlpModel, forward, init_model, predict_topk, tansig, train, train_epoch
from .config import PipelineConfig
from .eigenspace import Eigenspace, fit_eigenspace, flatten, project, reconstruct
from .evaluation import assign_folds, compare_transforms, make_pipeline, run_cross_validation
from .imaging import DatasetManifest, load_image, load_manifest, save_image, synth_face
from .linefeat import MaskBank, convolve3, default_mask_bank, extract_line_image, load_mask_bank
from .polar import PolarConfig, best_column_shift, center_and_radius, log_polar_transform

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "Eigenspace",
    "MaskBank",
    "MlpConfig",
    "MlpModel",
    "PipelineConfig",
    "PolarConfig",
    "assign_folds",
    "best_column_shift",
    "center_and_radius",
    "compare_transforms",
    "convolve3",
    "default_mask_bank",
    "extract_line_image",
    "fit_eigenspace",
    "flatten",
    "forward",
    "init_model",
    "load_image",
    "load_manifest",
    "load_mask_bank",
    "log_polar_transform",
    "make_pipeline",
    "predict_topk",
    "project",
    "reconstruct",
    "run_cross_validation",
    "save_image",
    "synth_face",
    "tansig",
    "train",
    "train_epoch",
]
