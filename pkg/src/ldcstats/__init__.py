"""Cross-validated Mahalanobis distances with analytic sampling distributions."""

from .crossnobis import (CovPrediction, DesignCrossnobis, PartitionedPatterns, Run, crossnobis_distances,
                         estimate_sigma_k, predict_v, predict_v_balanced, predict_v_general)
from .inference import NullSpec, z_test
from .kernels import BACKEND
from .model_eval import RepModel, fit_scale_irls, select_model
from .rdm import Dimensions, build_contrast_matrix, squareform, vectorize

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CovPrediction", "DesignCrossnobis", "Dimensions", "NullSpec", "PartitionedPatterns",
    "RepModel", "Run", "build_contrast_matrix", "crossnobis_distances", "estimate_sigma_k",
    "fit_scale_irls", "predict_v", "predict_v_balanced", "predict_v_general", "select_model",
    "squareform", "vectorize", "z_test",
]
