"""Tree-ensemble regression, percentile calibration and the model archive."""

from .calibration import CalibrationTable, build_calibration, to_percentile
from .ensemble import RegressorConfig, TrainingResult, TreeEnsemble, train_regressor
from .model import GranularityModel, load_model, predict_raw, save_model

__all__ = [
    "CalibrationTable",
    "GranularityModel",
    "RegressorConfig",
    "TrainingResult",
    "TreeEnsemble",
    "build_calibration",
    "load_model",
    "predict_raw",
    "save_model",
    "to_percentile",
    "train_regressor",
]
