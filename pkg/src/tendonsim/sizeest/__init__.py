"""Object-size estimation from wrap trials."""

from .dataset import (DEFAULT_DIAMETERS, GeneratedDataset, WrapSample, generate_dataset,
                      load_dataset, load_sample, save_dataset, simulate_trial, trial_config)
from .ensemble import (EnsembleModel, Hyperparams, assign_folds, holdout_split, load_model,
                       metrics, predict, predict_traces, save_model, train_ensemble)
from .features import FEATURE_NAMES, FEATURE_VERSION, N_FEATURES, extract_features
from .models import train_boosting, train_ridge, train_svr

__all__ = [
    "DEFAULT_DIAMETERS", "EnsembleModel", "FEATURE_NAMES", "FEATURE_VERSION", "GeneratedDataset",
    "Hyperparams", "N_FEATURES", "WrapSample", "assign_folds", "extract_features",
    "generate_dataset", "holdout_split", "load_dataset", "load_model", "load_sample", "metrics",
    "predict", "predict_traces", "save_dataset", "save_model", "simulate_trial",
    "train_boosting", "train_ensemble", "train_ridge", "train_svr", "trial_config",
]
