from .model import (
    ModelParams,
    backward,
    backward_features,
    constant_velocity_predict,
    forward,
    forward_features,
    init_params,
    pool_rasters,
)
from .optim import AdamState, adamw_step, cosine_warm_restart_lr
from .training import (
    CachedDataset,
    TrainingResult,
    load_cached_dataset,
    load_checkpoint,
    predict_scene,
    save_checkpoint,
    train,
    train_on_dataset,
    write_log_csv,
)

__all__ = [
    "ModelParams",
    "init_params",
    "pool_rasters",
    "forward",
    "forward_features",
    "backward",
    "backward_features",
    "constant_velocity_predict",
    "AdamState",
    "adamw_step",
    "cosine_warm_restart_lr",
    "CachedDataset",
    "TrainingResult",
    "load_cached_dataset",
    "train_on_dataset",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "write_log_csv",
    "predict_scene",
]
