from .attention import (
    AttentionParams,
    SkipAttention3d,
    channel_attention,
    skip_attention_forward,
    spatial_attention,
)
from .inference import predict, predict_logits
from .model import NetworkConfig, UNet3d, build_model, count_parameters
from .training import (
    Checkpoint,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    seg_loss,
    snapshot,
    train,
)

__all__ = [
    "AttentionParams",
    "Checkpoint",
    "NetworkConfig",
    "SkipAttention3d",
    "TrainConfig",
    "UNet3d",
    "build_model",
    "channel_attention",
    "count_parameters",
    "load_checkpoint",
    "predict",
    "predict_logits",
    "save_checkpoint",
    "seg_loss",
    "skip_attention_forward",
    "snapshot",
    "spatial_attention",
    "train",
]
