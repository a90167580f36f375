from .config import EmbedderConfig, SeparatorConfig, VideoFeatures, paper_scale_separator_config
from .params import ModelParams, init_model_params
from .separator import encode_mixture, separator_forward
from .embedders import audio_embedder_forward, video_embedder_forward
from .forward import GradientTape, backward, baseline_two_output_loss, model_forward
from .optim import AdamState, adam_step

__all__ = [
    "AdamState",
    "EmbedderConfig",
    "GradientTape",
    "ModelParams",
    "SeparatorConfig",
    "VideoFeatures",
    "adam_step",
    "audio_embedder_forward",
    "backward",
    "baseline_two_output_loss",
    "encode_mixture",
    "init_model_params",
    "model_forward",
    "paper_scale_separator_config",
    "separator_forward",
    "video_embedder_forward",
]
