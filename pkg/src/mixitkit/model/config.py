"""Network configurations and the video feature container."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, InvalidInputError


@dataclass(frozen=True)
class SeparatorConfig:
    """Dilated temporal convolutional masking separator.

    The encoder is a strided conv (kernel must be a multiple of the stride;
    inputs must be a multiple of the stride long). Each block runs
    dense -> PReLU -> instance norm -> dilated depthwise conv -> PReLU ->
    instance norm -> dense, with a residual add, and skip-residual sums feed
    later blocks per ``skip_connections``. Block i uses dilation
    dilation_base ** (i mod 8). A sigmoid mask head produces M masks over the
    encoder channels, and a shared transposed-conv decoder returns to the
    time domain, followed by the mixture-consistency projection.
    """

    num_sources: int = 4
    encoder_filters: int = 32
    encoder_kernel: int = 16
    encoder_stride: int = 8
    num_blocks: int = 4
    bottleneck_dim: int = 16
    hidden_dim: int = 32
    dilation_base: int = 2
    condition_on_video: bool = True
    cond_dim: int = 8
    skip_connections: tuple = ((0, 2),)

    def __post_init__(self):
        if self.num_sources < 2:
            raise ConfigError(f"num_sources must be >= 2, got {self.num_sources}")
        if self.num_blocks < 1:
            raise ConfigError(f"num_blocks must be >= 1, got {self.num_blocks}")
        if self.encoder_kernel % self.encoder_stride != 0:
            raise ConfigError(
                f"encoder_kernel {self.encoder_kernel} must be a multiple of "
                f"encoder_stride {self.encoder_stride}"
            )
        for src, dst in self.skip_connections:
            if not (0 <= src < dst < self.num_blocks):
                raise ConfigError(f"bad skip connection {src}->{dst} for {self.num_blocks} blocks")

    def dilation(self, block_index):
        return self.dilation_base ** (block_index % 8)


def paper_scale_separator_config(num_sources=4, condition_on_video=False):
    """The full-scale structure: 256-filter encoder (kernel 40, stride 20),
    32 blocks of width 512 over a 256-dim bottleneck, skip connections
    0->8, 0->16, 0->24, 8->16, 8->24, 16->24."""
    return SeparatorConfig(
        num_sources=num_sources,
        encoder_filters=256,
        encoder_kernel=40,
        encoder_stride=20,
        num_blocks=32,
        bottleneck_dim=256,
        hidden_dim=512,
        dilation_base=2,
        condition_on_video=condition_on_video,
        skip_connections=((0, 8), (0, 16), (0, 24), (8, 16), (8, 24), (16, 24)),
    )


@dataclass(frozen=True)
class EmbedderConfig:
    """Toy audio/video embedding networks sharing the embedding width N.

    The audio network maps each log-mel segment to one N-dim row; the video
    network maps each frame to an N-dim row plus a grid of local embeddings
    (one local_dim row per spatial cell per frame).
    """

    embed_dim: int = 16
    mel_bands: int = 16
    window_ms: float = 25.0
    hop_ms: float = 10.0
    segment_windows: int = 32
    segment_hop: int = 16
    audio_channels: tuple = (8, 16)
    video_grid: int = 8
    video_channels_in: int = 1
    video_conv_channels: int = 8
    video_frame_channels: int = 16
    local_dim: int = 16
    attention_hidden: int = 16

    def __post_init__(self):
        if self.video_grid < 2:
            raise ConfigError(f"video_grid must be >= 2, got {self.video_grid}")
        if len(self.audio_channels) != 2:
            raise ConfigError("audio_channels must list exactly two conv widths")


@dataclass
class VideoFeatures:
    """frames: (F_v, g, g, c) float tensor standing in for RGB video frames."""

    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 4:
            raise InvalidInputError(f"video frames must be 4-D, got shape {self.frames.shape}")
        if self.frames.shape[1] != self.frames.shape[2]:
            raise InvalidInputError(f"video grid must be square, got {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)):
            raise InvalidInputError("video frames contain non-finite values")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def grid_size(self):
        return self.frames.shape[1]
