"""Run configuration: a strict JSON document mapped onto the library configs.

Unknown keys are rejected with a JSON-pointer path to the offending key, and
relative paths resolve against the config file's directory.
"""

import copy
import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .model.config import EmbedderConfig, SeparatorConfig
from .synth import MinibatchSpec, SynthConfig

DEFAULTS = {
    "seed": 0,
    "out_dir": "run_out",
    "audio": {
        "sample_rate": 8000,
        "clip_seconds": 2.0,
    },
    "data": {
        "num_classes": 8,
        "video_frames": 5,
        "video_grid": 8,
        "video_channels": 1,
        "video_noise": 0.1,
        "on_sources_per_clip": 1,
        "off_sources_per_clip": 0,
        "off_only_sources": 1,
    },
    "separator": {
        "num_sources": 4,
        "encoder_filters": 32,
        "encoder_kernel": 16,
        "encoder_stride": 8,
        "num_blocks": 4,
        "bottleneck_dim": 16,
        "hidden_dim": 32,
        "dilation_base": 2,
        "cond_dim": 8,
        "skip_connections": [[0, 2]],
    },
    "embedder": {
        "embed_dim": 16,
        "mel_bands": 16,
        "window_ms": 25.0,
        "hop_ms": 10.0,
        "segment_windows": 32,
        "segment_hop": 16,
        "audio_channels": [8, 16],
        "video_conv_channels": 8,
        "video_frame_channels": 16,
        "local_dim": 16,
        "attention_hidden": 16,
    },
    "batch": {
        "mode": "unsupervised",
        "soff_fraction": 0.0,
        "batch_size": 16,
        "noise_rate": 0.0,
    },
    "training": {
        "steps": 100,
        "learning_rate": 1e-3,
        "checkpoint_interval": 50,
        "loss": "exact",
        "loss_weight": 1.0,
        "joint_flow": False,
        "dtype": "float64",
        "dataset_dir": None,
    },
    "eval": {
        "examples_per_set": 50,
    },
    "ablations": {
        "mean_pool": False,
        "no_video_conditioning": False,
        "num_sources": None,
    },
}


def _merge(defaults, overrides, pointer=""):
    merged = copy.deepcopy(defaults)
    for key, value in overrides.items():
        here = f"{pointer}/{key}"
        if key not in defaults:
            raise ConfigError(f"unknown config key at {here}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"expected an object at {here}")
            merged[key] = _merge(defaults[key], value, here)
        else:
            merged[key] = value
    return merged


@dataclass
class RunConfig:
    raw: dict
    base_dir: str

    @property
    def seed(self):
        return int(self.raw["seed"])

    @property
    def out_dir(self):
        return self.resolve_path(self.raw["out_dir"])

    def resolve_path(self, path):
        if path is None:
            return None
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    def synth_config(self) -> SynthConfig:
        audio, data = self.raw["audio"], self.raw["data"]
        return SynthConfig(
            sample_rate=int(audio["sample_rate"]),
            clip_seconds=float(audio["clip_seconds"]),
            num_classes=int(data["num_classes"]),
            video_frames=int(data["video_frames"]),
            video_grid=int(data["video_grid"]),
            video_channels=int(data["video_channels"]),
            video_noise=float(data["video_noise"]),
            on_sources_per_clip=int(data["on_sources_per_clip"]),
            off_sources_per_clip=int(data["off_sources_per_clip"]),
            off_only_sources=int(data["off_only_sources"]),
        )

    def separator_config(self) -> SeparatorConfig:
        s = self.raw["separator"]
        num_sources = self.raw["ablations"]["num_sources"] or int(s["num_sources"])
        return SeparatorConfig(
            num_sources=int(num_sources),
            encoder_filters=int(s["encoder_filters"]),
            encoder_kernel=int(s["encoder_kernel"]),
            encoder_stride=int(s["encoder_stride"]),
            num_blocks=int(s["num_blocks"]),
            bottleneck_dim=int(s["bottleneck_dim"]),
            hidden_dim=int(s["hidden_dim"]),
            dilation_base=int(s["dilation_base"]),
            condition_on_video=not self.raw["ablations"]["no_video_conditioning"],
            cond_dim=int(s["cond_dim"]),
            skip_connections=tuple((int(a), int(b)) for a, b in s["skip_connections"]),
        )

    def embedder_config(self) -> EmbedderConfig:
        e = self.raw["embedder"]
        return EmbedderConfig(
            embed_dim=int(e["embed_dim"]),
            mel_bands=int(e["mel_bands"]),
            window_ms=float(e["window_ms"]),
            hop_ms=float(e["hop_ms"]),
            segment_windows=int(e["segment_windows"]),
            segment_hop=int(e["segment_hop"]),
            audio_channels=tuple(int(c) for c in e["audio_channels"]),
            video_grid=int(self.raw["data"]["video_grid"]),
            video_channels_in=int(self.raw["data"]["video_channels"]),
            video_conv_channels=int(e["video_conv_channels"]),
            video_frame_channels=int(e["video_frame_channels"]),
            local_dim=int(e["local_dim"]),
            attention_hidden=int(e["attention_hidden"]),
        )

    def minibatch_spec(self) -> MinibatchSpec:
        b = self.raw["batch"]
        return MinibatchSpec(
            mode=b["mode"],
            soff_fraction=float(b["soff_fraction"]),
            batch_size=int(b["batch_size"]),
            noise_rate=float(b["noise_rate"]),
        )

    @property
    def training(self):
        return self.raw["training"]

    @property
    def ablations(self):
        return self.raw["ablations"]

    def dtype(self):
        name = self.training["dtype"]
        if name not in ("float64", "float32"):
            raise ConfigError(f"unknown dtype at /training/dtype: {name!r}")
        return np.float64 if name == "float64" else np.float32

    def loss_kind(self):
        kind = self.training["loss"]
        if kind not in ("exact", "mi", "ac"):
            raise ConfigError(f"loss at /training/loss must be exact|mi|ac, got {kind!r}")
        return kind

    def echo(self):
        """The fully resolved document (for manifests)."""
        return copy.deepcopy(self.raw)


def config_from_dict(overrides, base_dir=".") -> RunConfig:
    if not isinstance(overrides, dict):
        raise ConfigError("config root must be a JSON object")
    return RunConfig(raw=_merge(DEFAULTS, overrides), base_dir=base_dir)


def load_config(path=None, seed=None, out_dir=None) -> RunConfig:
    """Load a config file (or pure defaults) with optional CLI overrides."""
    overrides = {}
    base_dir = "."
    if path is not None:
        with open(path) as f:
            try:
                overrides = json.load(f)
            except json.JSONDecodeError as err:
                raise ConfigError(f"{path}: not valid JSON ({err})") from err
        base_dir = os.path.dirname(os.path.abspath(path))
    cfg = config_from_dict(overrides, base_dir)
    if seed is not None:
        cfg.raw["seed"] = int(seed)
    if out_dir is not None:
        cfg.raw["out_dir"] = out_dir
        cfg.base_dir = "."
    # validate the pieces eagerly so errors carry config context
    cfg.synth_config()
    cfg.separator_config()
    cfg.embedder_config()
    cfg.minibatch_spec()
    cfg.dtype()
    cfg.loss_kind()
    if int(cfg.training["steps"]) < 0:
        raise ConfigError(f"/training/steps must be >= 0, got {cfg.training['steps']}")
    if int(cfg.raw["eval"]["examples_per_set"]) < 0:
        raise ConfigError("/eval/examples_per_set must be >= 0")
    return cfg
