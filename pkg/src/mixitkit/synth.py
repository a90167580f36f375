"""Synthetic audio-visual clips, mixture-of-mixtures examples, and minibatch
recipes.

Each of C sound classes owns a disjoint frequency band; a source is a tone,
chirp, or narrowband noise in its class band, gated by a random on/off
envelope. On-screen sources drive a class-specific spatial pattern in the
video whose per-frame intensity follows the envelope; off-screen sources
leave the video untouched. All randomness comes from numpy PCG64 generators,
so a seed pins every byte of a dataset.
"""

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import Waveform, read_wav, write_wav
from .avtk import read_avtk, write_avtk
from .errors import ConfigError, DataError, InvalidInputError
from .model.config import VideoFeatures

FAMILIES = ("NOn", "SOff", "LOn", "LOff")
KINDS = tuple(f"{fam}-{var}" for fam in FAMILIES for var in ("single", "MoM"))


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: int = 8000
    clip_seconds: float = 2.0
    num_classes: int = 8
    band_low_hz: float = 300.0
    band_high_fraction: float = 0.9    # of Nyquist
    video_frames: int = 5
    video_grid: int = 8
    video_channels: int = 1
    video_noise: float = 0.1
    envelope_segments: int = 8
    envelope_active_prob: float = 0.6
    ramp_ms: float = 10.0
    on_sources_per_clip: int = 1       # NOn / LOn composition
    off_sources_per_clip: int = 0      # extra off-screen sources in NOn clips
    off_only_sources: int = 1          # sources in off-screen-only clips

    @property
    def clip_samples(self):
        return int(round(self.clip_seconds * self.sample_rate))

    def band_edges(self):
        hi = self.band_high_fraction * self.sample_rate / 2.0
        return np.linspace(self.band_low_hz, hi, self.num_classes + 1)


@dataclass
class AVClip:
    on_sources: list
    off_sources: list
    video: VideoFeatures
    truth: tuple
    class_ids: tuple
    sample_rate: int

    def mixture(self) -> Waveform:
        sources = self.all_sources()
        total = np.zeros(len(sources[0]))
        for src in sources:
            total = total + src.samples
        return Waveform(total, self.sample_rate)

    def all_sources(self):
        return list(self.on_sources) + list(self.off_sources)

    def on_reference(self, num_samples) -> Waveform:
        total = np.zeros(num_samples)
        for src in self.on_sources:
            total = total + src.samples
        return Waveform(total, self.sample_rate)


@dataclass
class MoMExample:
    """One training/eval example. Single examples carry an all-zero x2."""

    kind: str
    x1: Waveform
    x2: Waveform
    video: VideoFeatures
    clean_label: bool
    on_ref: Waveform
    class_ids: tuple = ()
    truth: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown example kind {self.kind!r}")
        if len(self.x1) != len(self.x2):
            raise InvalidInputError("x1 and x2 lengths differ")
        if not self.is_mom and np.any(self.x2.samples != 0.0):
            raise InvalidInputError("single examples must have all-zero x2")

    @property
    def family(self):
        return self.kind.split("-")[0]

    @property
    def is_mom(self):
        return self.kind.endswith("MoM")

    def mixture(self) -> Waveform:
        return Waveform(self.x1.samples + self.x2.samples, self.x1.sample_rate)


@dataclass(frozen=True)
class MinibatchSpec:
    mode: str = "unsupervised"       # or "semi"
    soff_fraction: float = 0.0       # 0 or 0.25
    batch_size: int = 16
    noise_rate: float = 0.0          # NOn clips secretly lacking on-screen sound

    def __post_init__(self):
        if self.mode not in ("unsupervised", "semi"):
            raise ConfigError(f"mode must be unsupervised or semi, got {self.mode!r}")
        if self.soff_fraction not in (0.0, 0.25):
            raise ConfigError(f"soff_fraction must be 0 or 0.25, got {self.soff_fraction}")
        if not 0.0 <= self.noise_rate < 1.0:
            raise ConfigError(f"noise_rate must be in [0, 1), got {self.noise_rate}")

    def kind_counts(self):
        """Exact per-kind counts; raises ConfigError if they are fractional."""
        b = self.batch_size
        soff = self.soff_fraction * b
        # SOff splits evenly into single/MoM; semi also splits the labeled
        # half four ways, so every nonzero fraction needs b divisible by 8
        if soff != int(soff) or int(soff) % 2 != 0:
            raise ConfigError(
                f"soff_fraction {self.soff_fraction} of batch {b} does not give an "
                "even SOff count"
            )
        soff = int(soff)
        counts = {}
        if self.mode == "unsupervised":
            counts["NOn-MoM"] = b - soff
        else:
            if b % 8 != 0:
                raise ConfigError(f"semi batches must be divisible by 8, got {b}")
            counts["NOn-MoM"] = b // 2 if soff == 0 else b // 4
            per = (b - counts["NOn-MoM"] - soff) // 4
            counts["LOn-single"] = per
            counts["LOn-MoM"] = per
            counts["LOff-single"] = per
            counts["LOff-MoM"] = per
        if soff:
            counts["SOff-single"] = soff // 2
            counts["SOff-MoM"] = soff // 2
        return counts


def make_rng(seed):
    """The library-wide PRNG: numpy PCG64 behind a Generator."""
    return np.random.Generator(np.random.PCG64(seed))


def _class_pattern(class_id, grid):
    """Deterministic sparse g x g intensity pattern for one class."""
    rng = np.random.Generator(np.random.PCG64(1000003 + 7919 * class_id))
    values = rng.uniform(0.0, 1.0, size=(grid, grid))
    mask = values > 0.75
    if not mask.any():
        mask.flat[int(values.argmax())] = True
    return mask.astype(np.float64)


def _gated_envelope(rng, cfg: SynthConfig):
    n = cfg.clip_samples
    seg = max(1, n // cfg.envelope_segments)
    gates = rng.random(cfg.envelope_segments) < cfg.envelope_active_prob
    if not gates.any():
        gates[int(rng.integers(cfg.envelope_segments))] = True
    env = np.repeat(gates.astype(np.float64), seg)[:n]
    if env.shape[0] < n:
        env = np.concatenate([env, np.full(n - env.shape[0], env[-1])])
    ramp = max(3, int(round(cfg.ramp_ms * cfg.sample_rate / 1000.0)))
    kernel = np.hanning(ramp)
    kernel /= kernel.sum()
    return np.convolve(env, kernel, mode="same")


def synth_source(rng, class_id, cfg: SynthConfig):
    """A band-limited source for one class plus its activity envelope.

    The carrier is a tone, chirp, or narrowband noise confined to the class
    band (with a margin so envelope sidebands stay inside); peak-normalized
    to 1.
    """
    if not 0 <= class_id < cfg.num_classes:
        raise InvalidInputError(f"class_id {class_id} outside [0, {cfg.num_classes})")
    edges = cfg.band_edges()
    lo, hi = edges[class_id], edges[class_id + 1]
    margin = 0.25 * (hi - lo)
    lo_m, hi_m = lo + margin, hi - margin
    n = cfg.clip_samples
    t = np.arange(n) / cfg.sample_rate
    kind = rng.integers(3)
    if kind == 0:  # tone
        f = rng.uniform(lo_m, hi_m)
        carrier = np.sin(2.0 * np.pi * f * t + rng.uniform(0.0, 2.0 * np.pi))
    elif kind == 1:  # linear chirp inside the band
        f0, f1 = sorted(rng.uniform(lo_m, hi_m, size=2))
        phase = 2.0 * np.pi * (f0 * t + 0.5 * (f1 - f0) * t * t / cfg.clip_seconds)
        carrier = np.sin(phase + rng.uniform(0.0, 2.0 * np.pi))
    else:  # narrowband noise: random sinusoid comb
        freqs = rng.uniform(lo_m, hi_m, size=12)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=12)
        carrier = np.sin(2.0 * np.pi * freqs[None, :] * t[:, None] + phases).sum(axis=1)
        carrier /= np.max(np.abs(carrier))
    env = _gated_envelope(rng, cfg)
    samples = carrier * env
    peak = np.max(np.abs(samples))
    if peak > 0:
        samples = samples / peak
    return Waveform(samples, cfg.sample_rate), env


def _frame_intensities(env, cfg: SynthConfig):
    centers = np.minimum(
        (np.round((np.arange(cfg.video_frames) + 0.5) * len(env) / cfg.video_frames))
        .astype(int), len(env) - 1)
    return env[centers]


def synth_clip(rng, n_on, n_off, cfg: SynthConfig) -> AVClip:
    """A clip with n_on on-screen and n_off off-screen sources.

    Classes are drawn without replacement, so sources occupy disjoint bands.
    The video is Gaussian noise plus, per on-screen source, its class pattern
    scaled by the envelope sampled at frame times.
    """
    if n_on < 0 or n_off < 0 or n_on + n_off == 0:
        raise InvalidInputError(f"need at least one source, got n_on={n_on} n_off={n_off}")
    if n_on + n_off > cfg.num_classes:
        raise InvalidInputError(
            f"{n_on + n_off} sources exceed the {cfg.num_classes} disjoint classes"
        )
    classes = rng.choice(cfg.num_classes, size=n_on + n_off, replace=False)
    g, fv, c = cfg.video_grid, cfg.video_frames, cfg.video_channels
    video = cfg.video_noise * rng.standard_normal((fv, g, g, c))
    on_sources, off_sources = [], []
    for i, class_id in enumerate(classes):
        wav, env = synth_source(rng, int(class_id), cfg)
        if i < n_on:
            on_sources.append(wav)
            intensity = _frame_intensities(env, cfg)
            pattern = _class_pattern(int(class_id), g)
            video = video + (intensity[:, None, None, None]
                             * pattern[None, :, :, None])
        else:
            off_sources.append(wav)
    return AVClip(
        on_sources=on_sources,
        off_sources=off_sources,
        video=VideoFeatures(video),
        truth=tuple([True] * n_on + [False] * n_off),
        class_ids=tuple(int(cid) for cid in classes),
        sample_rate=cfg.sample_rate,
    )


def make_mom(clip: AVClip, other_audio: Waveform, kind, second_audio=None,
             clean_label=True) -> MoMExample:
    """Assemble a MoM or single example of the given kind.

    For NOn/LOn/LOff kinds x1 is the clip's own mixture and ``other_audio``
    becomes x2 (MoM) or is ignored (single). SOff kinds pair the clip's video
    with unrelated audio: x1 = other_audio, and an SOff MoM additionally
    needs ``second_audio`` for x2.
    """
    if kind not in KINDS:
        raise InvalidInputError(f"unknown example kind {kind!r}")
    family = kind.split("-")[0]
    is_mom = kind.endswith("MoM")
    n = len(clip.mixture())
    zeros = Waveform(np.zeros(n), clip.sample_rate)

    if family == "SOff":
        if other_audio is None or len(other_audio) != n:
            raise InvalidInputError("SOff needs unrelated audio matching the clip length")
        x1 = other_audio
        if is_mom:
            if second_audio is None:
                raise InvalidInputError("an SOff MoM needs a second unrelated audio for x2")
            x2 = second_audio
        else:
            x2 = zeros
        on_ref = zeros
        truth = ()
        class_ids = ()
    else:
        x1 = clip.mixture()
        if is_mom:
            if other_audio is None:
                raise InvalidInputError("a MoM example needs other_audio for x2")
            x2 = other_audio
        else:
            x2 = zeros
        on_ref = clip.on_reference(n)
        truth = clip.truth
        class_ids = clip.class_ids
    if len(x2) != n:
        raise InvalidInputError(f"x2 length {len(x2)} != clip length {n}")
    return MoMExample(
        kind=kind, x1=x1, x2=x2, video=clip.video, clean_label=clean_label,
        on_ref=on_ref, class_ids=class_ids, truth=truth,
    )


class SynthPool:
    """On-demand clip factory backing minibatch composition and eval sets."""

    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg

    def on_clip(self, rng) -> AVClip:
        """A clip with on-screen sound (NOn/LOn composition)."""
        return synth_clip(rng, self.cfg.on_sources_per_clip,
                          self.cfg.off_sources_per_clip, self.cfg)

    def off_clip(self, rng) -> AVClip:
        """An off-screen-only clip."""
        return synth_clip(rng, 0, max(1, self.cfg.off_only_sources), self.cfg)

    def random_audio(self, rng) -> Waveform:
        """Audio of a fresh random clip (for x2 and SOff pairing)."""
        return self.on_clip(rng).mixture()


def compose_minibatch(rng, spec: MinibatchSpec, pool: SynthPool):
    """A batch with the exact per-kind counts of the training recipe.

    Counts are deterministic given the spec; clip contents come from ``rng``.
    noise_rate applies only to NOn clips: with that probability a clip is
    generated with no on-screen sound (and flagged clean_label=False).
    """
    counts = spec.kind_counts()
    batch = []
    for kind in ("NOn-MoM", "SOff-single", "SOff-MoM",
                 "LOn-single", "LOn-MoM", "LOff-single", "LOff-MoM"):
        for _ in range(counts.get(kind, 0)):
            family = kind.split("-")[0]
            is_mom = kind.endswith("MoM")
            if family == "NOn":
                noisy = spec.noise_rate > 0 and rng.random() < spec.noise_rate
                clip = pool.off_clip(rng) if noisy else pool.on_clip(rng)
                batch.append(make_mom(clip, pool.random_audio(rng), kind,
                                      clean_label=not noisy))
            elif family == "SOff":
                clip = pool.on_clip(rng)
                batch.append(make_mom(
                    clip, pool.random_audio(rng), kind,
                    second_audio=pool.random_audio(rng) if is_mom else None))
            elif family == "LOn":
                clip = pool.on_clip(rng)
                batch.append(make_mom(clip, pool.random_audio(rng) if is_mom else None, kind))
            else:  # LOff
                clip = pool.off_clip(rng)
                batch.append(make_mom(clip, pool.random_audio(rng) if is_mom else None, kind))
    return batch


def make_eval_sets(rng, cfg: SynthConfig, examples_per_set):
    """The four evaluation sets, keyed on-single / off-single / on-MoM / off-MoM.

    MoM partners are drawn from off-screen-only clips, so the on-screen
    reference of an on-MoM is exactly its x1.
    """
    pool = SynthPool(cfg)
    sets = {"on-single": [], "off-single": [], "on-MoM": [], "off-MoM": []}
    for _ in range(examples_per_set):
        sets["on-single"].append(make_mom(pool.on_clip(rng), None, "LOn-single"))
        sets["off-single"].append(make_mom(pool.off_clip(rng), None, "LOff-single"))
        sets["on-MoM"].append(make_mom(
            pool.on_clip(rng), pool.off_clip(rng).mixture(), "LOn-MoM"))
        sets["off-MoM"].append(make_mom(
            pool.off_clip(rng), pool.off_clip(rng).mixture(), "LOff-MoM"))
    return sets


def export_dataset(out_dir, examples, seed):
    """Write x1/x2 WAVs, the AVTK video tensor, and a JSON sidecar per example,
    plus a dataset manifest with per-kind counts."""
    os.makedirs(out_dir, exist_ok=True)
    counts = {}
    for i, ex in enumerate(examples):
        stem = os.path.join(out_dir, f"ex{i:06d}")
        write_wav(f"{stem}_x1.wav", ex.x1)
        write_wav(f"{stem}_x2.wav", ex.x2)
        write_avtk(f"{stem}_video.avtk", ex.video.frames.astype(np.float32))
        sidecar = {
            "kind": ex.kind,
            "clean_label": bool(ex.clean_label),
            "truth": [bool(b) for b in ex.truth],
            "class_ids": [int(c) for c in ex.class_ids],
            "seed": int(seed),
        }
        with open(f"{stem}.json", "w") as f:
            json.dump(sidecar, f, indent=2, sort_keys=True)
            f.write("\n")
        counts[ex.kind] = counts.get(ex.kind, 0) + 1
    manifest = {"num_examples": len(examples), "seed": int(seed), "kind_counts": counts}
    with open(os.path.join(out_dir, "dataset_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def load_dataset(data_dir):
    """Load exported examples. The on-screen reference is reconstructed from
    the kind (x1 for LOn/NOn kinds that are fully on-screen-only exports are
    not distinguishable, so loaded data is intended for training, where only
    kind, x1, x2, and video matter)."""
    manifest_path = os.path.join(data_dir, "dataset_manifest.json")
    if not os.path.isfile(manifest_path):
        raise DataError(f"{data_dir} has no dataset_manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    examples = []
    for i in range(manifest["num_examples"]):
        stem = os.path.join(data_dir, f"ex{i:06d}")
        with open(f"{stem}.json") as f:
            sidecar = json.load(f)
        x1 = read_wav(f"{stem}_x1.wav")
        x2 = read_wav(f"{stem}_x2.wav")
        video = VideoFeatures(read_avtk(f"{stem}_video.avtk").astype(np.float64))
        kind = sidecar["kind"]
        zeros = Waveform(np.zeros(len(x1)), x1.sample_rate)
        on_ref = x1 if kind.startswith("LOn") else zeros
        if not kind.endswith("MoM"):
            x2 = zeros  # quantization noise must not break the single invariant
        examples.append(MoMExample(
            kind=kind, x1=x1, x2=x2, video=video,
            clean_label=sidecar["clean_label"], on_ref=on_ref,
            class_ids=tuple(sidecar["class_ids"]), truth=tuple(sidecar["truth"]),
        ))
    return examples
