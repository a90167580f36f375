"""End-to-end model composition and the backward pass.

model_forward wires the pieces of the pipeline together: separate the input
mixture (optionally video-conditioned), embed each separated source and the
video, pool with attention (or plain means under the ablation flag), retrieve
a per-source visual summary via spatio-temporal attention, and classify each
source as on-screen.

By default the classifier branch sees detached separator outputs, decoupling
separation from on-screen classification; ``joint_flow=True`` lets classifier
gradients reach the separator through a differentiable log-mel front-end.
"""

import numpy as np

from .. import autodiff as ad
from ..attention import AttentionParams, mean_pool, pool_sequence, spatio_temporal_attend
from ..audio import SourceStack, Waveform
from ..classifier import PRED_CLAMP_EPS, ClassifierParams, SourcePredictions, classifier_forward
from ..errors import ConfigError, InvalidInputError, InvalidStateError
from ..features import log_mel, segment_spectrogram
from . import layers
from .config import EmbedderConfig, SeparatorConfig
from .embedders import (_audio_embed_one, log_mel_graph, segment_graph,
                        video_embedder_forward)
from .losses import snr_loss_graph
from .params import ModelParams
from .separator import encoder_frame_count, separator_graph


class GradientTape:
    """Holds the parameter leaves and named graph roots of one forward pass."""

    def __init__(self, params: ModelParams):
        self.leaves = params.make_leaves()
        self.outputs = {}
        self.consumed = False


def attention_params_from(leaves, scope) -> AttentionParams:
    return AttentionParams(
        w_q=leaves[f"{scope}.wq"], b_q=leaves[f"{scope}.bq"],
        w_k=leaves[f"{scope}.wk"], b_k=leaves[f"{scope}.bk"],
        w_v=leaves[f"{scope}.wv"], b_v=leaves[f"{scope}.bv"],
    )


def _mixture_of(example) -> Waveform:
    x1 = example.x1
    if getattr(example, "x2", None) is None:
        return x1
    if len(example.x2) != len(x1):
        raise InvalidInputError("x1 and x2 lengths differ")
    return Waveform(x1.samples + example.x2.samples, x1.sample_rate)


def _audio_rows(leaves, emb_cfg, source, sample_rate, joint_flow):
    """(S, N) embedding rows for one separated source."""
    if joint_flow:
        spec_frames = log_mel_graph(source, sample_rate, emb_cfg.window_ms,
                                    emb_cfg.hop_ms, emb_cfg.mel_bands)
        segments = segment_graph(spec_frames, emb_cfg.segment_windows, emb_cfg.segment_hop)
    else:
        wav = Waveform(ad.value_of(source), sample_rate)
        spec = log_mel(wav, emb_cfg.window_ms, emb_cfg.hop_ms, emb_cfg.mel_bands)
        batch = segment_spectrogram(spec, emb_cfg.segment_windows, emb_cfg.segment_hop)
        segments = [ad.constant(batch.segments[i]) for i in range(batch.num_segments)]
    return ad.concat([_audio_embed_one(leaves, emb_cfg, seg) for seg in segments], axis=0)


def model_forward(params: ModelParams, sep_cfg: SeparatorConfig, emb_cfg: EmbedderConfig,
                  example, tape: GradientTape = None, mean_pooling=False, joint_flow=False):
    """Run the full pipeline on one example (needs .x1, optional .x2, .video).

    Returns (SourceStack, SourcePredictions, aux) where aux carries the
    embeddings and the per-source spatio-temporal attention grids. With a
    tape, graph roots are stored under "stack" and "preds".
    """
    tape_out = tape
    if tape is None:
        tape = GradientTape(params)
    leaves = tape.leaves
    mixture = _mixture_of(example)
    video = example.video

    per_frame, local_grid = video_embedder_forward(None, emb_cfg, video, tape=tape)

    cond = None
    if sep_cfg.condition_on_video:
        frames = encoder_frame_count(sep_cfg, len(mixture))
        cond_rows = layers.dense(leaves, "sep.cond", per_frame)
        cond = layers.nearest_upsample_rows(cond_rows, frames)

    x = ad.constant(np.asarray(mixture.samples, dtype=params.data.dtype))
    stack = separator_graph(leaves, sep_cfg, x, cond)
    t = stack.value.shape[1]

    att_audio = attention_params_from(leaves, "att.audio")
    att_video = attention_params_from(leaves, "att.video")
    att_st = attention_params_from(leaves, "att.st")
    cls_params = ClassifierParams(w=leaves["cls.w"], b=leaves["cls.b"])

    if mean_pooling:
        z_vg = mean_pool(per_frame)
    else:
        z_vg = pool_sequence(per_frame, att_video)

    probs, z_audio, z_av, alphas = [], [], [], []
    for m in range(sep_cfg.num_sources):
        source = ad.reshape(ad.slice_axis(stack, 0, m, m + 1), (t,))
        if not joint_flow:
            source = ad.detach(source)
        rows = _audio_rows(leaves, emb_cfg, source, mixture.sample_rate, joint_flow)
        z_a = mean_pool(rows) if mean_pooling else pool_sequence(rows, att_audio)
        z_st, alpha_grid = spatio_temporal_attend(z_a, local_grid, att_st,
                                                  emb_cfg.video_grid)
        prob = classifier_forward(z_vg, z_a, z_st, cls_params)
        probs.append(prob)
        z_audio.append(z_a)
        z_av.append(z_st)
        alphas.append(alpha_grid)

    preds = ad.clamp(ad.concat(probs, axis=0), PRED_CLAMP_EPS, 1.0 - PRED_CLAMP_EPS)

    tape.outputs["stack"] = stack
    tape.outputs["preds"] = preds
    aux = {
        "video_per_frame": per_frame,
        "video_local": local_grid,
        "z_video_global": z_vg,
        "z_audio": z_audio,
        "z_audio_visual": z_av,
        "attention_grids": [a.value if tape_out is None else a for a in alphas],
    }
    return (SourceStack(stack.value, mixture.sample_rate),
            SourcePredictions(preds.value), aux)


def backward(params: ModelParams, tape: GradientTape, upstream=None, root="loss"):
    """Flat gradient of tape.outputs[root] w.r.t. every named parameter.

    The tape is consumed; a second call raises InvalidStateError. ``upstream``
    seeds the root gradient (defaults to ones).
    """
    if tape.consumed:
        raise InvalidStateError("gradient tape was already consumed by backward")
    if root not in tape.outputs:
        raise InvalidStateError(f"tape has no recorded output {root!r}")
    tape.consumed = True
    grads = ad.backward(tape.outputs[root], seed=upstream)
    named = {name: ad.grad_of(grads, leaf) for name, leaf in tape.leaves.items()}
    return params.gather_flat(named)


def baseline_two_output_loss(params: ModelParams, sep_cfg: SeparatorConfig,
                             emb_cfg: EmbedderConfig, example,
                             on_target: Waveform, off_target: Waveform,
                             tape: GradientTape = None):
    """Supervised two-output baseline: SNR loss of source 0 against the
    on-screen target plus source 1 against the off-screen target.

    Requires an M=2 separator config; there is no classifier in this mode.
    """
    if sep_cfg.num_sources != 2:
        raise ConfigError(f"two-output baseline needs num_sources=2, got {sep_cfg.num_sources}")
    if tape is None:
        tape = GradientTape(params)
    leaves = tape.leaves
    mixture = _mixture_of(example)
    cond = None
    if sep_cfg.condition_on_video:
        per_frame, _ = video_embedder_forward(None, emb_cfg, example.video, tape=tape)
        frames = encoder_frame_count(sep_cfg, len(mixture))
        cond = layers.nearest_upsample_rows(
            layers.dense(leaves, "sep.cond", per_frame), frames)
    x = ad.constant(np.asarray(mixture.samples, dtype=params.data.dtype))
    stack = separator_graph(leaves, sep_cfg, x, cond)
    t = stack.value.shape[1]
    s_on = ad.reshape(ad.slice_axis(stack, 0, 0, 1), (t,))
    s_off = ad.reshape(ad.slice_axis(stack, 0, 1, 2), (t,))
    loss = ad.add(snr_loss_graph(on_target.samples, s_on),
                  snr_loss_graph(off_target.samples, s_off))
    tape.outputs["stack"] = stack
    tape.outputs["loss"] = loss
    return float(loss.value)
