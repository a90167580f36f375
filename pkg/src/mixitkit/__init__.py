"""mixitkit: unsupervised on-screen sound separation toolkit.

Mixture invariant training objectives with exhaustive assignment search,
attention pooling, a desk-scale trainable separator/classifier with analytic
gradients, a synthetic audio-visual data generator, and separation metrics,
all tied together by a reproducible CLI.
"""

__version__ = "0.1.0"

from .audio import SourceStack, Waveform, mixture_consistency, power_db, read_wav, write_wav
from .features import LogMelSpectrogram, SegmentBatch, log_mel, segment_spectrogram
from .mixit import (MixingMatrix, MixitResult, enumerate_assignments, mixit_loss,
                    oracle_remix, snr_loss)
from .attention import (AttentionParams, attend, init_attention_params, mean_pool,
                        pool_sequence, spatio_temporal_attend)
from .classifier import (SourceLabels, SourcePredictions, ac_ce, classifier_forward,
                         exact_ce, labels_from_assignment, mi_ce)
from .metrics import (EvalRecord, MetricSummary, emit_report, evaluate_model, isr,
                      median_robust, osr, si_snr, weighted_auc_roc)
from .synth import (AVClip, MinibatchSpec, MoMExample, SynthConfig, SynthPool,
                    compose_minibatch, make_mom, make_rng, synth_clip, synth_source)
from .model import (AdamState, EmbedderConfig, GradientTape, ModelParams,
                    SeparatorConfig, VideoFeatures, adam_step, audio_embedder_forward,
                    backward, baseline_two_output_loss, init_model_params,
                    model_forward, separator_forward, video_embedder_forward)
