"""On-screen classifier head and the three classification losses.

The losses come in three flavors over binary labels y and probabilities
y_hat (natural log throughout):

  exact: standard binary cross entropy summed over sources
  mi:    multiple-instance; the positive term is minimized over the positive
         set R, all off-screen terms always apply
  ac:    active combinations; minimized over all nonempty subsets of R

Minimum ties are broken toward the lowest index (mi) or lexicographically
smallest subset (ac) so training is deterministic.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import autodiff as ad
from .errors import InvalidInputError
from .mixit import MixingMatrix

PRED_CLAMP_EPS = 1e-7
AC_MAX_POSITIVES = 12


@dataclass
class SourceLabels:
    """Per-source binary labels with the derived positive index set."""

    y: np.ndarray
    positive_set: tuple = field(init=False)

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.y.ndim != 1 or not np.all((self.y == 0) | (self.y == 1)):
            raise InvalidInputError(f"labels must be a 1-D binary vector, got {self.y}")
        self.positive_set = tuple(int(i) for i in np.flatnonzero(self.y))


@dataclass
class SourcePredictions:
    """Per-source probabilities, clamped into [1e-7, 1 - 1e-7]."""

    y_hat: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.y_hat, dtype=np.float64)
        if arr.ndim != 1:
            raise InvalidInputError(f"predictions must be 1-D, got shape {arr.shape}")
        self.y_hat = np.clip(arr, PRED_CLAMP_EPS, 1.0 - PRED_CLAMP_EPS)


@dataclass
class ClassifierParams:
    """Single dense layer + logistic: w is (input_dim, 1), b is (1,)."""

    w: object
    b: object


def init_classifier_params(rng, input_dim):
    bound = 1.0 / np.sqrt(input_dim)
    return ClassifierParams(
        w=rng.uniform(-bound, bound, size=(input_dim, 1)),
        b=rng.uniform(-bound, bound, size=(1,)),
    )


def classifier_forward(z_video_global, z_audio, z_audio_visual, params: ClassifierParams):
    """Probability that one separated source is on-screen.

    Concatenates the three embeddings, applies the dense layer, and squashes
    with the logistic function. Tensor inputs give a Tensor back.
    """
    graph = any(isinstance(x, ad.Tensor)
                for x in (z_video_global, z_audio, z_audio_visual, params.w, params.b))
    dims = sum(ad.value_of(z).shape[0] for z in (z_video_global, z_audio, z_audio_visual))
    w = ad.value_of(params.w)
    if w.shape[0] != dims:
        raise InvalidInputError(f"classifier expects {w.shape[0]} inputs, got {dims}")
    feat = ad.concat([ad.as_tensor(z_video_global), ad.as_tensor(z_audio),
                      ad.as_tensor(z_audio_visual)], axis=0)
    logit = ad.add(ad.matmul(ad.reshape(feat, (1, dims)), ad.as_tensor(params.w)),
                   ad.as_tensor(params.b))
    prob = ad.reshape(ad.sigmoid(logit), (1,))
    return prob if graph else float(prob.value[0])


def labels_from_assignment(assignment: MixingMatrix) -> SourceLabels:
    """Noisy labels from a MixIT assignment: the top (on-screen) row."""
    return SourceLabels(assignment.top_row())


def _log(x):
    return ad.log(ad.as_tensor(x))


def _pick(y_hat, index):
    return ad.slice_axis(ad.as_tensor(y_hat), 0, index, index + 1)


def _scalar(t):
    return ad.reshape(t, ())


def exact_ce_terms(y, y_hat):
    """Graph-or-value BCE: sum_m -y log(p) - (1-y) log(1-p)."""
    y = np.asarray(y, dtype=np.float64)
    p = ad.as_tensor(y_hat)
    pos = ad.mul(ad.log(p), y)
    neg = ad.mul(ad.log(ad.sub(1.0, p)), 1.0 - y)
    return _scalar(ad.mul(ad.reduce_sum(ad.add(pos, neg)), -1.0))


def mi_ce_terms(y, y_hat):
    """Multiple-instance CE on raw vectors; falls back to exact when R is empty."""
    y = np.asarray(y, dtype=np.int64)
    positives = [int(i) for i in np.flatnonzero(y)]
    if not positives:
        return exact_ce_terms(np.zeros_like(y), y_hat)
    p_val = ad.value_of(y_hat)
    off = [m for m in range(len(y)) if m not in positives]
    off_term_val = -sum(np.log(1.0 - p_val[m]) for m in off)
    best = min(positives, key=lambda m: (-np.log(p_val[m]) + off_term_val, m))
    p = ad.as_tensor(y_hat)
    total = ad.mul(_scalar(_log(_pick(p, best))), -1.0)
    for m in off:
        total = ad.sub(total, _scalar(_log(ad.sub(1.0, _pick(p, m)))))
    return total


def ac_ce_terms(y, y_hat):
    """Active-combinations CE: min over nonempty subsets of the positive set."""
    y = np.asarray(y, dtype=np.int64)
    positives = [int(i) for i in np.flatnonzero(y)]
    if not positives:
        return exact_ce_terms(np.zeros_like(y), y_hat)
    if len(positives) > AC_MAX_POSITIVES:
        raise InvalidInputError(
            f"{len(positives)} positives exceeds the 2^{AC_MAX_POSITIVES} enumeration guard"
        )
    p_val = ad.value_of(y_hat)
    m_all = range(len(y))

    def subset_value(subset):
        inside = set(subset)
        val = -sum(np.log(p_val[m]) for m in inside)
        val -= sum(np.log(1.0 - p_val[m]) for m in m_all if m not in inside)
        return val

    subsets = []
    for size in range(1, len(positives) + 1):
        subsets.extend(combinations(positives, size))
    subsets.sort()  # lexicographic tie-break order
    best = min(subsets, key=lambda s: (subset_value(s), s))
    inside = set(best)
    p = ad.as_tensor(y_hat)
    total = ad.constant(0.0)
    for m in m_all:
        if m in inside:
            total = ad.sub(total, _scalar(_log(_pick(p, m))))
        else:
            total = ad.sub(total, _scalar(_log(ad.sub(1.0, _pick(p, m)))))
    return total


def _as_loss(labels, preds, builder):
    if len(labels.y) != len(preds.y_hat):
        raise InvalidInputError(
            f"length mismatch: {len(labels.y)} labels, {len(preds.y_hat)} predictions"
        )
    return float(builder(labels.y, preds.y_hat).value)


def exact_ce(labels: SourceLabels, preds: SourcePredictions) -> float:
    return _as_loss(labels, preds, exact_ce_terms)


def mi_ce(labels: SourceLabels, preds: SourcePredictions) -> float:
    return _as_loss(labels, preds, mi_ce_terms)


def ac_ce(labels: SourceLabels, preds: SourcePredictions) -> float:
    return _as_loss(labels, preds, ac_ce_terms)
