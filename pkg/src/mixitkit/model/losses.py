"""Differentiable loss builders.

Branch selection for the MixIT assignment and the MI/AC minimizations happens
on plain values (reusing the exhaustive searches from the objective modules);
only the winning branch is put on the tape, so parameters off the chosen
branch get exactly zero gradient.
"""

import numpy as np

from .. import autodiff as ad
from ..audio import SourceStack, Waveform
from ..mixit import LOG_ARG_FLOOR, SNR_SOFT_THRESHOLD, mixit_loss

LOG10 = float(np.log(10.0))


def snr_loss_graph(target, estimate):
    """10*log10(||t - t_hat||^2 + 1e-3 ||t||^2) with the estimate on the tape."""
    t = np.asarray(ad.value_of(target))
    err = ad.sub(ad.as_tensor(estimate), ad.constant(t))
    arg = ad.add(ad.reduce_sum(ad.square(err)),
                 SNR_SOFT_THRESHOLD * float(t @ t))
    return ad.mul(ad.log(ad.maximum_const(arg, LOG_ARG_FLOOR)), 10.0 / LOG10)


def mixit_loss_graph(x1: Waveform, x2: Waveform, stack, sample_rate):
    """MixIT separation loss on a stack tensor.

    Returns (loss_tensor, assignment); the assignment is found by the
    exhaustive value-level search and frozen, then the two remix SNR terms
    are built on the tape for that assignment only.
    """
    values = SourceStack(ad.value_of(stack), sample_rate)
    picked = mixit_loss(x1, x2, values)
    top_row = picked.assignment.entries[0].astype(ad.value_of(stack).dtype)
    t = values.num_samples
    top = ad.reshape(ad.matmul(ad.constant(top_row[None, :]), stack), (t,))
    bottom = ad.reshape(
        ad.matmul(ad.constant((1.0 - top_row)[None, :]), stack), (t,))
    loss = ad.add(snr_loss_graph(x1.samples, top), snr_loss_graph(x2.samples, bottom))
    return loss, picked.assignment
