"""Mixture invariant training objective.

The separation loss assigns each of M estimated sources to one of two
reference mixtures via a 2 x M binary matrix with one-hot columns, and takes
the assignment minimizing the summed SNR losses. The search is exhaustive
over all 2^M assignments (guarded at M <= 16), enumerated in ascending order
of the row-1 membership bitmask; ties go to the earliest assignment.
"""

from dataclasses import dataclass

import numpy as np

from .audio import SourceStack, Waveform
from .errors import InvalidInputError

SNR_SOFT_THRESHOLD = 1e-3   # tau in ||t - t_hat||^2 + tau * ||t||^2
LOG_ARG_FLOOR = 1e-30       # keeps 10*log10 finite (-300 dB) for zero signals
MAX_SOURCES = 16


@dataclass
class MixingMatrix:
    """2 x M binary assignment matrix; every column sums to exactly 1."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.int64)
        if self.entries.ndim != 2 or self.entries.shape[0] != 2:
            raise InvalidInputError(f"mixing matrix must be 2 x M, got {self.entries.shape}")
        if not np.all((self.entries == 0) | (self.entries == 1)):
            raise InvalidInputError("mixing matrix entries must be binary")
        if not np.all(self.entries.sum(axis=0) == 1):
            raise InvalidInputError("every mixing matrix column must sum to 1")

    @property
    def num_sources(self):
        return self.entries.shape[1]

    def top_row(self):
        return self.entries[0].copy()


@dataclass
class MixitResult:
    loss: float
    assignment: MixingMatrix
    remix_top: Waveform
    remix_bottom: Waveform


def snr_loss(target: Waveform, estimate: Waveform) -> float:
    """Soft-thresholded negative SNR: 10*log10(||t - t_hat||^2 + 1e-3 * ||t||^2).

    Lower is better. The threshold term caps the attainable loss at roughly
    -30 dB relative to the target power; a floor of 1e-30 on the log argument
    keeps the all-zero corner case finite at -300.
    """
    if len(target) != len(estimate):
        raise InvalidInputError(f"length mismatch: target {len(target)}, estimate {len(estimate)}")
    err = target.samples - estimate.samples
    arg = float(err @ err) + SNR_SOFT_THRESHOLD * float(target.samples @ target.samples)
    return float(10.0 * np.log10(max(arg, LOG_ARG_FLOOR)))


def enumerate_assignments(num_sources):
    """All 2 x M one-hot-column binary matrices, in bitmask order.

    Bit m of the mask set means source m belongs to the top row. Masks run
    from 0 to 2^M - 1, so the list has exactly 2^M entries.
    """
    if not 1 <= num_sources <= MAX_SOURCES:
        raise InvalidInputError(f"num_sources must be in [1, {MAX_SOURCES}], got {num_sources}")
    out = []
    for mask in range(1 << num_sources):
        top = np.array([(mask >> m) & 1 for m in range(num_sources)], dtype=np.int64)
        out.append(MixingMatrix(np.stack([top, 1 - top])))
    return out


def _assignment_table(num_sources):
    masks = np.arange(1 << num_sources)[:, None]
    return ((masks >> np.arange(num_sources)[None, :]) & 1).astype(np.float64)


def mixit_loss(x1: Waveform, x2: Waveform, stack: SourceStack) -> MixitResult:
    """Exhaustive MixIT loss: best assignment of sources to the two references."""
    m = stack.num_sources
    if not 1 <= m <= MAX_SOURCES:
        raise InvalidInputError(f"stack has {m} sources; supported range is [1, {MAX_SOURCES}]")
    if len(x1) != len(x2) or len(x1) != stack.num_samples:
        raise InvalidInputError(
            f"length mismatch: x1 {len(x1)}, x2 {len(x2)}, stack {stack.num_samples}"
        )
    table = _assignment_table(m)                      # 2^M x M membership of the top row
    total = stack.sources.sum(axis=0)
    t1 = SNR_SOFT_THRESHOLD * float(x1.samples @ x1.samples)
    t2 = SNR_SOFT_THRESHOLD * float(x2.samples @ x2.samples)
    best_loss = np.inf
    best_index = 0
    chunk = 1024  # bounds the candidate remix buffer for large M
    for start in range(0, table.shape[0], chunk):
        rows = table[start:start + chunk]
        tops = rows @ stack.sources                   # candidate top remixes
        bottoms = total[None, :] - tops
        e1 = np.square(tops - x1.samples[None, :]).sum(axis=1) + t1
        e2 = np.square(bottoms - x2.samples[None, :]).sum(axis=1) + t2
        losses = 10.0 * (
            np.log10(np.maximum(e1, LOG_ARG_FLOOR)) + np.log10(np.maximum(e2, LOG_ARG_FLOOR))
        )
        i = int(np.argmin(losses))  # first minimum: bitmask order within the chunk
        if losses[i] < best_loss:
            best_loss = float(losses[i])
            best_index = start + i
    top_row = table[best_index].astype(np.int64)
    best_top = top_row.astype(np.float64) @ stack.sources
    assignment = MixingMatrix(np.stack([top_row, 1 - top_row]))
    return MixitResult(
        loss=best_loss,
        assignment=assignment,
        remix_top=Waveform(best_top, stack.sample_rate),
        remix_bottom=Waveform(total - best_top, stack.sample_rate),
    )


def oracle_remix(x1: Waveform, x2: Waveform, stack: SourceStack) -> Waveform:
    """Top remix under the optimal assignment, with x1 as the on-screen reference."""
    return mixit_loss(x1, x2, stack).remix_top
