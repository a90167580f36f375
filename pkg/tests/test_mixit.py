import itertools

import numpy as np
import pytest

from mixitkit.audio import SourceStack, Waveform
from mixitkit.errors import InvalidInputError
from mixitkit.mixit import enumerate_assignments, mixit_loss, oracle_remix, snr_loss


def naive_snr(t, e):
    # independent straight-line evaluation of the loss formula
    arg = np.sum((t - e) ** 2) + 1e-3 * np.sum(t ** 2)
    return 10.0 * np.log10(max(arg, 1e-30))


def recursive_assignments(m):
    """Independent generator: recurse over per-column choices."""
    if m == 0:
        yield ()
        return
    for rest in recursive_assignments(m - 1):
        for choice in (0, 1):
            yield rest + (choice,)


def exhaustive_oracle(x1, x2, sources):
    best = None
    for top in recursive_assignments(sources.shape[0]):
        top = np.array(top)
        top_mix = (top[:, None] * sources).sum(axis=0)
        bottom_mix = ((1 - top)[:, None] * sources).sum(axis=0)
        loss = naive_snr(x1, top_mix) + naive_snr(x2, bottom_mix)
        if best is None or loss < best[0]:
            best = (loss, top)
    return best


def unit(x):
    return x / np.sqrt(np.sum(x ** 2))


def test_snr_loss_perfect_unit_target():
    t = Waveform(unit(np.random.default_rng(0).standard_normal(256)), 8000)
    assert snr_loss(t, t) == pytest.approx(-30.0, abs=1e-9)


def test_snr_loss_zero_estimate():
    t = Waveform(unit(np.random.default_rng(1).standard_normal(256)), 8000)
    zero = Waveform(np.zeros(256), 8000)
    assert snr_loss(t, zero) == pytest.approx(10 * np.log10(1.001), abs=1e-9)


def test_snr_loss_degenerate_both_zero():
    z = Waveform(np.zeros(16), 8000)
    assert snr_loss(z, z) == pytest.approx(-300.0)


def test_snr_loss_scaling_property():
    rng = np.random.default_rng(2)
    t = Waveform(rng.standard_normal(128), 8000)
    e = Waveform(rng.standard_normal(128), 8000)
    base = snr_loss(t, e)
    for a in (0.5, 2.0, 7.0):
        scaled = snr_loss(Waveform(a * t.samples, 8000), Waveform(a * e.samples, 8000))
        assert scaled - base == pytest.approx(20 * np.log10(a), abs=1e-6)


def test_snr_loss_length_mismatch():
    with pytest.raises(InvalidInputError):
        snr_loss(Waveform(np.zeros(8), 8000), Waveform(np.zeros(9), 8000))


def test_enumerate_counts_and_columns():
    assert len(enumerate_assignments(1)) == 2
    mats = enumerate_assignments(4)
    assert len(mats) == 16
    seen = set()
    for m in mats:
        assert np.all(m.entries.sum(axis=0) == 1)
        seen.add(tuple(m.entries[0]))
    assert len(seen) == 16


def test_enumerate_matches_recursive_generator():
    ours = {tuple(m.entries[0]) for m in enumerate_assignments(6)}
    theirs = {t for t in recursive_assignments(6)}
    assert ours == theirs
    assert len(ours) == 64


def test_enumerate_guard():
    with pytest.raises(InvalidInputError):
        enumerate_assignments(0)
    with pytest.raises(InvalidInputError):
        enumerate_assignments(17)


def test_mixit_recovers_exact_split():
    rng = np.random.default_rng(3)
    x1 = Waveform(unit(rng.standard_normal(512)), 8000)
    x2 = Waveform(unit(rng.standard_normal(512)), 8000)
    stack = SourceStack(np.stack([x1.samples, x2.samples]), 8000)
    res = mixit_loss(x1, x2, stack)
    assert res.loss == pytest.approx(-60.0, abs=1e-9)
    np.testing.assert_array_equal(res.assignment.entries, [[1, 0], [0, 1]])
    # swapped stack gives the permuted assignment at the same loss
    swapped = mixit_loss(x1, x2, SourceStack(np.stack([x2.samples, x1.samples]), 8000))
    assert swapped.loss == pytest.approx(res.loss, abs=1e-9)
    np.testing.assert_array_equal(swapped.assignment.entries, [[0, 1], [1, 0]])


def test_mixit_matches_exhaustive_oracle_m4():
    rng = np.random.default_rng(4)
    for _ in range(25):
        x1 = Waveform(rng.standard_normal(200), 8000)
        x2 = Waveform(rng.standard_normal(200), 8000)
        stack = SourceStack(rng.standard_normal((4, 200)), 8000)
        res = mixit_loss(x1, x2, stack)
        oracle_loss, oracle_top = exhaustive_oracle(x1.samples, x2.samples, stack.sources)
        assert res.loss == pytest.approx(oracle_loss, abs=1e-9)
        np.testing.assert_array_equal(res.assignment.entries[0], oracle_top)


def test_mixit_permutation_invariance():
    rng = np.random.default_rng(5)
    x1 = Waveform(rng.standard_normal(100), 8000)
    x2 = Waveform(rng.standard_normal(100), 8000)
    sources = rng.standard_normal((4, 100))
    base = mixit_loss(x1, x2, SourceStack(sources, 8000))
    perm = rng.permutation(4)
    permuted = mixit_loss(x1, x2, SourceStack(sources[perm], 8000))
    assert permuted.loss == pytest.approx(base.loss, abs=1e-9)
    np.testing.assert_array_equal(permuted.assignment.entries[0],
                                  base.assignment.entries[0][perm])


def test_remix_partition_identity():
    rng = np.random.default_rng(6)
    x1 = Waveform(rng.standard_normal(64), 8000)
    x2 = Waveform(rng.standard_normal(64), 8000)
    stack = SourceStack(rng.standard_normal((5, 64)), 8000)
    res = mixit_loss(x1, x2, stack)
    total = stack.sources.sum(axis=0)
    assert np.max(np.abs(res.remix_top.samples + res.remix_bottom.samples - total)) <= 1e-6


def test_oracle_remix_exact_recovery():
    rng = np.random.default_rng(7)
    x1 = Waveform(unit(rng.standard_normal(128)), 8000)
    x2 = Waveform(unit(rng.standard_normal(128)), 8000)
    stack = SourceStack(np.stack([x1.samples, x2.samples]), 8000)
    np.testing.assert_array_equal(oracle_remix(x1, x2, stack).samples, x1.samples)


def test_oracle_remix_empty_top_row():
    # both sources are halves of x2: the oracle assigns everything to the
    # bottom row and the on-screen remix is exactly zero
    rng = np.random.default_rng(8)
    x1 = Waveform(unit(rng.standard_normal(128)), 8000)
    x2 = Waveform(unit(rng.standard_normal(128)), 8000)
    stack = SourceStack(np.stack([x2.samples / 2, x2.samples / 2]), 8000)
    loss, top = exhaustive_oracle(x1.samples, x2.samples, stack.sources)
    np.testing.assert_array_equal(top, [0, 0])
    remix = oracle_remix(x1, x2, stack)
    np.testing.assert_array_equal(remix.samples, np.zeros(128))


def test_oracle_remix_consistency_property():
    from mixitkit.audio import mixture_consistency
    rng = np.random.default_rng(9)
    x1 = Waveform(rng.standard_normal(96), 8000)
    x2 = Waveform(rng.standard_normal(96), 8000)
    mom = Waveform(x1.samples + x2.samples, 8000)
    stack = mixture_consistency(SourceStack(rng.standard_normal((4, 96)), 8000), mom)
    res = mixit_loss(x1, x2, stack)
    reconstructed = res.remix_top.samples + res.remix_bottom.samples
    assert np.max(np.abs(reconstructed - mom.samples)) <= 1e-6


def test_mixit_length_mismatch():
    with pytest.raises(InvalidInputError):
        mixit_loss(Waveform(np.zeros(8), 8000), Waveform(np.zeros(8), 8000),
                   SourceStack(np.zeros((2, 9)), 8000))
