import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import dft_oracle
from ultrasparse.hashing import HashParams
from ultrasparse.sfft import (
    BlockSnapshot,
    MaskedVectorAccessor,
    MissingReadError,
    SftConfig,
    SparseSpectrum,
    dense_fft,
    dense_ifft,
    flat_window,
    hash_to_bins,
    identify_and_estimate,
    plan_blocks,
    sft,
    window_response,
)


def _sparse_signal(d, k, rng, real=False):
    if real:
        half = rng.choice(np.arange(1, d // 2), size=k // 2, replace=False)
        idx = np.concatenate([half, d - half])
        amps = rng.uniform(0.5, 1.5, size=k // 2) * np.exp(2j * np.pi * rng.random(k // 2))
        amps = np.concatenate([amps, np.conj(amps)])
    else:
        idx = rng.choice(d, size=k, replace=False)
        amps = rng.uniform(0.5, 1.5, size=k) * np.exp(2j * np.pi * rng.random(k))
    x_hat = np.zeros(d, dtype=complex)
    x_hat[idx] = amps
    x = dense_ifft(x_hat)
    return (x.real if real else x), x_hat


def test_dense_fft_impulse_and_constant():
    d = 16
    e0 = np.zeros(d)
    e0[0] = 1
    assert np.allclose(dense_fft(e0), np.full(d, 1 / math.sqrt(d)))
    expect = np.zeros(d)
    expect[0] = math.sqrt(d)
    assert np.allclose(dense_fft(np.ones(d)), expect)


@pytest.mark.parametrize("d", [16, 64, 256])
def test_dense_fft_matches_quadratic_oracle(d):
    rng = np.random.default_rng(d)
    x = rng.normal(size=d) + 1j * rng.normal(size=d)
    assert np.max(np.abs(dense_fft(x) - dft_oracle(x))) <= 1e-10
    assert np.allclose(dense_ifft(dense_fft(x)), x, atol=1e-12)


def test_dense_fft_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        dense_fft(np.ones(12))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 11), st.integers(0, 2**31 - 1))
def test_parseval(logd, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=2**logd) + 1j * rng.normal(size=2**logd)
    assert abs(np.linalg.norm(dense_fft(x)) - np.linalg.norm(x)) <= 1e-12 * max(1.0, np.linalg.norm(x))


def test_sparse_spectrum_roundtrip():
    d = 32
    s = SparseSpectrum(np.array([5, 1]), np.array([1j, 2.0]), d)
    dense = s.to_dense()
    assert dense[1] == 2.0 and dense[5] == 1j
    assert np.allclose(s.evaluate(np.arange(d)), dense_ifft(dense))
    assert s.sorted().indices.tolist() == [1, 5]


def test_hash_to_bins_zero_and_single_tone():
    assert np.all(hash_to_bins(np.zeros(16), 16) == 0)
    L = bins = 16
    j = 5
    block = np.exp(2j * np.pi * j * np.arange(L) / bins)
    out = np.abs(hash_to_bins(block, bins))
    assert np.argmax(out) == j
    assert np.all(np.delete(out, j) <= 1e-9 * out[j])


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 8), st.integers(0, 4), st.integers(0, 2**31 - 1), st.booleans())
def test_hash_to_bins_energy(logL, logb, seed, windowed):
    L = 2**logL
    bins = 2 ** min(logb, logL)
    rng = np.random.default_rng(seed)
    block = rng.normal(size=L) + 1j * rng.normal(size=L)
    w = flat_window(L, bins, 1024) if windowed else None
    out = hash_to_bins(block, bins, w)
    assert np.sum(np.abs(out) ** 2) <= np.sum(np.abs(block) ** 2) + 1e-9


def test_window_response_matches_direct_fold():
    d, L, bins = 256, 48, 8
    w = flat_window(L, bins, d)
    resp = window_response(w, bins, d)
    for xi in (0, 3, 20, 250):
        tone = np.exp(2j * np.pi * xi * np.arange(L) / d)
        assert np.isclose(hash_to_bins(tone, bins, w)[0], resp[xi], atol=1e-12)


def _snapshots(x, d, cfg):
    plan = plan_blocks(d, cfg, np.random.default_rng(cfg.seed))
    w = flat_window(cfg.block_len, cfg.bins, d)
    resp = window_response(w, cfg.bins, d)
    snaps = []
    for p, idx in plan:
        s = np.arange(cfg.block_len)
        mod = np.exp(-2j * np.pi * ((p.a * p.b % d) * s % d) / d)
        snaps.append(BlockSnapshot(p, hash_to_bins(x[idx] * mod, cfg.bins, w), resp))
    return snaps


def test_identify_single_tone_three_blocks():
    d = 256
    x_hat = np.zeros(d, dtype=complex)
    x_hat[77] = 1.3 - 0.4j
    x = dense_ifft(x_hat)
    cfg = SftConfig(k=1, delta=0.1, num_blocks=3, block_len=64, bins=16, iterations=1, seed=2)
    out = identify_and_estimate(_snapshots(x, d, cfg), cfg, d)
    assert out.indices.tolist() == [77]
    assert abs(out.amplitudes[0] - x_hat[77]) <= 1e-6 * abs(x_hat[77])


def test_identify_two_tones_and_zero():
    d = 256
    x_hat = np.zeros(d, dtype=complex)
    x_hat[[10, 200]] = [1.0, -0.8j]
    cfg = SftConfig(k=2, delta=0.1, num_blocks=5, block_len=96, bins=8, iterations=1, seed=5)
    out = identify_and_estimate(_snapshots(dense_ifft(x_hat), d, cfg), cfg, d)
    assert sorted(out.indices.tolist()) == [10, 200]
    zero = identify_and_estimate(_snapshots(np.zeros(d, dtype=complex), d, cfg), cfg, d, floor=1e-12)
    assert len(zero) == 0


def test_sft_single_tone_amplitude():
    d = 1024
    w, j0 = 0.7 + 0.2j, 333
    x = w * np.exp(2j * np.pi * j0 * np.arange(d) / d)
    out = sft(MaskedVectorAccessor(x), d, SftConfig.default(d, 1, 0.1, seed=1))
    # a tone of amplitude w has unitary spectrum w * sqrt(d)
    assert out.indices.tolist() == [j0]
    assert abs(out.amplitudes[0] - w * math.sqrt(d)) <= 1e-9 * abs(w) * math.sqrt(d)


def test_sft_four_tones_success_rate():
    d, k = 1024, 4
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x, x_hat = _sparse_signal(d, k, rng)
        out = sft(MaskedVectorAccessor(x), d, SftConfig.default(d, k, 0.1, seed=seed))
        hits += set(out.indices.tolist()) == set(np.flatnonzero(x_hat).tolist())
    assert hits >= 67


def test_sft_real_input_is_conjugate_paired():
    d, k = 512, 6
    rng = np.random.default_rng(4)
    x, x_hat = _sparse_signal(d, k, rng, real=True)
    x = x + 0.05 * rng.normal(size=d)
    out = sft(MaskedVectorAccessor(x), d, SftConfig.default(d, k, 0.1, seed=9))
    amp = dict(zip(out.indices.tolist(), out.amplitudes))
    for f, v in amp.items():
        assert np.isclose(amp[(d - f) % d], np.conj(v))


def test_sft_reads_only_planned_positions():
    d, k = 512, 4
    cfg = SftConfig.default(d, k, 0.1, seed=11)
    plan = plan_blocks(d, cfg, np.random.default_rng(cfg.seed))
    allowed = set(np.concatenate([idx for _, idx in plan]).tolist())
    x, _ = _sparse_signal(d, k, np.random.default_rng(0))
    acc = MaskedVectorAccessor(x, allowed)
    sft(acc, d, cfg)
    assert acc.reads <= allowed
    # one position fewer and the planned reads fail loudly
    missing = MaskedVectorAccessor(x, allowed - {next(iter(allowed))})
    with pytest.raises(MissingReadError):
        sft(missing, d, cfg)


def test_accessor_single_read_outside_domain():
    acc = MaskedVectorAccessor(np.arange(8.0), {1, 2})
    assert acc.read(0) is None
    assert acc.read(2) == 2.0
    assert acc.reads == {2}


def test_single_block_plan_prefix():
    cfg = SftConfig(k=1, delta=0.5, num_blocks=1, block_len=8, bins=2, iterations=1)
    (p, idx), = plan_blocks(64, cfg, np.random.default_rng(0))
    identity = HashParams(1, 0, 0, 64)
    assert len(idx) == 8
    assert np.array_equal(np.sort((p.a_inv * idx + p.c) % 64), np.arange(8))
    assert identity.a_inv == 1


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 4, 8]),
       st.complex_numbers(min_magnitude=0.1, max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_sft_sparsity_and_scale_equivariance(seed, k, alpha):
    d = 256
    rng = np.random.default_rng(seed)
    x, _ = _sparse_signal(d, k, rng)
    x = x + 0.01 * (rng.normal(size=d) + 1j * rng.normal(size=d))
    cfg = SftConfig.default(d, k, 0.1, seed=seed)
    a = sft(MaskedVectorAccessor(x), d, cfg)
    b = sft(MaskedVectorAccessor(alpha * x), d, cfg)
    assert len(a) <= k
    assert a.indices.tolist() == b.indices.tolist()
    assert np.allclose(b.amplitudes, alpha * a.amplitudes, rtol=1e-9, atol=1e-9 * abs(alpha))


def test_sft_rejects_bad_sizes():
    with pytest.raises(ValueError):
        SftConfig.default(100, 4, 0.1)
    with pytest.raises(ValueError):
        SftConfig.default(64, 65, 0.1)
    with pytest.raises(ValueError):
        sft(MaskedVectorAccessor(np.zeros(16)), 16, SftConfig(k=32, delta=0.1, num_blocks=3, block_len=16,
                                                             bins=4, iterations=1))


def test_sft_zero_input():
    d = 128
    out = sft(MaskedVectorAccessor(np.zeros(d)), d, SftConfig.default(d, 2, 0.1))
    assert len(out) == 0
