import math
import tracemalloc

import numpy as np
import pytest
import scipy.linalg

from ultrasparse.estimator import (
    CirculantEstimate,
    circulant_from_autocovariance,
    estimate_autocovariance,
    estimate_circulant_covariance,
    exact_autocovariance,
    frobenius_gap,
    pair_counts,
    pair_sets,
    running_autocovariance,
    sample_budget,
)
from ultrasparse.rulers import Ruler, RulerParams, ultra_sparse_ruler_type1, union_budget, union_ruler_for_sft
from ultrasparse.sfft import SftConfig, plan_blocks
from ultrasparse.synth import (
    GaussianRulerSampler,
    build_first_column,
    random_on_grid_truth,
    sample_gaussian_on_ruler,
)


def _brute_pair_sets(r):
    d = r.modulus
    out = {}
    for i in r.elements:
        for j in r.elements:
            if i >= j:
                for s in {i - j, (d - (i - j)) % d}:
                    out.setdefault(s, set()).add((i, j))
    return out


def test_pair_sets_small():
    r = Ruler((0, 1), 8)
    ps = pair_sets(r)
    assert ps[0] == [(0, 0), (1, 1)]
    assert ps[1] == [(1, 0)]
    assert ps[7] == [(1, 0)]
    assert set(pair_sets(Ruler((3,), 8))) == {0}


def test_pair_sets_type1_keys():
    r = ultra_sparse_ruler_type1(RulerParams(32, 4, 3, 1))
    assert {0, 3, 6, 9, 29} <= set(pair_sets(r))


def test_pair_counts_match_bruteforce():
    rng = np.random.default_rng(0)
    for d in (7, 8, 32, 33):
        for _ in range(20):
            r = Ruler(tuple(rng.choice(d, size=int(rng.integers(1, d)), replace=False)), d)
            brute = _brute_pair_sets(r)
            counts = pair_counts(r)
            for s in range(d):
                assert counts[s] == len(brute.get(s, ()))
                assert len(pair_sets(r).get(s, [])) == counts[s]


def test_estimate_single_sample_formula():
    r = Ruler((0, 1), 8)
    x = np.array([[2.0, 3.0]])
    tb = estimate_autocovariance([x], r, 1)
    assert np.isclose(tb[1], 6.0) and np.isclose(tb[7], 6.0)
    assert np.isclose(tb[0], (4.0 + 9.0) / 2)
    assert 3 not in tb
    with pytest.raises(KeyError):
        tb[3]


def test_estimate_matches_pair_average():
    rng = np.random.default_rng(1)
    d = 16
    r = Ruler((0, 2, 3, 8, 11), d)
    v = rng.normal(size=len(r))
    pos = dict(zip(r.elements, v))
    tb = estimate_autocovariance([np.tile(v, (4, 1))], r, 4)
    for s, pairs in pair_sets(r).items():
        assert np.isclose(tb[s], np.mean([pos[i] * pos[j] for i, j in pairs]), atol=1e-12)


def test_estimate_rejects_bad_streams():
    r = Ruler((0, 1, 5), 8)
    with pytest.raises(ValueError):
        estimate_autocovariance([np.zeros((2, 2))], r)
    with pytest.raises(ValueError):
        estimate_autocovariance([], r)
    with pytest.raises(ValueError):
        estimate_autocovariance([np.zeros((2, 3))], r, n=3)


def test_running_matches_batch_estimates():
    d = 64
    t = np.zeros(d)
    t[0] = 1.0
    r = Ruler((0, 1, 4, 9, 20), d)
    x = np.concatenate(list(sample_gaussian_on_ruler(t, r, 400, np.random.default_rng(0))))
    run = running_autocovariance(np.split(x, 4), r, [100, 400])
    assert np.allclose(run[0].values, estimate_autocovariance([x[:100]], r).values)
    assert np.allclose(run[1].values, estimate_autocovariance([x], r).values)


def test_identity_covariance_tail():
    d, n = 64, 10_000
    t = np.zeros(d)
    t[0] = 1.0
    r = Ruler((0, 1, 3, 7, 12, 20, 31), d)
    ok = 0
    for seed in range(40):
        tb = estimate_autocovariance(sample_gaussian_on_ruler(t, r, n, np.random.default_rng(seed)), r, n)
        off = tb.values[tb.distances != 0]
        ok += np.all(np.abs(off) <= 5 / math.sqrt(n))
    assert ok >= 38


def test_unbiased():
    d, k, n, trials = 64, 2, 50, 10_000
    gt = random_on_grid_truth(d, k, np.random.default_rng(0))
    t = build_first_column(gt)
    r = Ruler((0, 1, 3, 9, 17), d)
    rng = np.random.default_rng(1)
    x = np.concatenate(list(sample_gaussian_on_ruler(t, r, n * trials, rng, batch_size=n * trials)))
    est = np.array([estimate_autocovariance([b], r).values for b in x.reshape(trials, n, -1)])
    ref = exact_autocovariance(t, r)
    se = est.std(axis=0, ddof=1) / math.sqrt(trials)
    assert np.all(np.abs(est.mean(axis=0) - ref.values) <= 4 * se + 1e-12)


def test_frobenius_identity_dense():
    rng = np.random.default_rng(2)
    d = 128
    for _ in range(20):
        t = rng.normal(size=d)
        t = 0.5 * (t + np.roll(t[::-1], 1))
        z = rng.normal(size=d)
        z = 0.5 * (z + np.roll(z[::-1], 1))
        dense = np.linalg.norm(scipy.linalg.toeplitz(t) - scipy.linalg.toeplitz(z))
        lhs, _ = frobenius_gap(t, z, 4, 0.1)
        assert abs(dense - lhs) <= 1e-9 * dense


def test_frobenius_gap_examples():
    gt = random_on_grid_truth(64, 4, np.random.default_rng(3))
    t = build_first_column(gt)
    lhs, rhs = frobenius_gap(t, t, 4, 0.1)
    assert lhs == 0.0
    # exactly k-sparse: the rank-k tail vanishes and rhs is the epsilon term alone
    assert np.isclose(rhs, 5 * 0.1 * math.sqrt(64) * np.linalg.norm(t))


def test_max_entry_property():
    for seed in range(20):
        gt = random_on_grid_truth(256, 6, np.random.default_rng(seed))
        t = build_first_column(gt)
        assert t[0] >= np.max(np.abs(t)) - 1e-12
        assert math.sqrt(256) * t[0] <= np.linalg.norm(scipy.linalg.toeplitz(t)) + 1e-9


def test_exact_mode_recovers_truth():
    d, k, eps = 512, 6, 0.25
    for seed in range(5):
        rng = np.random.default_rng(seed)
        t = build_first_column(random_on_grid_truth(d, k, rng))
        cfg = SftConfig.default(d, k, eps / math.sqrt(d), seed)
        ruler, _ = union_ruler_for_sft(d, k, cfg.delta, np.random.default_rng(cfg.seed), cfg)
        plan = plan_blocks(d, cfg, np.random.default_rng(cfg.seed))
        est = circulant_from_autocovariance(exact_autocovariance(t, ruler), cfg, plan=plan)
        assert isinstance(est, CirculantEstimate)
        assert np.linalg.norm(est.z - t) <= 1e-6 * np.linalg.norm(t)
        assert len(est.spectrum) <= k


def test_flat_spectrum_identity():
    d, c = 64, 1.7
    t = np.zeros(d)
    t[0] = c
    sampler = GaussianRulerSampler(t, np.random.default_rng(0))
    est = estimate_circulant_covariance(sampler, d, d, 0.5, seed=0, n=20_000)
    target = np.zeros(d)
    target[0] = c
    assert np.linalg.norm(est.z - target) <= 0.1 * c


def test_end_to_end_small_reads_within_budget():
    d, k, eps = 256, 4, 0.25
    t = build_first_column(random_on_grid_truth(d, k, np.random.default_rng(4)))
    sampler = GaussianRulerSampler(t, np.random.default_rng(5))
    est = estimate_circulant_covariance(sampler, d, k, eps, seed=6)
    assert len(sampler.entries_read) <= est.info["budget"]
    assert est.entries_read == len(sampler.entries_read)
    assert est.n_used == sample_budget(est.info["m"], eps)
    lhs, rhs = frobenius_gap(t, est.z, k, eps)
    assert lhs <= rhs
    assert est.imag_residue <= 1e-6 * np.linalg.norm(t)


def test_read_entries_close_to_truth():
    # w agrees with t_bar on every entry the SFT reads and with t elsewhere;
    # with the budgeted n it stays within eps * t_0 of t in most trials
    d, k, eps = 256, 4, 0.25
    cfg = SftConfig.default(d, k, eps / math.sqrt(d), 3)
    ruler, _ = union_ruler_for_sft(d, k, cfg.delta, np.random.default_rng(cfg.seed), cfg)
    read = np.unique(np.concatenate([idx for _, idx in plan_blocks(d, cfg, np.random.default_rng(cfg.seed))]))
    n = sample_budget(len(read), eps)
    ok = 0
    for seed in range(6):
        t = build_first_column(random_on_grid_truth(d, k, np.random.default_rng(seed)))
        tb = estimate_autocovariance(sample_gaussian_on_ruler(t, ruler, n, np.random.default_rng(10 + seed)),
                                     ruler, n)
        assert set(read.tolist()) <= set(tb.distances.tolist())
        w = t.copy()
        w[read] = tb.as_dense()[read]
        ok += np.linalg.norm(w - t) <= eps * t[0]
    assert ok >= 4


def test_sample_budget_formula():
    assert sample_budget(100, 0.5) == math.ceil(4 * 100 * math.sqrt(math.log(100)) / 0.25)


def test_estimator_rejects():
    s = GaussianRulerSampler(np.eye(1, 64)[0], np.random.default_rng(0))
    with pytest.raises(ValueError):
        estimate_circulant_covariance(s, 60, 4, 0.25)
    with pytest.raises(ValueError):
        estimate_circulant_covariance(s, 64, 65, 0.25)


def test_no_dense_allocation_at_large_d():
    # the estimator must never build a d x d matrix; at d = 8192 a float one
    # takes 512 MiB, eight times the allowed peak (small sampler batches
    # keep the caller's own sample buffer out of the measurement)
    d, k = 8192, 2
    rng = np.random.default_rng(1)
    reads = set()

    def white(indices, n):
        reads.update(indices)
        return rng.standard_normal((n, len(indices)))

    tracemalloc.start()
    try:
        est = estimate_circulant_covariance(white, d, k, 0.5, seed=1, n=3000, batch_size=256)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert peak < d * d * 8 / 8
    assert len(reads) <= union_budget(SftConfig.default(d, k, 0.5 / math.sqrt(d), 1))
    assert np.isfinite(est.z).all()
