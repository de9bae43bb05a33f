"""Circulant covariance estimation from ruler-restricted samples.

Pipeline: average products over the pairs of the union ruler to get the
autocovariance ``t_bar`` at every measured distance, run the SFT on
``t_bar`` (reading only planned distances), and return the circulant whose
first column is ``F z_hat``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .rulers import Ruler, union_budget, union_ruler_for_sft
from .sfft import (
    MaskedVectorAccessor,
    SftConfig,
    SparseSpectrum,
    dense_fft,
    is_power_of_two,
    plan_blocks,
    sft,
)

Sampler = Callable[[tuple, int], np.ndarray]


def pair_sets(r: Ruler) -> dict[int, list[tuple[int, int]]]:
    """``R(s)``: pairs ``(i, j)`` of ruler marks with ``i - j`` equal to ``s`` or ``d - s``."""
    d = r.modulus
    out: dict[int, list[tuple[int, int]]] = {}
    for i in r.elements:
        for j in r.elements:
            diff = i - j
            if diff < 0:
                continue
            out.setdefault(diff, []).append((i, j))
            if diff > 0 and d - diff != diff:
                out.setdefault(d - diff, []).append((i, j))
    return {s: sorted(v) for s, v in sorted(out.items())}


def pair_counts(r: Ruler) -> np.ndarray:
    """``|R(s)|`` for every ``s < d`` (zero where ``s`` is not measured)."""
    d = r.modulus
    els = r.as_array()
    # ordered circular pair counts via the autocorrelation of the indicator;
    # lag d/2 meets every unordered pair in both orientations
    indicator = np.zeros(d)
    indicator[els] = 1.0
    total = np.rint(np.fft.irfft(np.abs(np.fft.rfft(indicator)) ** 2, n=d)).astype(np.int64)
    if d % 2 == 0:
        total[d // 2] //= 2
    return total


@dataclass
class MaskedAutocovariance:
    distances: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    d: int
    n_used: int

    def as_dense(self) -> np.ndarray:
        """Full length-``d`` vector with unmeasured distances set to zero."""
        out = np.zeros(self.d)
        out[self.distances] = self.values
        return out

    def accessor(self) -> MaskedVectorAccessor:
        return MaskedVectorAccessor(self.as_dense(), self.distances)

    def __getitem__(self, s: int) -> float:
        pos = np.searchsorted(self.distances, s)
        if pos == len(self.distances) or self.distances[pos] != s:
            raise KeyError(s)
        return float(self.values[pos])

    def __contains__(self, s: int) -> bool:
        pos = np.searchsorted(self.distances, s)
        return pos < len(self.distances) and self.distances[pos] == s


# small chunks keep the zero-filled block in cache; larger ones are slower
_CHUNK_ELEMENTS = 2**16


def _lag_sums(batch: np.ndarray, els: np.ndarray, d: int) -> np.ndarray:
    # circular autocorrelation of the zero-filled samples, summed over the batch
    rows = max(1, _CHUNK_ELEMENTS // d)
    placed = np.zeros((min(rows, batch.shape[0]), d))
    power = np.zeros(d // 2 + 1)
    for start in range(0, batch.shape[0], rows):
        chunk = batch[start:start + rows]
        block = placed[: chunk.shape[0]]
        block[:, els] = chunk
        spec = np.fft.rfft(block, axis=1).view(np.float64)
        power += np.einsum("ij,ij->j", spec, spec).reshape(-1, 2).sum(axis=1)
    return np.fft.irfft(power, n=d)


def _finish(lag_sums: np.ndarray, seen: int, counts: np.ndarray, d: int) -> MaskedAutocovariance:
    lag_sums = lag_sums.copy()
    # each unordered pair is counted once, except at d/2 where both
    # orientations land on the same lag
    if d % 2 == 0 and d > 1:
        lag_sums[d // 2] /= 2
    measured = np.flatnonzero(counts)
    values = lag_sums[measured] / (seen * counts[measured])
    return MaskedAutocovariance(measured, values, counts[measured], d, seen)


def _batches(samples, width: int):
    for batch in samples:
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        if batch.shape[1] != width:
            raise ValueError(f"sample has {batch.shape[1]} coordinates, ruler has {width}")
        yield batch


def estimate_autocovariance(samples: Iterable[np.ndarray], r: Ruler, n: int | None = None) -> MaskedAutocovariance:
    """Average ``x_i x_j`` over ``R(s)`` and over the samples.

    ``samples`` yields arrays of shape ``(batch, |R|)`` (or single vectors of
    length ``|R|``) whose columns follow ``r.elements``. When ``n`` is given,
    exactly ``n`` samples must be supplied.
    """
    d = r.modulus
    els = r.as_array()
    lag_sums = np.zeros(d)
    seen = 0
    for batch in _batches(samples, len(els)):
        lag_sums += _lag_sums(batch, els, d)
        seen += batch.shape[0]
    if seen == 0:
        raise ValueError("no samples")
    if n is not None and seen != n:
        raise ValueError(f"expected {n} samples, got {seen}")
    return _finish(lag_sums, seen, pair_counts(r), d)


def running_autocovariance(samples: Iterable[np.ndarray], r: Ruler, checkpoints: Iterable[int]) -> list[MaskedAutocovariance]:
    """Estimates from the first ``n`` samples for every ``n`` in ``checkpoints``.

    Batches must not straddle a checkpoint.
    """
    d = r.modulus
    els = r.as_array()
    counts = pair_counts(r)
    todo = sorted(set(int(c) for c in checkpoints))
    out = []
    lag_sums = np.zeros(d)
    seen = 0
    for batch in _batches(samples, len(els)):
        if not todo:
            break
        if seen + batch.shape[0] > todo[0]:
            raise ValueError(f"batch crosses the checkpoint {todo[0]}")
        lag_sums += _lag_sums(batch, els, d)
        seen += batch.shape[0]
        if seen == todo[0]:
            out.append(_finish(lag_sums, seen, counts, d))
            todo.pop(0)
    if todo:
        raise ValueError(f"samples ran out before {todo[0]}")
    return out


def exact_autocovariance(t: np.ndarray, r: Ruler) -> MaskedAutocovariance:
    """The infinite-sample limit: ``t`` itself on the measured distances."""
    counts = pair_counts(r)
    measured = np.flatnonzero(counts)
    return MaskedAutocovariance(measured, np.asarray(t, dtype=float)[measured], counts[measured], r.modulus, 0)


@dataclass
class CirculantEstimate:
    """``T~ = Toep(z)`` stored as its first column and sparse spectrum."""

    z: np.ndarray
    spectrum: SparseSpectrum
    n_used: int = 0
    entries_read: int = 0
    sft_reads: int = 0
    imag_residue: float = 0.0
    info: dict = field(default_factory=dict)


def _sft_delta(epsilon: float, d: int, k: int, mode: str) -> float:
    if mode == "d":
        return epsilon / math.sqrt(d)
    if mode == "k":
        return epsilon / math.sqrt(k)
    raise ValueError(f"unknown delta mode {mode!r}")


def circulant_from_autocovariance(tbar: MaskedAutocovariance, cfg: SftConfig, plan=None) -> CirculantEstimate:
    """Run the SFT on ``t_bar`` and build the circulant first column.

    A real symmetric circulant has a real spectrum, so the SFT output is
    projected onto real amplitudes; this never increases the distance to the
    true spectrum.
    """
    d = tbar.d
    acc = tbar.accessor()
    z_hat = sft(acc, d, cfg, plan=plan)
    z_raw = z_hat.evaluate(np.arange(d)) if len(z_hat) else np.zeros(d, dtype=complex)
    norm = float(np.linalg.norm(z_raw))
    residue = float(np.linalg.norm(z_raw.imag))
    if residue > 1e-6 * max(norm, 1e-300):
        raise ArithmeticError(f"SFT output is not conjugate symmetric (imaginary residue {residue:.3e})")
    projected = SparseSpectrum(z_hat.indices, z_hat.amplitudes.real, d)
    z = projected.evaluate(np.arange(d)).real if len(projected) else np.zeros(d)
    return CirculantEstimate(z, projected, n_used=tbar.n_used, sft_reads=len(acc.reads), imag_residue=residue)


def sample_budget(m: int, epsilon: float, constant: float = 4.0) -> int:
    """Vector samples ``ceil(C m sqrt(log m) / eps^2)`` for ``m`` read entries."""
    return math.ceil(constant * m * math.sqrt(math.log(max(m, 2))) / epsilon**2)


def estimate_circulant_covariance(
    sampler: Sampler,
    d: int,
    k: int,
    epsilon: float,
    seed: int = 0,
    n: int | None = None,
    sample_constant: float = 4.0,
    delta_mode: str = "d",
    batch_size: int = 4096,
) -> CirculantEstimate:
    """Estimate a nearly rank-``k`` circulant covariance from vector samples.

    ``sampler(indices, m)`` must return ``m`` i.i.d. samples restricted to
    ``indices`` as an ``(m, len(indices))`` array. Only the union ruler's
    coordinates are ever requested.
    """
    if not is_power_of_two(d):
        raise ValueError(f"d={d} is not a power of two")
    if not 1 <= k <= d:
        raise ValueError(f"need 1 <= k <= d, got k={k}")
    delta = _sft_delta(epsilon, d, k, delta_mode)
    cfg = SftConfig.default(d, k, delta, seed)
    ruler, _ = union_ruler_for_sft(d, k, cfg.delta, np.random.default_rng(cfg.seed), cfg)
    plan = plan_blocks(d, cfg, np.random.default_rng(cfg.seed))
    m = len(np.unique(np.concatenate([idx for _, idx in plan])))
    if n is None:
        n = sample_budget(m, epsilon, sample_constant)

    indices = ruler.elements

    def batches():
        left = n
        while left > 0:
            size = min(batch_size, left)
            yield sampler(indices, size)
            left -= size

    tbar = estimate_autocovariance(batches(), ruler, n)
    est = circulant_from_autocovariance(tbar, cfg, plan=plan)
    est.entries_read = len(ruler)
    est.info.update(m=m, delta=cfg.delta, budget=union_budget(cfg), num_blocks=cfg.num_blocks,
                    block_len=cfg.block_len, seed=seed)
    return est


def frobenius_gap(t_true, z, k: int, epsilon: float) -> tuple[float, float]:
    """Both sides of ``||T - T~||_F <= 5 eps ||T||_F + 2 min_rank-k ||T - B||_F``.

    Uses the circulant identity ``||Toep(t) - Toep(z)||_F = sqrt(d) ||t_hat - z_hat||``.
    """
    t_true = np.asarray(t_true, dtype=float)
    d = t_true.shape[0]
    t_hat = dense_fft(t_true)
    z_hat = dense_fft(np.asarray(z, dtype=float))
    lhs = math.sqrt(d) * float(np.linalg.norm(t_hat - z_hat))
    mags = np.sort(np.abs(t_hat))[::-1]
    tail = math.sqrt(float(np.sum(mags[k:] ** 2)))
    norm_T = math.sqrt(d) * float(np.linalg.norm(t_true))
    rhs = 5 * epsilon * norm_T + 2 * math.sqrt(d) * tail
    return lhs, rhs
