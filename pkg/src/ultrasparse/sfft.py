"""Hashing-based sparse Fourier transform over permuted prefix reads.

Conventions follow the unitary DFT ``F[j, k] = d**-0.5 * exp(2 pi i j k / d)``;
the spectrum of ``x`` is ``F^* x`` (``numpy.fft.fft`` with ``norm="ortho"``).

Each block reads the first ``block_len`` entries of ``x`` in the permuted
order ``x[a (s - c) mod d]`` (see :mod:`ultrasparse.hashing`). A block is
modulated by ``b``, multiplied by a flat window, folded to ``bins`` and
transformed.  Frequencies are located by voting over heavy bins, estimated by
a median across blocks and finally refit by least squares on all reads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .hashing import HashParams, h_freq, g_perm, random_hash_params


class MissingReadError(LookupError):
    """Raised when a read falls outside the readable domain."""


MISSING = None


def is_power_of_two(n: int) -> bool:
    return n >= 1 and n & (n - 1) == 0


def _next_power_of_two(n: int) -> int:
    return 1 << max(0, math.ceil(math.log2(max(n, 1))))


def dense_fft(x) -> np.ndarray:
    """Unitary DFT ``F^* x`` of a power-of-two length vector."""
    x = np.asarray(x)
    if not is_power_of_two(x.shape[-1]):
        raise ValueError(f"length {x.shape[-1]} is not a power of two")
    return np.fft.fft(x, norm="ortho")


def dense_ifft(x_hat) -> np.ndarray:
    """Inverse of :func:`dense_fft`, i.e. ``F x_hat``."""
    x_hat = np.asarray(x_hat)
    if not is_power_of_two(x_hat.shape[-1]):
        raise ValueError(f"length {x_hat.shape[-1]} is not a power of two")
    return np.fft.ifft(x_hat, norm="ortho")


@dataclass
class SparseSpectrum:
    indices: np.ndarray
    amplitudes: np.ndarray
    d: int

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if self.indices.shape != self.amplitudes.shape:
            raise ValueError("indices and amplitudes differ in length")
        if len(np.unique(self.indices)) != len(self.indices):
            raise ValueError("duplicate spectrum indices")

    @classmethod
    def empty(cls, d: int) -> "SparseSpectrum":
        return cls(np.zeros(0, np.int64), np.zeros(0, complex), d)

    @property
    def entries(self) -> list[tuple[int, complex]]:
        return list(zip(self.indices.tolist(), self.amplitudes.tolist()))

    def __len__(self):
        return len(self.indices)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.d, dtype=complex)
        out[self.indices] = self.amplitudes
        return out

    def evaluate(self, positions) -> np.ndarray:
        """Time-domain values ``(F z)[n]`` at the given positions."""
        positions = np.asarray(positions, dtype=np.int64)
        return _fourier_columns(positions, self.indices, self.d) @ self.amplitudes

    def sorted(self) -> "SparseSpectrum":
        order = np.argsort(self.indices)
        return SparseSpectrum(self.indices[order], self.amplitudes[order], self.d)


@dataclass(frozen=True)
class SftConfig:
    k: int
    delta: float
    num_blocks: int
    block_len: int
    bins: int
    iterations: int
    seed: int = 0
    window_tail: float = 1e-9

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be positive")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.num_blocks < 1 or self.iterations < 1:
            raise ValueError("num_blocks and iterations must be positive")
        if not is_power_of_two(self.bins):
            raise ValueError("bins must be a power of two")
        if self.bins > self.block_len:
            raise ValueError("bins cannot exceed block_len")

    @classmethod
    def default(cls, d: int, k: int, delta: float, seed: int = 0) -> "SftConfig":
        """Defaults: ``4k`` bins, ``max(3, log2(d/k)**2)`` blocks of
        ``4 k log2(d/delta)`` reads, ``log2(k) + 1`` iterations."""
        if not is_power_of_two(d):
            raise ValueError(f"d={d} is not a power of two")
        if not 1 <= k <= d:
            raise ValueError(f"need 1 <= k <= d, got k={k}")
        num_blocks = max(3, math.ceil(math.log2(d / k) ** 2))
        block_len = min(d, math.ceil(4 * k * math.log2(d / delta)))
        bins = min(_next_power_of_two(4 * k), d)
        while bins > block_len:
            bins //= 2
        iterations = math.ceil(math.log2(k)) + 1
        return cls(k, delta, num_blocks, block_len, bins, iterations, seed)


class MaskedVectorAccessor:
    """Read-only view of a vector that only answers inside ``domain``.

    Every successful read is recorded in :attr:`reads` so callers can audit
    the access pattern.
    """

    def __init__(self, values, domain=None):
        self._values = np.asarray(values)
        d = self._values.shape[0]
        self._mask = np.zeros(d, dtype=bool)
        if domain is None:
            self._mask[:] = True
        else:
            self._mask[np.asarray(list(domain), dtype=np.int64)] = True
        self.reads: set[int] = set()

    @property
    def domain(self) -> set[int]:
        return set(np.flatnonzero(self._mask).tolist())

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self._values)

    def read(self, index: int):
        if not self._mask[index]:
            return MISSING
        self.reads.add(int(index))
        return self._values[index]

    def read_many(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        bad = ~self._mask[indices]
        if bad.any():
            raise MissingReadError(f"read outside domain at indices {indices[bad][:8].tolist()}")
        self.reads.update(np.unique(indices).tolist())
        return self._values[indices]


def plan_blocks(d: int, cfg: SftConfig, rng: np.random.Generator) -> list[tuple[HashParams, np.ndarray]]:
    """Draw one ``(a odd, b, c)`` per block and the positions the block reads.

    Block ``i`` reads ``x[g(s)]`` for ``s < block_len`` with
    ``g(s) = a (s - c) mod d``.
    """
    if not is_power_of_two(d):
        raise ValueError(f"d={d} is not a power of two")
    s = np.arange(cfg.block_len, dtype=np.int64)
    plan = []
    for _ in range(cfg.num_blocks):
        p = random_hash_params(d, rng)
        plan.append((p, g_perm(s, p)))
    return plan


def flat_window(block_len: int, bins: int, d: int, tail: float = 1e-9) -> np.ndarray:
    """Gaussian-tapered sinc whose response is roughly flat over one bin.

    The sinc gives a passband of ``d / bins`` frequencies; the Gaussian is
    chosen so the taper falls to ``tail`` at the ends of the block.
    """
    t = np.arange(block_len) - (block_len - 1) / 2
    sigma = max(block_len / 2, 0.5) / math.sqrt(2 * math.log(1 / tail))
    return np.sinc(t / bins) * np.exp(-0.5 * (t / sigma) ** 2)


def _bin_scale(block_len: int, bins: int) -> float:
    return 1.0 / math.sqrt(bins * math.ceil(block_len / bins))


def hash_to_bins(block, bins: int, window=None) -> np.ndarray:
    """Window, fold to ``bins`` and FFT a block of reads.

    With ``window=None`` the fold is pure aliasing (boxcar).  The output is
    scaled so that total energy never exceeds the block energy for windows
    bounded by one.
    """
    block = np.asarray(block, dtype=complex)
    if window is not None:
        block = block * window
    L = block.shape[0]
    folds = math.ceil(L / bins)
    padded = np.zeros(folds * bins, dtype=complex)
    padded[:L] = block
    folded = padded.reshape(folds, bins).sum(axis=0)
    return np.fft.fft(folded) * _bin_scale(L, bins)


def window_response(window, bins: int, d: int) -> np.ndarray:
    """Response of :func:`hash_to_bins` to a unit tone, by frequency offset.

    Entry ``xi`` (taken mod ``d``) is the bin value produced by the sequence
    ``exp(2 pi i xi s / d)`` in the bin centred on frequency zero.
    """
    L = len(window)
    padded = np.zeros(d, dtype=complex)
    padded[:L] = window
    return np.fft.ifft(padded) * d * _bin_scale(L, bins)


@dataclass
class BlockSnapshot:
    params: HashParams
    bins: np.ndarray
    response: np.ndarray = field(repr=False)


def _bin_of(h: np.ndarray, bins: int, d: int):
    width = d // bins
    beta = ((h + width // 2) // width) % bins
    return beta, (h - beta * width) % d


def _fourier_columns(positions: np.ndarray, freqs: np.ndarray, d: int) -> np.ndarray:
    phase = np.outer(positions % d, freqs % d) % d
    return np.exp(2j * np.pi * phase / d) / math.sqrt(d)


def _modulation(p: HashParams, block_len: int) -> np.ndarray:
    s = np.arange(block_len, dtype=np.int64)
    return np.exp(-2j * np.pi * ((p.a * p.b % p.d) * s % p.d) / p.d)


def _select_top(indices, amplitudes, k: int, d: int, paired: bool):
    # keep the k largest; with paired=True, f and d-f are kept or dropped
    # together and a missing partner is filled in with the conjugate
    order = np.lexsort((indices, -np.abs(amplitudes)))
    if not paired:
        keep = order[:k]
        return indices[keep], amplitudes[keep]
    chosen: dict[int, complex] = {}
    for i in order:
        f = int(indices[i])
        if f in chosen:
            continue
        partner = (d - f) % d
        size = 1 if partner == f else 2
        if len(chosen) + size > k:
            continue
        chosen[f] = amplitudes[i]
        if size == 2:
            chosen[partner] = np.conj(amplitudes[i])
        if len(chosen) >= k:
            break
    idx = np.asarray(sorted(chosen), dtype=np.int64)
    return idx, np.asarray([chosen[f] for f in idx.tolist()], dtype=complex)


def identify_and_estimate(
    snapshots: Sequence[BlockSnapshot],
    cfg: SftConfig,
    d: int,
    floor: float = 0.0,
    paired: bool = False,
) -> SparseSpectrum:
    """Locate heavy frequencies by voting and estimate them by a median.

    In each block the ``k`` largest bins above ``floor`` are heavy, and every
    frequency hashing into a heavy bin gets a vote.  Frequencies with votes
    from more than half the blocks become candidates.  Each block whose window
    response at the candidate is at least half its peak contributes the
    estimate ``sqrt(d) * bin * exp(2 pi i a c f / d) / response``; real and
    imaginary parts are combined by median.  Candidates whose per-block
    estimates mostly disagree with the median are dropped.
    """
    nblocks = len(snapshots)
    if nblocks < 2:
        raise ValueError("need at least two blocks")
    bins = cfg.bins
    freqs = np.arange(d, dtype=np.int64)
    votes = np.zeros(d, dtype=np.int32)
    for snap in snapshots:
        mags = np.abs(snap.bins)
        live = np.flatnonzero(mags > floor)
        if live.size == 0:
            continue
        heavy = live[np.argsort(-mags[live], kind="stable")[: cfg.k]]
        is_heavy = np.zeros(bins, dtype=bool)
        is_heavy[heavy] = True
        beta, _ = _bin_of(h_freq(freqs, snap.params), bins, d)
        votes += is_heavy[beta]
    cands = np.flatnonzero(votes * 2 > nblocks)
    if cands.size == 0:
        return SparseSpectrum.empty(d)
    if cands.size > 4 * cfg.k:
        cands = cands[np.argsort(-votes[cands], kind="stable")[: 4 * cfg.k]]

    est = np.full((nblocks, cands.size), np.nan + 0j)
    for i, snap in enumerate(snapshots):
        p = snap.params
        beta, xi = _bin_of(h_freq(cands, p), bins, d)
        resp = snap.response[xi]
        usable = np.abs(resp) >= 0.5 * np.abs(snap.response[0])
        phase = np.exp(2j * np.pi * ((p.a * p.c % d) * cands % d) / d)
        vals = math.sqrt(d) * snap.bins[beta] * phase / np.where(usable, resp, 1.0)
        est[i, usable] = vals[usable]
    have = ~np.isnan(est.real)
    enough = have.sum(axis=0) > 0
    med = np.zeros(cands.size, dtype=complex)
    med[enough] = np.nanmedian(est.real[:, enough], axis=0) + 1j * np.nanmedian(est.imag[:, enough], axis=0)
    with np.errstate(invalid="ignore"):
        agree = np.abs(est - med) <= 0.5 * np.abs(med)
    agree &= have
    consistent = enough & (agree.sum(axis=0) * 2 >= have.sum(axis=0)) & (np.abs(med) > 0)
    idx, amp = _select_top(cands[consistent], med[consistent], cfg.k, d, paired)
    return SparseSpectrum(idx, amp, d)


def _least_squares(support: np.ndarray, positions: np.ndarray, values: np.ndarray, d: int) -> np.ndarray:
    if support.size == 0:
        return np.zeros(0, dtype=complex)
    A = _fourier_columns(positions, support, d)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    return coef


def sft(x: MaskedVectorAccessor, d: int, cfg: SftConfig, plan=None) -> SparseSpectrum:
    """``k``-sparse approximation of the unitary spectrum of ``x``.

    Reads only the positions returned by :func:`plan_blocks` for
    ``np.random.default_rng(cfg.seed)`` (or the supplied ``plan``).  Raises
    :class:`MissingReadError` when one of them is not readable.
    """
    if not is_power_of_two(d):
        raise ValueError(f"d={d} is not a power of two")
    if cfg.k > d:
        raise ValueError(f"k={cfg.k} exceeds d={d}")
    if plan is None:
        plan = plan_blocks(d, cfg, np.random.default_rng(cfg.seed))
    reads = [np.asarray(x.read_many(idx)) for _, idx in plan]
    paired = not any(np.iscomplexobj(r) for r in reads)
    positions = np.unique(np.concatenate([idx for _, idx in plan]))
    lookup = np.full(d, -1, dtype=np.int64)
    lookup[positions] = np.arange(positions.size)
    values = np.zeros(positions.size, dtype=complex)
    for (_, idx), r in zip(plan, reads):
        values[lookup[idx]] = r

    if cfg.bins >= d:
        # one bin per frequency: the plain fold of a full period is an exact DFT
        window = np.ones(cfg.block_len)
    else:
        window = flat_window(cfg.block_len, cfg.bins, d, cfg.window_tail)
    response = window_response(window, cfg.bins, d)
    mods = [_modulation(p, cfg.block_len) for p, _ in plan]

    current = SparseSpectrum.empty(d)
    floor = None
    for _ in range(cfg.iterations):
        residual = values - current.evaluate(positions)
        snaps = [
            BlockSnapshot(p, hash_to_bins(residual[lookup[idx]] * mod, cfg.bins, window), response)
            for (p, idx), mod in zip(plan, mods)
        ]
        peak = max(float(np.max(np.abs(s.bins))) for s in snaps)
        if floor is None:
            if peak == 0.0:
                return SparseSpectrum.empty(d)
            floor = 1e-9 * peak
        if peak <= floor:
            break
        found = identify_and_estimate(snaps, cfg, d, floor=floor, paired=paired)
        if len(found) == 0:
            break
        support = np.union1d(current.indices, found.indices)
        amps = _least_squares(support, positions, values, d)
        support, amps = _select_top(support, amps, cfg.k, d, paired)
        current = SparseSpectrum(support, _least_squares(support, positions, values, d), d).sorted()
    return current
