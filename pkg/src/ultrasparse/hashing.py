"""Frequency hashing, time-domain permutations and candidate voting.

A dilation ``a`` coprime to ``d`` together with offsets ``b`` and ``c``
defines two maps on ``{0, ..., d-1}``:

* the time permutation ``g(x) = a (x - c) mod d``
* the frequency hash ``h(x) = a (x - b) mod d``

Reading a length-``d`` signal ``x`` in the order ``y_s = x[g(s)]`` and
modulating by ``exp(-2 pi i a b s / d)`` moves the on-grid frequency ``j`` to
``h(j)`` and multiplies its weight by ``exp(-2 pi i a c j / d)``.  The helpers
below implement both directions of that bookkeeping.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class HashParams:
    a: int
    b: int
    c: int
    d: int
    a_inv: int = field(init=False)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"modulus must be positive, got d={self.d}")
        if math.gcd(self.a, self.d) != 1:
            raise ValueError(f"a={self.a} is not a unit modulo d={self.d}")
        object.__setattr__(self, "a", self.a % self.d)
        object.__setattr__(self, "b", self.b % self.d)
        object.__setattr__(self, "c", self.c % self.d)
        object.__setattr__(self, "a_inv", pow(self.a, -1, self.d))


def random_unit(d: int, rng: np.random.Generator) -> int:
    """Draw a dilation uniformly from the units modulo ``d``.

    For powers of two this is an odd integer in ``[1, d)``; otherwise
    candidates are rejected until one is coprime to ``d``.
    """
    if d <= 2:
        return 1
    if d & (d - 1) == 0:
        return int(2 * rng.integers(0, d // 2) + 1)
    while True:
        a = int(rng.integers(1, d))
        if math.gcd(a, d) == 1:
            return a


def random_hash_params(d: int, rng: np.random.Generator) -> HashParams:
    a = random_unit(d, rng)
    b = int(rng.integers(0, d))
    c = int(rng.integers(0, d))
    return HashParams(a, b, c, d)


def g_perm(x, p: HashParams):
    """Time permutation ``a (x - c) mod d``; works on ints and integer arrays."""
    if _is_array(x):
        return (p.a * (np.asarray(x, dtype=np.int64) - p.c)) % p.d
    return (p.a * (x - p.c)) % p.d


def g_perm_inverse(y, p: HashParams):
    if _is_array(y):
        return (p.a_inv * np.asarray(y, dtype=np.int64) + p.c) % p.d
    return (p.a_inv * y + p.c) % p.d


def h_freq(x, p: HashParams):
    """Frequency hash ``a (x - b) mod d`` of an on-grid frequency index."""
    if _is_array(x):
        return (p.a * (np.asarray(x, dtype=np.int64) - p.b)) % p.d
    return (p.a * (x - p.b)) % p.d


def h_freq_inverse(y, p: HashParams):
    if _is_array(y):
        return (p.a_inv * np.asarray(y, dtype=np.int64) + p.b) % p.d
    return (p.a_inv * y + p.b) % p.d


def _is_array(x) -> bool:
    return isinstance(x, (np.ndarray, list, tuple))


def hash_decomposition(freqs: Sequence[int], weights: Sequence[complex], p: HashParams):
    """Forward map of an on-grid decomposition through ``(g, h)``.

    Returns hashed frequency indices and weights such that the sequence
    ``x[g(s)] * exp(-2 pi i a b s / d)`` has exactly this decomposition.
    """
    freqs = np.asarray(freqs, dtype=np.int64) % p.d
    weights = np.asarray(weights, dtype=complex)
    hashed = h_freq(freqs, p)
    phase = np.exp(-2j * np.pi * ((p.a * p.c % p.d) * freqs % p.d) / p.d)
    return hashed, weights * phase


def unhash_decomposition(hashed_freqs: Sequence[int], hashed_weights: Sequence[complex], p: HashParams):
    """Undo :func:`hash_decomposition`.

    Returns ``(freqs, weights)`` with ``freqs`` as reals in ``[0, 1)``.
    Frequencies stay integer-exact until the final division by ``d``.
    """
    idx = h_freq_inverse(np.asarray(hashed_freqs, dtype=np.int64) % p.d, p)
    phase = np.exp(2j * np.pi * ((p.a * p.c % p.d) * idx % p.d) / p.d)
    weights = np.asarray(hashed_weights, dtype=complex) * phase
    return idx / p.d, weights


def unhash_indices(hashed_freqs: Sequence[int], hashed_weights: Sequence[complex], p: HashParams):
    """Like :func:`unhash_decomposition` but returns integer frequency indices."""
    idx = h_freq_inverse(np.asarray(hashed_freqs, dtype=np.int64) % p.d, p)
    phase = np.exp(2j * np.pi * ((p.a * p.c % p.d) * idx % p.d) / p.d)
    return idx, np.asarray(hashed_weights, dtype=complex) * phase


def enumerate_preimages(f_tilde: float, a: int) -> list[float]:
    """All ``f`` in ``[0, 1)`` with ``a * f = f_tilde (mod 1)``."""
    if a < 1:
        raise ValueError("dilation must be a positive integer")
    f_tilde = f_tilde % 1.0
    # rounding can push the last preimage onto 1.0; wrap it back
    return [((f_tilde + j) / a) % 1.0 for j in range(a)]


def preimage_candidates(f_tilde: float, a: int, d: int, halfwidth: float = 0.0) -> set[int]:
    """On-grid indices whose dilated frequency lands near ``f_tilde``.

    ``halfwidth`` is the resolution of the recovered (dilated) frequency in
    cycles; every grid index ``j`` with ``|a j / d - f_tilde| <= halfwidth``
    (cyclically) is returned.
    """
    out = set()
    span = halfwidth / a
    for f in enumerate_preimages(f_tilde, a):
        lo = math.ceil((f - span) * d - 1e-9)
        hi = math.floor((f + span) * d + 1e-9)
        if hi < lo:
            # no grid point inside the window, take the closest one
            lo = hi = round(f * d)
        out.update(j % d for j in range(lo, hi + 1))
    return out


@dataclass
class FrequencyCandidateTally:
    counts: Counter = field(default_factory=Counter)
    rounds: int = 0

    def add(self, candidates: Iterable[int]) -> None:
        self.counts.update(set(int(c) for c in candidates))
        self.rounds += 1


@dataclass(frozen=True)
class VoteResult:
    indices: list[int]
    insufficient_rounds: bool


def vote_candidates(tally: FrequencyCandidateTally, candidate_sets: Iterable[Iterable[int]], k: int) -> VoteResult:
    """Accumulate candidate sets into ``tally`` and return the ``k`` most voted.

    Each set counts at most once per index. Ties go to the lower index. When
    fewer than ``k`` distinct indices were ever seen, all of them are returned
    and ``insufficient_rounds`` is set.
    """
    for cands in candidate_sets:
        tally.add(cands)
    ranked = sorted(tally.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    top = [idx for idx, _ in ranked[:k]]
    return VoteResult(top, tally.rounds == 0 or len(ranked) < k)
