"""Sparse rulers: classic, random ultra-sparse (two types) and SFT unions.

All constructions share one two-block shape: a dense run of ``m`` marks
followed by marks spaced ``m`` apart, which covers ``m**2`` consecutive
distances with ``2 m + 1`` marks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class Ruler:
    elements: tuple[int, ...]
    modulus: int
    block_tag: int | None = None

    def __post_init__(self):
        if self.modulus < 1:
            raise ValueError("modulus must be positive")
        els = tuple(sorted(set(int(e) for e in self.elements)))
        if not els:
            raise ValueError("a ruler needs at least one element")
        if els[0] < 0 or els[-1] >= self.modulus:
            raise ValueError(f"ruler elements must lie in [0, {self.modulus})")
        object.__setattr__(self, "elements", els)

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.elements, dtype=np.int64)


@dataclass(frozen=True)
class RulerParams:
    d: int
    k: int
    a: int = 1
    c: int = 0
    b_frac: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be positive")
        if not 1 <= self.k <= self.d:
            raise ValueError(f"need 1 <= k <= d, got k={self.k}, d={self.d}")
        if not 0.0 < self.b_frac <= 1.0:
            raise ValueError("b_frac must lie in (0, 1]")


def _ceil_sqrt(k: int) -> int:
    r = math.isqrt(k)
    return r if r * r == k else r + 1


def size_bound(k: int) -> int:
    """Largest ruler the two-block construction produces for ``k`` distances."""
    return 2 * _ceil_sqrt(k) + 1


def _two_block(k: int) -> list[int]:
    # marks in [0, k] whose non-cyclic differences cover {0, ..., k}
    if k == 0:
        return [0]
    m = _ceil_sqrt(k)
    dense = list(range(m))
    sparse = [i * m for i in range(1, k // m + 1)] + [k]
    return dense + sparse


def classic_ruler(d: int) -> Ruler:
    """A ruler of size at most ``2 ceil(sqrt(d - 1)) + 1`` for every distance below ``d``."""
    if d < 1:
        raise ValueError("d must be positive")
    return Ruler(tuple(_two_block(d - 1)), d)


def type1_offsets(k: int, a: int, c: int) -> list[int]:
    """Unreduced marks of the two-block ruler for ``{a(s - c) : 0 <= s <= k}``.

    Marks can be negative or exceed ``d``; callers reduce them.
    """
    m = _ceil_sqrt(k)
    first = [i * a for i in range(m + 1)]
    second = [i * a * m - a * c for i in range(1, m + 1)]
    return first + second


def ultra_sparse_ruler_type1(params: RulerParams, block_tag: int | None = None) -> Ruler:
    d, k, a, c = params.d, params.k, params.a, params.c
    if math.gcd(a, d) != 1:
        raise ValueError(f"a={a} is not coprime to d={d}")
    return Ruler(tuple(q % d for q in type1_offsets(k, a, c)), d, block_tag)


def ultra_sparse_ruler_type2(params: RulerParams) -> Ruler:
    """Non-cyclic ruler for ``{0, a, 2a, ..., k a}``; the shift ``c`` is ignored."""
    d, k, a = params.d, params.k, params.a
    if a < 1:
        raise ValueError("a must be a positive integer")
    if a > params.b_frac * d / k:
        raise ValueError(f"a={a} exceeds b_frac*d/k={params.b_frac * d / k:g}")
    if k * a >= d:
        raise ValueError(f"k*a={k * a} does not fit below d={d}")
    return Ruler(tuple(a * e for e in _two_block(k)), d)


def difference_coarray(r: Ruler, cyclic: bool = False) -> set[int]:
    els = r.as_array()
    diffs = np.subtract.outer(els, els).ravel()
    if cyclic:
        return set(np.unique(diffs % r.modulus).tolist())
    return set(np.unique(diffs[diffs >= 0]).tolist())


def verify_cyclic_ruler(r: Ruler, k: int, a: int, c: int) -> bool:
    """Exhaustively check that every ``g(s) = a(s - c) mod d``, ``s <= k``,
    is realised as ``r_i - r_j`` or as ``d - (r_i - r_j)``."""
    d = r.modulus
    els = r.as_array()
    diffs = np.subtract.outer(els, els).ravel()
    diffs = diffs[diffs >= 0]
    seen = np.zeros(d + 1, dtype=bool)
    seen[diffs] = True
    g = (a * (np.arange(k + 1, dtype=np.int64) - c)) % d
    return bool(np.all(seen[g] | seen[d - g]))


def union_ruler(rulers: Iterable[Ruler]) -> Ruler:
    rulers = list(rulers)
    d = rulers[0].modulus
    if any(r.modulus != d for r in rulers):
        raise ValueError("rulers disagree on the modulus")
    return Ruler(tuple(e for r in rulers for e in r.elements), d)


def union_ruler_for_sft(d: int, k: int, delta: float, rng: np.random.Generator, cfg=None):
    """One Type-1 ruler per SFT block and their union.

    ``cfg`` defaults to :meth:`SftConfig.default`. Returns ``(union, blocks)``
    where ``blocks`` is a list of ``(HashParams, Ruler)``; each block ruler
    covers the ``block_len`` permuted positions that block reads.
    """
    from .sfft import SftConfig, plan_blocks, is_power_of_two

    if not is_power_of_two(d):
        raise ValueError(f"d={d} is not a power of two")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if cfg is None:
        cfg = SftConfig.default(d, k, delta)
    blocks = []
    for i, (p, _) in enumerate(plan_blocks(d, cfg, rng)):
        # s ranges over 0..L-1, so the ruler must cover L - 1 shifted distances
        params = RulerParams(d, max(cfg.block_len - 1, 1), p.a, p.c)
        blocks.append((p, ultra_sparse_ruler_type1(params, block_tag=i)))
    return union_ruler(r for _, r in blocks), blocks


def union_budget(cfg) -> int:
    """Upper bound on the union ruler size for a given SFT configuration."""
    return cfg.num_blocks * (2 * _ceil_sqrt(max(cfg.block_len - 1, 1)) + 1)
