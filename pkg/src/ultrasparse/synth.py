"""Synthetic low-rank circulant/Toeplitz covariances and ruler-restricted samples."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rulers import Ruler

WEIGHT_RANGE = (0.5, 1.5)


@dataclass(frozen=True)
class GroundTruth:
    """Vandermonde decomposition ``T = F_T diag(weights) F_T^*``.

    ``freqs`` are reals in ``[0, 1)``; on-grid truths use multiples of
    ``1/d``. A symmetric truth pairs every ``f`` with ``1 - f`` at equal weight
    so that ``T`` is real.
    """

    freqs: tuple[float, ...]
    weights: tuple[float, ...]
    d: int
    symmetric: bool = True

    def __post_init__(self):
        freqs = tuple(float(f) % 1.0 for f in self.freqs)
        weights = tuple(float(w) for w in self.weights)
        if len(freqs) != len(weights):
            raise ValueError("freqs and weights differ in length")
        if any(w <= 0 for w in weights):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "weights", weights)
        if self.symmetric and not self._is_conjugate_closed():
            raise ValueError("symmetric truth needs f <-> 1-f pairs of equal weight")

    def _is_conjugate_closed(self) -> bool:
        f = np.asarray(self.freqs)
        w = np.asarray(self.weights)
        for fi, wi in zip(f, w):
            mirror = (1.0 - fi) % 1.0
            dist = np.abs((f - mirror + 0.5) % 1.0 - 0.5)
            j = int(np.argmin(dist))
            if dist[j] > 1e-12 or abs(w[j] - wi) > 1e-12 * max(1.0, wi):
                return False
        return True

    @property
    def k(self) -> int:
        return len(self.freqs)

    @property
    def on_grid(self) -> bool:
        x = np.asarray(self.freqs) * self.d
        return bool(np.all(np.abs(x - np.round(x)) < 1e-9))

    @property
    def indices(self) -> np.ndarray:
        if not self.on_grid:
            raise ValueError("truth is not on the grid")
        return np.round(np.asarray(self.freqs) * self.d).astype(np.int64) % self.d

    def to_json(self) -> dict:
        return {"d": self.d, "freqs": list(self.freqs), "weights": list(self.weights), "symmetric": self.symmetric}

    @classmethod
    def from_json(cls, spec: dict) -> "GroundTruth":
        return cls(tuple(spec["freqs"]), tuple(spec["weights"]), int(spec["d"]), bool(spec.get("symmetric", True)))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "GroundTruth":
        return cls.from_json(json.loads(Path(path).read_text()))


def build_first_column(gt: GroundTruth) -> np.ndarray:
    """``t_s = sum_l w_l exp(2 pi i f_l s)`` for ``s < d``; real for symmetric truths."""
    s = np.arange(gt.d, dtype=np.int64)
    w = np.asarray(gt.weights)
    if gt.on_grid:
        # integer phases keep on-grid columns exact at large d
        phase = np.outer(s, gt.indices) % gt.d / gt.d
    else:
        phase = np.outer(s, np.asarray(gt.freqs)) % 1.0
    t = np.exp(2j * np.pi * phase) @ w
    return t.real.copy() if gt.symmetric else t


def random_on_grid_truth(d: int, k: int, rng: np.random.Generator, weight_range=WEIGHT_RANGE) -> GroundTruth:
    """Conjugate-closed on-grid truth with ``k`` frequencies.

    Odd ``k`` includes frequency zero. Requires ``d >= 2k``.
    """
    if not 1 <= k <= d // 2:
        raise ValueError("need 1 <= k <= d/2 for distinct conjugate pairs")
    npairs = k // 2
    free = rng.choice(np.arange(1, (d + 1) // 2), size=npairs, replace=False)
    pair_w = rng.uniform(*weight_range, size=npairs)
    idx = list(free) + [d - j for j in free]
    w = list(pair_w) + list(pair_w)
    if k % 2:
        idx.append(0)
        w.append(float(rng.uniform(*weight_range)))
    return GroundTruth(tuple(j / d for j in idx), tuple(w), d)


def clustered_frequencies(k: int, min_gap: float, d: int, rng: np.random.Generator,
                          weight_range=WEIGHT_RANGE, max_tries: int = 10_000) -> GroundTruth:
    """On-grid conjugate-closed truth with one adjacent pair exactly ``min_gap`` apart.

    ``k // 2`` free frequencies are drawn in ``(0, 1/2)``; two of them form
    the clustered pair. Every other cyclic gap, mirrors included, is at least
    ``min_gap``.
    """
    if k % 2:
        raise ValueError("symmetric clustered truth needs even k")
    if min_gap * k >= 1:
        raise ValueError("min_gap * k must be below one")
    half = k // 2
    gap_idx = round(min_gap * d)
    if abs(gap_idx - min_gap * d) > 1e-9 or gap_idx < 1:
        raise ValueError("min_gap must be a positive multiple of 1/d")
    if k == 2:
        j = int(rng.integers(gap_idx, d // 2 - gap_idx + 1)) if d // 2 - gap_idx >= gap_idx else d // 4
        w = float(rng.uniform(*weight_range))
        return GroundTruth((j / d, (d - j) / d), (w, w), d)

    lo, hi = gap_idx, (d + 1) // 2 - gap_idx  # keep clear of mirrors at 0 and 1/2
    for _ in range(max_tries):
        j0 = int(rng.integers(lo, hi - gap_idx))
        chosen = [j0, j0 + gap_idx]
        others = rng.integers(lo, hi, size=half - 2)
        chosen.extend(int(j) for j in others)
        full = np.asarray(chosen + [d - j for j in chosen]) % d
        gaps = np.abs((full[:, None] - full[None, :] + d // 2) % d - d // 2)
        np.fill_diagonal(gaps, d)
        if gaps.min() < gap_idx:
            continue
        # the designated pair is the only one at the minimum gap
        if np.count_nonzero(gaps == gap_idx) != 4:
            continue
        w_half = rng.uniform(*weight_range, size=half)
        idx = chosen + [d - j for j in chosen]
        return GroundTruth(tuple(j / d for j in idx), tuple(w_half) + tuple(w_half), d)
    raise ValueError("could not place the frequencies with the requested gap")


def ruler_submatrix(t: np.ndarray, r: Ruler) -> np.ndarray:
    els = r.as_array()
    return np.asarray(t)[np.subtract.outer(els, els) % r.modulus]


def _marginal_factor(t: np.ndarray, positions: np.ndarray, d: int) -> np.ndarray:
    cov = np.asarray(t)[np.subtract.outer(positions, positions) % d]
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    t0 = float(np.asarray(t)[0])
    if vals.size and vals[0] < -1e-8 * max(t0, 1e-300):
        raise ValueError(f"ruler marginal is indefinite (min eigenvalue {vals[0]:.3e})")
    keep = vals > 1e-12 * max(vals[-1], 0.0) if vals.size else vals > 0
    return vecs[:, keep] * np.sqrt(vals[keep])


def sample_gaussian_on_ruler(t, r: Ruler, n: int, rng: np.random.Generator, batch_size: int = 4096):
    """Yield batches of zero-mean Gaussian samples restricted to ruler coordinates.

    Only the ``|R| x |R|`` marginal is factorised; negligible negative
    eigenvalues are clamped to zero.
    """
    factor = _marginal_factor(np.asarray(t, dtype=float), r.as_array(), r.modulus)
    remaining = n
    while remaining > 0:
        m = min(batch_size, remaining)
        yield rng.standard_normal((m, factor.shape[1])) @ factor.T
        remaining -= m


class GaussianRulerSampler:
    """Callable sampler ``(indices, n) -> (n, len(indices))`` for a circulant ``t``.

    Keeps the union of all coordinates ever requested in ``entries_read``.
    """

    def __init__(self, t, rng: np.random.Generator):
        self.t = np.asarray(t, dtype=float)
        self.d = self.t.shape[0]
        self.rng = rng
        self.entries_read: set[int] = set()
        self._factors: dict[tuple[int, ...], np.ndarray] = {}

    def __call__(self, indices, n: int) -> np.ndarray:
        key = tuple(int(i) for i in indices)
        if key not in self._factors:
            self._factors[key] = _marginal_factor(self.t, np.asarray(key, dtype=np.int64), self.d)
        self.entries_read.update(key)
        factor = self._factors[key]
        return self.rng.standard_normal((n, factor.shape[1])) @ factor.T


def add_entry_noise(t, nu: float, rng: np.random.Generator) -> np.ndarray:
    """Add i.i.d. ``N(0, nu)`` noise; ``nu`` is the variance."""
    if nu < 0:
        raise ValueError("noise variance must be nonnegative")
    t = np.asarray(t, dtype=float)
    if nu == 0:
        return t.copy()
    return t + rng.normal(scale=math.sqrt(nu), size=t.shape)
