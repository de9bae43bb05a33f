"""MUSIC baseline under the three ruler sampling schemes.

The measured autocovariance values are treated as a sum of complex
exponentials. A Hermitian Toeplitz autocorrelation matrix is built directly
from the measured lags, its noise subspace gives the pseudospectrum,
the ``k`` largest peaks are the frequency estimates, and the weights come
from least squares on the measured distances.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .hashing import HashParams, random_unit, unhash_decomposition
from .synth import GroundTruth, add_entry_noise, build_first_column


class Scheme(str, enum.Enum):
    FIRST_OK = "first"
    PERMUTED_OK = "perm"
    ALL = "all"


@dataclass
class SchemeMeasurement:
    scheme: Scheme
    distances: np.ndarray
    values: np.ndarray
    perm: HashParams | None = None


@dataclass
class Pseudospectrum:
    values: np.ndarray
    degenerate: bool = False

    @property
    def grid(self) -> np.ndarray:
        return np.arange(len(self.values)) / len(self.values)


@dataclass
class Peaks:
    indices: np.ndarray
    padded: bool = False


@dataclass
class WeightFit:
    weights: np.ndarray
    condition: float
    ill_conditioned: bool = False


@dataclass
class SchemeResult:
    t_estimate: np.ndarray
    error: float
    freqs: np.ndarray
    weights: np.ndarray
    flags: list[str] = field(default_factory=list)


_DENSE_EIG_MAX = 128


def _signal_subspace(column: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top ``k`` eigenpairs of the Hermitian Toeplitz matrix with first column ``column``.

    Small matrices go through a dense solver. Large ones go through block
    LOBPCG with an FFT Toeplitz product, so the full matrix is never formed;
    a block method is needed because on-grid pairs give exactly repeated
    eigenvalues, which single-vector Lanczos cannot resolve.
    """
    size = column.shape[0]
    if size <= _DENSE_EIG_MAX or 5 * k >= size:
        return _dense_top(column, k)
    row = column.conj()

    def product(v):
        return scipy.linalg.matmul_toeplitz((column, row), v)

    op = scipy.sparse.linalg.LinearOperator((size, size), matvec=product, matmat=product, dtype=complex)
    start = np.random.default_rng(0).standard_normal((size, k)).astype(complex)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        vals, vecs = scipy.sparse.linalg.lobpcg(op, start, largest=True, maxiter=500,
                                                tol=1e-9 * max(abs(column[0]), 1e-300))
    if caught or not np.all(np.isfinite(vals)):
        return _dense_top(column, k)
    order = np.argsort(vals)
    return vals[order], vecs[:, order]


def _dense_top(column: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    size = column.shape[0]
    return scipy.linalg.eigh(scipy.linalg.toeplitz(column), subset_by_index=[size - k, size - 1])


def music_pseudospectrum(values, k: int, grid_size: int) -> Pseudospectrum:
    """MUSIC pseudospectrum ``1 / ||E_n^* v(f)||^2`` on ``grid_size`` points of ``[0, 1)``.

    The autocorrelation matrix is the Hermitian Toeplitz matrix built from
    the first half of the measured lags (``2k x 2k`` for ``4k`` lags).
    """
    values = np.asarray(values, dtype=complex)
    n = values.shape[0]
    if k >= n:
        raise ValueError(f"need more than k={k} measurements, got {n}")
    size = max(n // 2, k + 1)
    try:
        eigvals, signal = _signal_subspace(values[:size], k)
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError, ValueError) as exc:
        raise ValueError("eigendecomposition failed") from exc
    if not np.all(np.isfinite(eigvals)) or eigvals[-1] <= 0:
        return Pseudospectrum(np.ones(grid_size), degenerate=True)
    # ||E_n^* v||^2 = ||v||^2 - ||E_s^* v||^2 for v(f)_m = exp(2 pi i f m)
    proj = np.fft.ifft(signal.conj(), n=grid_size, axis=0) * grid_size
    denom = size - np.sum(np.abs(proj) ** 2, axis=1)
    spectrum = 1.0 / np.maximum(denom, size * np.finfo(float).eps)
    degenerate = bool(np.ptp(spectrum) <= 1e-12 * np.max(spectrum))
    return Pseudospectrum(spectrum, degenerate)


def find_peaks(spectrum, k: int) -> Peaks:
    """Indices of the ``k`` largest cyclic local maxima, largest first.

    If there are fewer than ``k`` strict local maxima, the remaining slots
    are filled from the largest other grid values and ``padded`` is set.
    """
    s = np.asarray(spectrum, dtype=float)
    is_peak = (s > np.roll(s, 1)) & (s > np.roll(s, -1))
    peaks = np.flatnonzero(is_peak)
    peaks = peaks[np.argsort(-s[peaks], kind="stable")]
    if len(peaks) >= k:
        return Peaks(peaks[:k], padded=False)
    rest = np.setdiff1d(np.argsort(-s, kind="stable"), peaks, assume_unique=False)
    rest = rest[np.argsort(-s[rest], kind="stable")]
    return Peaks(np.concatenate([peaks, rest[: k - len(peaks)]]), padded=True)


def ls_weights(freqs, distances, values, ridge: float = 1e-10) -> WeightFit:
    """Least-squares weights for ``values_s ~ sum_l w_l exp(2 pi i f_l s)``.

    A design with condition number above ``1e12`` is flagged and solved with
    a ridge term relative to its largest singular value.
    """
    freqs = np.asarray(freqs, dtype=float)
    distances = np.asarray(distances, dtype=float)
    values = np.asarray(values, dtype=complex)
    if len(distances) < len(freqs):
        raise ValueError("need at least as many distances as frequencies")
    if len(freqs) == 0:
        return WeightFit(np.zeros(0, dtype=complex), 1.0)
    A = np.exp(2j * np.pi * np.outer(distances, freqs))
    U, sv, Vh = np.linalg.svd(A, full_matrices=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    if cond > 1e12:
        lam = ridge * sv[0] ** 2
        w = Vh.conj().T @ ((sv / (sv**2 + lam)) * (U.conj().T @ values))
        return WeightFit(w, cond, ill_conditioned=True)
    w = Vh.conj().T @ ((U.conj().T @ values) / sv)
    return WeightFit(w, cond)


def measure(scheme: Scheme, t_noisy: np.ndarray, k: int, perm: HashParams | None = None) -> SchemeMeasurement:
    """Pick the distances a scheme observes from a noisy first column."""
    d = t_noisy.shape[0]
    scheme = Scheme(scheme)
    if scheme is Scheme.ALL:
        dist = np.arange(d)
    elif scheme is Scheme.FIRST_OK:
        dist = np.arange(min(4 * k, d))
    else:
        if perm is None:
            raise ValueError("permuted scheme needs a permutation")
        s = np.arange(min(4 * k, d), dtype=np.int64)
        dist = (perm.a_inv * s + perm.c) % d
    return SchemeMeasurement(scheme, dist, t_noisy[dist], perm)


def estimate_from_measurement(meas: SchemeMeasurement, k: int, d: int, grid_size: int | None = None):
    """MUSIC, peak picking, on-grid snapping and least squares.

    The permuted scheme sees the sequence ``t[g^-1(s)]`` whose frequencies
    are dilated by ``a^-1``; peaks are snapped to the grid, undilated, and
    the weights are fitted on the original distances.
    """
    grid_size = grid_size or 4 * d
    flags: list[str] = []
    ps = music_pseudospectrum(meas.values, k, grid_size)
    if ps.degenerate:
        flags.append("degenerate_spectrum")
    peaks = find_peaks(ps.values, k)
    if peaks.padded:
        flags.append("padded_peaks")
    grid_idx = np.round(peaks.indices * d / grid_size).astype(np.int64) % d
    if meas.scheme is Scheme.PERMUTED_OK:
        p = meas.perm
        # the observed sequence carries frequency j at a_inv * j mod d
        hashed = HashParams(p.a_inv, 0, 0, d)
        freqs, _ = unhash_decomposition(grid_idx, np.ones(len(grid_idx)), hashed)
    else:
        freqs = grid_idx / d
    _, first = np.unique(np.round(np.asarray(freqs) * d).astype(np.int64) % d, return_index=True)
    if len(first) < len(freqs):
        # repeated columns carry no information and only wreck the conditioning
        flags.append("duplicate_frequencies")
        freqs = np.asarray(freqs)[np.sort(first)]
    fit = ls_weights(freqs, meas.distances, meas.values)
    if fit.ill_conditioned:
        flags.append("ill_conditioned")
    return np.asarray(freqs), fit.weights, flags


def run_scheme(scheme, gt: GroundTruth, nu: float, k: int, rng: np.random.Generator,
               perm: HashParams | None = None, grid_size: int | None = None,
               t_noisy: np.ndarray | None = None) -> SchemeResult:
    """Reconstruct ``t`` from one scheme's noisy measurements.

    Noise is drawn from ``rng`` unless ``t_noisy`` is supplied. For the
    permuted scheme a fresh unit ``a`` with ``c = 0`` is drawn when ``perm``
    is not given. Returns the full reconstruction and
    ``||t - t~|| / ||t||``.
    """
    scheme = Scheme(scheme)
    d = gt.d
    t = build_first_column(gt)
    if t_noisy is None:
        t_noisy = add_entry_noise(t, nu, rng)
    if scheme is Scheme.PERMUTED_OK and perm is None:
        perm = HashParams(random_unit(d, rng), 0, 0, d)
    meas = measure(scheme, t_noisy, k, perm)
    freqs, weights, flags = estimate_from_measurement(meas, k, d, grid_size)
    s = np.arange(d)
    t_est = (np.exp(2j * np.pi * np.outer(s, freqs)) @ weights).real
    err = float(np.linalg.norm(t - t_est) / np.linalg.norm(t))
    return SchemeResult(t_est, err, freqs, weights, flags)
