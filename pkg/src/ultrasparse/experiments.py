"""Seeded experiment sweeps: the clustered-frequency MUSIC comparison, the
end-to-end circulant estimation check and the sample-size consistency run.

Seeds are split with :class:`numpy.random.SeedSequence` spawn keys, so every
cell's randomness depends only on the master seed and the cell's position
in the factorial design, never on execution order.

Spawn keys:

* ``(0,)`` ground truth
* ``(1, perm)`` permutation of index ``perm``
* ``(2, nu, perm, trial)`` entry noise of one trial (shared by all schemes)
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .estimator import (
    circulant_from_autocovariance,
    estimate_circulant_covariance,
    exact_autocovariance,
    running_autocovariance,
    frobenius_gap,
)
from .hashing import HashParams, random_unit
from .music import Scheme, run_scheme
from .rulers import union_budget, union_ruler_for_sft
from .sfft import SftConfig, plan_blocks
from .synth import (
    WEIGHT_RANGE,
    GaussianRulerSampler,
    GroundTruth,
    add_entry_noise,
    build_first_column,
    clustered_frequencies,
    random_on_grid_truth,
    sample_gaussian_on_ruler,
)

CSV_HEADER = ("scheme", "nu", "perm_seed", "trial_seed", "error", "flags")

# Smallest power of ten for which the weakest component (weight 0.5 x scale)
# clears the ~32 sqrt(nu) amplitude a 24-lag frequency estimate needs to land
# within a quarter grid cell at d=2400, nu=1.
CLUSTERED_WEIGHT_SCALE = 100.0


def _seed_int(master: int, *key: int) -> int:
    ss = np.random.SeedSequence(master, spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fmt(x: float) -> str:
    return repr(float(x)) if not math.isfinite(x) else f"{x:.17g}"


@dataclass
class ExperimentConfig:
    d: int = 2400
    k: int = 6
    nu_grid: list[float] = field(default_factory=lambda: [0.1, 0.25, 0.5, 0.75, 1.0])
    n_perms: int = 10
    n_trials: int = 20
    seed: int = 0
    schemes: list[str] = field(default_factory=lambda: [s.value for s in Scheme])
    output: str | None = None
    min_gap: float = 0.01
    weight_scale: float = 1.0
    truth: str | None = None
    grid_size: int | None = None
    check_ordering: bool = True
    min_perm_gain: float | None = None
    gain_nu: float = 0.5

    def __post_init__(self):
        self.nu_grid = [float(v) for v in self.nu_grid]
        self.schemes = [Scheme(s).value for s in self.schemes]
        if not self.nu_grid:
            raise ValueError("nu_grid must not be empty")
        if any(v < 0 for v in self.nu_grid):
            raise ValueError("noise variances must be nonnegative")
        if self.n_perms < 1 or self.n_trials < 1:
            raise ValueError("n_perms and n_trials must be at least 1")
        if not self.schemes:
            raise ValueError("at least one scheme is required")
        if self.weight_scale <= 0:
            raise ValueError("weight_scale must be positive")

    @classmethod
    def clustered(cls, **overrides) -> "ExperimentConfig":
        """The clustered-frequency comparison at d=2400, k=6 with its thresholds."""
        base = dict(weight_scale=CLUSTERED_WEIGHT_SCALE, min_perm_gain=0.25)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_dict(cls, spec: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(spec) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**spec)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ResultRecord:
    scheme: str
    nu: float
    perm_seed: int
    trial_seed: int
    error: float
    flags: tuple[str, ...] = ()

    @property
    def key(self):
        return (self.scheme, self.nu, self.perm_seed, self.trial_seed)

    def row(self) -> list[str]:
        return [self.scheme, _fmt(self.nu), str(self.perm_seed), str(self.trial_seed),
                _fmt(self.error), ";".join(self.flags)]


@dataclass
class ClusteredResult:
    records: list[ResultRecord]
    truth: GroundTruth
    config: ExperimentConfig

    def cells(self) -> dict[tuple[str, float], np.ndarray]:
        out: dict[tuple[str, float], list[float]] = {}
        for r in self.records:
            out.setdefault((r.scheme, r.nu), []).append(r.error)
        return {key: np.asarray(v) for key, v in out.items()}

    def summary(self) -> list[dict]:
        """Mean, median and failure count for every (scheme, nu) cell."""
        rows = []
        for (scheme, nu), errs in sorted(self.cells().items(), key=lambda kv: (kv[0][1], kv[0][0])):
            finite = errs[np.isfinite(errs)]
            rows.append(dict(scheme=scheme, nu=nu, n=len(errs),
                             mean=float(np.mean(finite)) if finite.size else math.nan,
                             median=float(np.median(finite)) if finite.size else math.nan,
                             failed=int(len(errs) - finite.size)))
        return rows

    def means(self) -> dict[tuple[str, float], float]:
        return {(r["scheme"], r["nu"]): r["mean"] for r in self.summary()}

    def checks(self) -> dict[str, bool]:
        """Threshold checks requested by the config."""
        cfg = self.config
        means = self.means()
        out = {}
        order = [s for s in ("all", "perm", "first") if s in cfg.schemes]
        if cfg.check_ordering and len(order) > 1:
            ok = True
            for nu in cfg.nu_grid:
                vals = [means[(s, nu)] for s in order]
                ok &= all(a <= b for a, b in zip(vals, vals[1:]))
            out["ordering"] = bool(ok)
        if cfg.min_perm_gain is not None:
            first = means.get(("first", cfg.gain_nu))
            perm = means.get(("perm", cfg.gain_nu))
            if first is None or perm is None:
                out["perm_gain"] = False
            else:
                out["perm_gain"] = bool(perm <= (1 - cfg.min_perm_gain) * first)
        return out


def clustered_truth(cfg: ExperimentConfig) -> GroundTruth:
    if cfg.truth is not None:
        gt = GroundTruth.load(cfg.truth)
        if gt.d != cfg.d:
            raise ValueError(f"truth has d={gt.d}, config has d={cfg.d}")
        return gt
    lo, hi = WEIGHT_RANGE
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(0,)))
    return clustered_frequencies(cfg.k, cfg.min_gap, cfg.d, rng,
                                 weight_range=(lo * cfg.weight_scale, hi * cfg.weight_scale))


def run_clustered(cfg: ExperimentConfig) -> ClusteredResult:
    """Full factorial sweep over schemes x nu x permutations x trials.

    Every trial draws one noisy first column that all schemes see. A scheme
    that raises is recorded with ``error = nan`` and the exception name in
    its flags; the sweep always completes.
    """
    gt = clustered_truth(cfg)
    t = build_first_column(gt)
    records = []
    for p_idx in range(cfg.n_perms):
        perm_seed = _seed_int(cfg.seed, 1, p_idx)
        perm = HashParams(random_unit(cfg.d, np.random.default_rng(perm_seed)), 0, 0, cfg.d)
        for nu_idx, nu in enumerate(cfg.nu_grid):
            for trial in range(cfg.n_trials):
                trial_seed = _seed_int(cfg.seed, 2, nu_idx, p_idx, trial)
                t_noisy = add_entry_noise(t, nu, np.random.default_rng(trial_seed))
                for scheme in cfg.schemes:
                    try:
                        res = run_scheme(scheme, gt, nu, cfg.k, None, perm=perm,
                                         grid_size=cfg.grid_size, t_noisy=t_noisy)
                        err, flags = res.error, tuple(res.flags)
                    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
                        err, flags = math.nan, (type(exc).__name__,)
                    records.append(ResultRecord(scheme, nu, perm_seed, trial_seed, err, flags))
    records.sort(key=lambda r: r.key)
    return ClusteredResult(records, gt, cfg)


def records_to_csv(records, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, newline="")
    return text


def summary_to_csv(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("scheme", "nu", "n", "mean", "median", "failed"))
    for r in rows:
        w.writerow((r["scheme"], _fmt(r["nu"]), r["n"], _fmt(r["mean"]), _fmt(r["median"]), r["failed"]))
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, newline="")
    return text


@dataclass
class EstimatorTrial:
    seed: int
    lhs: float
    rhs: float
    rel_error: float
    entries_read: int
    budget: int
    n: int
    norm_T: float = math.nan

    @property
    def success(self) -> bool:
        return self.lhs <= self.rhs


@dataclass
class EstimatorSummary:
    d: int
    k: int
    epsilon: float
    trials: list[EstimatorTrial]

    @property
    def success_rate(self) -> float:
        return sum(t.success for t in self.trials) / len(self.trials)

    def quantiles(self, q=(0.1, 0.5, 0.9)) -> dict[float, float]:
        ratios = np.array([t.lhs / t.rhs for t in self.trials])
        return {float(x): float(np.quantile(ratios, x)) for x in q}


def run_estimator_trials(d: int, k: int, epsilon: float, trials: int, seed: int = 0,
                 exact: bool = False, sample_constant: float = 4.0) -> EstimatorSummary:
    """Repeat the circulant estimator on fresh exactly rank-``k`` PSD truths.

    A trial succeeds when ``||T - T~||_F <= 5 eps ||T||_F + 2 min_rank-k``.
    With ``exact`` the estimator sees the true autocovariance on every
    measured distance instead of a sample average.
    """
    out = []
    for i in range(trials):
        trial_seed = _seed_int(seed, i)
        rng = np.random.default_rng(trial_seed)
        gt = random_on_grid_truth(d, k, rng)
        t = build_first_column(gt)
        sft_seed = int(rng.integers(2**31))
        if exact:
            cfg = SftConfig.default(d, k, epsilon / math.sqrt(d), sft_seed)
            ruler, _ = union_ruler_for_sft(d, k, cfg.delta, np.random.default_rng(cfg.seed), cfg)
            plan = plan_blocks(d, cfg, np.random.default_rng(cfg.seed))
            est = circulant_from_autocovariance(exact_autocovariance(t, ruler), cfg, plan=plan)
            reads, budget, n = len(ruler), union_budget(cfg), 0
        else:
            sampler = GaussianRulerSampler(t, rng)
            est = estimate_circulant_covariance(sampler, d, k, epsilon, seed=sft_seed,
                                                sample_constant=sample_constant)
            reads, budget, n = len(sampler.entries_read), est.info["budget"], est.n_used
        lhs, rhs = frobenius_gap(t, est.z, k, epsilon)
        rel = float(np.linalg.norm(t - est.z) / np.linalg.norm(t))
        norm_T = math.sqrt(d) * float(np.linalg.norm(t))
        out.append(EstimatorTrial(trial_seed, lhs, rhs, rel, reads, budget, n, norm_T))
    return EstimatorSummary(d, k, epsilon, out)


@dataclass
class ConsistencyResult:
    sample_sizes: list[int]
    medians: list[float]

    @property
    def ratios(self) -> list[float]:
        return [b / a for a, b in zip(self.medians, self.medians[1:])]


def run_consistency(d: int = 256, k: int = 4, epsilon: float = 0.25, n0: int = 2**12,
                    doublings: int = 3, trials: int = 300, seed: int = 0) -> ConsistencyResult:
    """Median ``||t_bar - t||`` over the measured distances as ``n`` doubles.

    One truth and one union ruler are fixed. Each trial draws one stream of
    ``n0 * 2**doublings`` samples and evaluates the estimate on its nested
    prefixes, which keeps consecutive medians positively correlated.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    gt = random_on_grid_truth(d, k, rng)
    t = build_first_column(gt)
    ruler, _ = union_ruler_for_sft(d, k, epsilon / math.sqrt(d), rng)
    sizes = [n0 * 2**i for i in range(doublings + 1)]
    errs = np.empty((trials, len(sizes)))
    for trial in range(trials):
        trng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, trial)))
        stream = sample_gaussian_on_ruler(t, ruler, sizes[-1], trng, batch_size=n0)
        for j, tbar in enumerate(running_autocovariance(stream, ruler, sizes)):
            errs[trial, j] = np.linalg.norm(tbar.values - t[tbar.distances])
    return ConsistencyResult(sizes, [float(m) for m in np.median(errs, axis=0)])


__all__ = [
    "CSV_HEADER", "CLUSTERED_WEIGHT_SCALE", "ExperimentConfig", "ResultRecord", "ClusteredResult",
    "clustered_truth", "run_clustered", "records_to_csv", "summary_to_csv", "EstimatorTrial",
    "EstimatorSummary", "run_estimator_trials", "ConsistencyResult", "run_consistency",
]
