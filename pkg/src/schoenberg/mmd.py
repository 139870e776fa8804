"""Unbiased random-feature MMD, the threshold test and its power."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .features import FeatureBank, feature_map
from .measure import RandomSource
from .synthetic import gaussian_pair, random_projection

H0, H1 = "H0", "H1"


@dataclass(frozen=True, eq=False)
class TwoSampleData:
    samples_v: np.ndarray
    samples_w: np.ndarray

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.samples_v, dtype=float))
        w = np.atleast_2d(np.asarray(self.samples_w, dtype=float))
        if v.shape[0] < 2 or w.shape[0] < 2:
            raise ValueError("each sample needs at least two points")
        if v.shape[1] != w.shape[1]:
            raise DimensionError("samples differ in dimension", "mmd")
        object.__setattr__(self, "samples_v", v)
        object.__setattr__(self, "samples_w", w)

    def swapped(self) -> "TwoSampleData":
        return TwoSampleData(self.samples_w, self.samples_v)


@dataclass(frozen=True)
class MmdOutcome:
    statistic: float
    threshold: float
    decision: str


def _u_and_sum(phi):
    total = phi.sum(axis=0)
    m = phi.shape[0]
    within = (total @ total - np.einsum("ij,ij->", phi, phi)) / (m * (m - 1))
    return within, total


def mmd_from_features(phi_v: np.ndarray, phi_w: np.ndarray) -> float:
    uv, sv = _u_and_sum(phi_v)
    uw, sw = _u_and_sum(phi_w)
    cross = (sv @ sw) / (phi_v.shape[0] * phi_w.shape[0])
    return float(uv + uw - 2.0 * cross)


def mmd_unbiased(data: TwoSampleData, bank: FeatureBank) -> float:
    """Within-sample U-statistics minus twice the cross mean, via the feature map."""
    return mmd_from_features(feature_map(bank, data.samples_v), feature_map(bank, data.samples_w))


def mmd_unbiased_kernel(data: TwoSampleData, kernel) -> float:
    """Same estimator with exact kernel evaluations; ``kernel(a, b)`` returns a Gram matrix."""
    kv, kw, kc = kernel(data.samples_v, data.samples_v), kernel(data.samples_w, data.samples_w), \
        kernel(data.samples_v, data.samples_w)
    m, n = kv.shape[0], kw.shape[0]
    uv = (kv.sum() - np.trace(kv)) / (m * (m - 1))
    uw = (kw.sum() - np.trace(kw)) / (n * (n - 1))
    return float(uv + uw - 2.0 * kc.mean())


def decide(statistic: float, tau: float) -> MmdOutcome:
    return MmdOutcome(float(statistic), float(tau), H1 if statistic > tau else H0)


def run_test(data: TwoSampleData, bank: FeatureBank, tau: float) -> MmdOutcome:
    return decide(mmd_unbiased(data, bank), tau)


def synthetic_statistics(lam: float, dims, sizes, trials: int, bank: FeatureBank,
                         rng: RandomSource, projection: np.ndarray | None = None) -> np.ndarray:
    """MMD statistics of ``trials`` fresh draws from the Gaussian variance model.

    ``dims`` is (d, d0): samples live in R^d and are mapped to R^d0 by
    ``projection`` (drawn from ``rng`` when omitted and d0 != d).
    """
    d, d0 = dims
    m, n = sizes
    if projection is None and d0 != d:
        projection = random_projection(d, d0, rng.child(0))
    stats = np.empty(trials)
    for t in range(trials):
        v, w = gaussian_pair(m, n, lam, d, rng.child(1, t))
        if projection is not None:
            v, w = v @ projection.T, w @ projection.T
        stats[t] = mmd_from_features(feature_map(bank, v), feature_map(bank, w))
    return stats


def power_curve(statistics: np.ndarray, tau_grid) -> list:
    """Fraction of statistics above each threshold."""
    s = np.asarray(statistics)
    return [(float(t), float(np.mean(s > t))) for t in tau_grid]


def estimate_power(lam: float, dims, sizes, trials: int, tau_grid, bank: FeatureBank,
                   rng: RandomSource, projection: np.ndarray | None = None) -> list:
    if not 0 <= lam < 1:
        raise ValueError("lambda must lie in [0, 1)")
    if trials < 1:
        raise ValueError("trials must be positive")
    stats = synthetic_statistics(lam, dims, sizes, trials, bank, rng, projection)
    return power_curve(stats, tau_grid)


def null_threshold(dims, sizes, trials: int, bank: FeatureBank, rng: RandomSource,
                   level: float = 0.05, projection: np.ndarray | None = None) -> float:
    """(1 - level) quantile of the statistic when both samples share one law."""
    stats = synthetic_statistics(0.0, dims, sizes, trials, bank, rng, projection)
    return float(np.quantile(stats, 1.0 - level))


def permutation_threshold(data: TwoSampleData, bank: FeatureBank, permutations: int,
                          rng: RandomSource, level: float = 0.05) -> float:
    """(1 - level) quantile of the statistic under random relabelling of the pooled sample."""
    phi = np.vstack([feature_map(bank, data.samples_v), feature_map(bank, data.samples_w)])
    m = data.samples_v.shape[0]
    stats = np.empty(permutations)
    for p in range(permutations):
        idx = rng.permutation(phi.shape[0])
        stats[p] = mmd_from_features(phi[idx[:m]], phi[idx[m:]])
    return float(np.quantile(stats, 1.0 - level))
