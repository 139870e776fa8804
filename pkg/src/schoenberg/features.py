"""Random Fourier features for kernels given by a particle ensemble.

Each feature picks a particle xi, then omega ~ N(0, 2 xi I) and
b ~ U[-pi, pi]; sqrt(2/D) cos(<omega, x> + b) has inner products whose mean
is the kernel.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .measure import ParticleEnsemble, RandomSource


@dataclass(frozen=True, eq=False)
class FeatureBank:
    frequencies: np.ndarray  # (D, d)
    phases: np.ndarray  # (D,)
    source_particles: np.ndarray  # (D,)
    seed: int | None = None

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        b = np.asarray(self.phases, dtype=float).reshape(-1)
        s = np.asarray(self.source_particles, dtype=float).reshape(-1)
        if not (w.shape[0] == b.size == s.size):
            raise DimensionError("frequency, phase and particle counts differ", "features")
        if np.any(np.abs(b) > np.pi):
            raise ValueError("phases must lie in [-pi, pi]")
        for a in (w, b, s):
            a.setflags(write=False)
        object.__setattr__(self, "frequencies", w)
        object.__setattr__(self, "phases", b)
        object.__setattr__(self, "source_particles", s)

    @property
    def count(self) -> int:
        return self.phases.size

    @property
    def dimension(self) -> int:
        return self.frequencies.shape[1]

    def __len__(self):
        return self.count


def draw_features(ensemble: ParticleEnsemble | np.ndarray, count: int, dimension: int,
                  rng: RandomSource, stratified: bool = False) -> FeatureBank:
    """Sample ``count`` features from the ensemble's frequency mixture.

    ``stratified`` cycles through the particles in order instead of picking
    one uniformly per feature.
    """
    if count < 1 or dimension < 1:
        raise ValueError("count and dimension must be positive")
    xi = ensemble.particles if isinstance(ensemble, ParticleEnsemble) else np.asarray(ensemble, float)
    if stratified:
        src = xi[np.arange(count) % xi.size]
    else:
        src = xi[rng.integers(0, xi.size, size=count)]
    omega = rng.standard_normal((count, dimension)) * np.sqrt(2.0 * src)[:, None]
    b = rng.uniform(-np.pi, np.pi, size=count)
    return FeatureBank(omega, b, src, rng.seed)


def gaussian_bank(bandwidth_sq: float, count: int, dimension: int, rng: RandomSource) -> FeatureBank:
    """Features for exp(-|x-y|^2 / bandwidth_sq), a one-particle ensemble."""
    return draw_features(np.array([1.0 / bandwidth_sq]), count, dimension, rng)


def projections(bank: FeatureBank, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != bank.dimension:
        raise DimensionError(f"input dimension {x.shape[-1]} but bank has {bank.dimension}",
                             "features")
    return x @ bank.frequencies.T + bank.phases


def feature_map(bank: FeatureBank, x) -> np.ndarray:
    """sqrt(2/D) cos(<omega_k, x> + b_k); accepts one vector or a matrix of rows."""
    return np.sqrt(2.0 / bank.count) * np.cos(projections(bank, x))


def save_bank(bank: FeatureBank, path) -> None:
    """CSV: header row D,d,seed then one row per feature: omega..., b, xi."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["D", "d", "seed"])
        w.writerow([bank.count, bank.dimension, "" if bank.seed is None else bank.seed])
        w.writerow([f"omega{j}" for j in range(bank.dimension)] + ["b", "xi"])
        for om, b, s in zip(bank.frequencies, bank.phases, bank.source_particles):
            w.writerow([repr(float(v)) for v in om] + [repr(float(b)), repr(float(s))])


def load_bank(path) -> FeatureBank:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        D, d, seed = next(r)
        D, d = int(D), int(d)
        next(r)
        rows = np.array([[float(v) for v in row] for row in r if row])
    if rows.shape != (D, d + 2):
        raise DimensionError(f"expected {D} rows of {d + 2} values, got {rows.shape}", "features")
    return FeatureBank(rows[:, :d], rows[:, d], rows[:, d + 1], int(seed) if seed else None)
