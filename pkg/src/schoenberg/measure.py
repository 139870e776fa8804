"""Particle ensembles, labeled datasets, pair sampling and seeded randomness."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, InvalidDatasetError


@dataclass(frozen=True)
class SupportInterval:
    lower: float
    upper: float

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo < 0 or not lo < hi:
            raise ValueError(f"need 0 <= lower < upper < inf, got [{lo}, {hi}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, values) -> bool:
        v = np.asarray(values, dtype=float)
        return bool(np.all((v >= self.lower) & (v <= self.upper)))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    """N scalar particles inside a support interval.

    The empirical measure puts mass 1/N on each particle.
    """

    particles: np.ndarray
    support: SupportInterval

    def __post_init__(self):
        p = _frozen(self.particles).reshape(-1)
        if p.size < 1:
            raise ValueError("ensemble needs at least one particle")
        if not np.all(np.isfinite(p)):
            raise ValueError("particles must be finite")
        if not self.support.contains(p):
            raise ValueError("particles outside the support interval")
        object.__setattr__(self, "particles", p)

    def __len__(self):
        return self.particles.size

    @property
    def size(self) -> int:
        return self.particles.size

    @classmethod
    def uniform(cls, count: int, support: SupportInterval, rng: "RandomSource"):
        """Independent uniform draws on the support."""
        return cls(rng.uniform(support.lower, support.upper, size=count), support)


def empirical_measure_weights(ensemble: ParticleEnsemble):
    n = len(ensemble)
    w = 1.0 / n
    return [(float(x), w) for x in ensemble.particles]


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Dense features (n x d) with labels in {-1, +1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=float, copy=True)
        if x.ndim == 1:
            x = x.reshape(-1, 1)
        if x.ndim != 2:
            raise InvalidDatasetError("features must be a 2-d array", "measure")
        y = np.asarray(self.labels).reshape(-1)
        if y.shape[0] != x.shape[0]:
            raise InvalidDatasetError(
                f"{x.shape[0]} feature rows but {y.shape[0]} labels", "measure")
        if x.shape[0] < 1:
            raise InvalidDatasetError("empty dataset", "measure")
        if not np.all(np.isfinite(x)):
            raise InvalidDatasetError("features must be finite", "measure")
        bad = ~np.isin(y, (-1, 1))
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise InvalidDatasetError(f"label {y[i]!r} at row {i} is not -1 or +1", "measure")
        x.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", _frozen(y, dtype=float))

    @property
    def count(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @cached_property
    def squared_distances(self) -> np.ndarray:
        x = self.features
        sq = np.einsum("ij,ij->i", x, x)
        d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(d2, 0.0, out=d2)
        np.fill_diagonal(d2, 0.0)
        # Gram-trick rounding can break exact symmetry
        d2 = 0.5 * (d2 + d2.T)
        if not np.all(np.isfinite(d2)):
            raise InvalidDatasetError("squared distances overflow", "measure")
        d2.setflags(write=False)
        return d2

    @cached_property
    def label_products(self) -> np.ndarray:
        yy = np.outer(self.labels, self.labels)
        yy.setflags(write=False)
        return yy

    @cached_property
    def upper_pairs(self):
        """(squared distances, label products) over pairs i < j."""
        iu = np.triu_indices(self.count, 1)
        return self.squared_distances[iu], self.label_products[iu]

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index)
        return LabeledDataset(self.features[index], self.labels[index])


@dataclass(frozen=True)
class PairSample:
    first: tuple
    second: tuple
    squared_distance: float
    indices: tuple = field(default=(None, None))

    @property
    def label_product(self) -> float:
        return float(self.first[1] * self.second[1])


class RandomSource:
    """Seeded stream built on numpy's PCG64.

    Children are derived from the root seed plus a key path, so workers get
    independent but reproducible streams regardless of creation order.
    """

    def __init__(self, seed: int = 0, key: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.key = tuple(int(k) for k in key)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))
        self.calls = 0

    def child(self, *key: int) -> "RandomSource":
        return RandomSource(self.seed, self.key + tuple(key))

    def integers(self, low, high=None, size=None):
        self.calls += 1
        return self.generator.integers(low, high, size=size)

    def uniform(self, low=0.0, high=1.0, size=None):
        self.calls += 1
        return self.generator.uniform(low, high, size=size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        self.calls += 1
        return self.generator.normal(loc, scale, size=size)

    def standard_normal(self, size=None):
        self.calls += 1
        return self.generator.standard_normal(size)

    def choice(self, a, size=None, replace=True, p=None):
        self.calls += 1
        return self.generator.choice(a, size=size, replace=replace, p=p)

    def permutation(self, x):
        self.calls += 1
        return self.generator.permutation(x)

    def __repr__(self):
        return f"RandomSource(seed={self.seed}, key={self.key}, calls={self.calls})"


def as_random_source(rng) -> RandomSource:
    if isinstance(rng, RandomSource):
        return rng
    if rng is None:
        return RandomSource(0)
    return RandomSource(int(rng))


def sample_pair(data: LabeledDataset, rng: RandomSource) -> PairSample:
    """Two independent uniform indices; they may coincide."""
    if data.count < 2:
        raise InvalidDatasetError("pair sampling needs at least two points", "measure")
    i, j = (int(v) for v in rng.integers(0, data.count, size=2))
    d2 = float(np.sum((data.features[i] - data.features[j]) ** 2))
    return PairSample((data.features[i], float(data.labels[i])),
                      (data.features[j], float(data.labels[j])), d2, (i, j))


def sample_pair_indices(data: LabeledDataset, rng: RandomSource, count: int) -> np.ndarray:
    """Batch version of the index draw behind sample_pair, shape (count, 2)."""
    if data.count < 2:
        raise InvalidDatasetError("pair sampling needs at least two points", "measure")
    return rng.integers(0, data.count, size=(count, 2))


def dataset_diameter(data: LabeledDataset) -> float:
    if data.count < 2:
        return 0.0
    return float(np.sqrt(data.squared_distances.max()))


def check_same_size(a: ParticleEnsemble, b: ParticleEnsemble, module: str):
    if len(a) != len(b):
        raise DimensionError(f"ensembles have {len(a)} and {len(b)} particles", module)
