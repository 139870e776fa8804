"""Synthetic Gaussian data used by the experiments and tests."""
from __future__ import annotations

import numpy as np

from .measure import LabeledDataset, RandomSource


def random_projection(d_in: int, d_out: int, rng: RandomSource) -> np.ndarray:
    """Fixed linear map R^d_in -> R^d_out with entries N(0, 1/d_out)."""
    return rng.normal(0.0, 1.0 / np.sqrt(d_out), size=(d_out, d_in))


def gaussian_pair(m: int, n: int, lam: float, d: int, rng: RandomSource):
    """Samples from N(0,(1+lam)I_d) and N(0,(1-lam)I_d)."""
    if not 0 <= lam < 1:
        raise ValueError("lambda must lie in [0, 1)")
    v = rng.normal(0.0, np.sqrt(1.0 + lam), size=(m, d))
    w = rng.normal(0.0, np.sqrt(1.0 - lam), size=(n, d))
    return v, w


def variance_task(n: int, d: int, lam: float, rng: RandomSource, scale: float = 1.0,
                  projection: np.ndarray | None = None) -> LabeledDataset:
    """Balanced two-class task: +1 from the wide Gaussian, -1 from the narrow one.

    Features are optionally mapped by ``projection`` and then divided by ``scale``.
    Rows alternate between classes so any prefix stays balanced.
    """
    n_pos = (n + 1) // 2
    v, w = gaussian_pair(n_pos, n - n_pos, lam, d, rng)
    x = np.empty((n, d))
    x[0::2], x[1::2] = v, w
    y = np.empty(n)
    y[0::2], y[1::2] = 1.0, -1.0
    if projection is not None:
        x = x @ projection.T
    return LabeledDataset(x / scale, y)


def blobs(n: int, centers: np.ndarray, spread: float, rng: RandomSource):
    """Isotropic Gaussian blobs; returns points and true cluster ids."""
    centers = np.asarray(centers, dtype=float)
    ids = rng.integers(0, centers.shape[0], size=n)
    pts = centers[ids] + rng.normal(0.0, spread, size=(n, centers.shape[1]))
    return pts, ids
