"""Kernel under an empirical measure, alignment, the regularized risk and its gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidDatasetError
from .measure import LabeledDataset, PairSample, ParticleEnsemble, check_same_size
from .sinkhorn import (DEFAULT_TOLERANCE, TransportPlan, sinkhorn_divergence,
                       sinkhorn_gradient)


@dataclass(frozen=True, eq=False)
class KernelUnderMeasure:
    ensemble: ParticleEnsemble

    @property
    def particles(self):
        return self.ensemble.particles

    def __call__(self, x, y):
        return kernel_value(self, x, y)

    def from_squared_distance(self, d2):
        """Kernel as a function of squared distance; accepts arrays."""
        d2 = np.asarray(d2, dtype=float)
        xi = self.ensemble.particles
        return np.exp(-np.multiply.outer(d2, xi)).mean(axis=-1)


@dataclass(frozen=True)
class ObjectiveConfig:
    gamma: float
    lagrange_h: float = 0.0
    epsilon: float = 0.05

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not self.lagrange_h >= 0:
            raise ValueError("lagrange_h must be non-negative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


def _as_kernel(k):
    return k if isinstance(k, KernelUnderMeasure) else KernelUnderMeasure(k)


def kernel_value(k, x, y) -> float:
    k = _as_kernel(k)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionError(f"vectors have shapes {x.shape} and {y.shape}", "objective")
    d2 = float(np.sum((x - y) ** 2))
    return float(np.mean(np.exp(-k.ensemble.particles * d2)))


def kernel_matrix(k, a, b=None) -> np.ndarray:
    """Gram matrix between rows of ``a`` and ``b``."""
    k = _as_kernel(k)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise DimensionError("row dimensions differ", "objective")
    d2 = np.maximum(np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2 * a @ b.T, 0.0)
    out = np.zeros_like(d2)
    for xi in k.ensemble.particles:
        out += np.exp(-xi * d2)
    return out / len(k.ensemble)


def _require_pairs(data: LabeledDataset):
    if data.count < 2:
        raise InvalidDatasetError("need at least two points", "objective")


def _pair_kernel(xi, d2):
    """Returns (per-particle exp terms [pairs, N], mean kernel [pairs])."""
    e = np.exp(-np.multiply.outer(d2, xi))
    return e, e.mean(axis=1)


def alignment(k, data: LabeledDataset) -> float:
    _require_pairs(data)
    k = _as_kernel(k)
    d2, yy = data.upper_pairs
    _, kbar = _pair_kernel(k.ensemble.particles, d2)
    return float(np.mean(yy * kbar))


def regularized_risk(k, data: LabeledDataset, cfg: ObjectiveConfig) -> float:
    _require_pairs(data)
    k = _as_kernel(k)
    d2, yy = data.upper_pairs
    _, kbar = _pair_kernel(k.ensemble.particles, d2)
    return float(np.mean((cfg.gamma * yy - kbar) ** 2) / cfg.gamma)


def pair_loss(ensemble: ParticleEnsemble, pair: PairSample, cfg: ObjectiveConfig) -> float:
    kbar = float(np.mean(np.exp(-ensemble.particles * pair.squared_distance)))
    return (cfg.gamma * pair.label_product - kbar) ** 2 / cfg.gamma


def pair_risk_gradient(xi: np.ndarray, d2: float, yy: float, gamma: float) -> np.ndarray:
    """d/dxi of (gamma*yy - Kbar)^2 / gamma for one pair."""
    e = np.exp(-xi * d2)
    return (2.0 / xi.size) * (yy - e.mean() / gamma) * d2 * e


def risk_gradient(xi: np.ndarray, data: LabeledDataset, gamma: float,
                  include_diagonal: bool = False) -> np.ndarray:
    """Gradient of the risk averaged over pairs i < j.

    With ``include_diagonal`` the average runs over all n^2 ordered pairs, the
    expectation of the stochastic gradient under independent index draws.
    """
    d2, yy = data.upper_pairs
    e, kbar = _pair_kernel(xi, d2)
    coef = (yy - kbar / gamma) * d2
    g = (2.0 / xi.size) * (coef @ e) / d2.size
    if include_diagonal:
        n = data.count
        g *= (n - 1) / n
    return g


def surrogate_objective(ensemble: ParticleEnsemble, data: LabeledDataset, cfg: ObjectiveConfig,
                        reference: ParticleEnsemble | None = None,
                        tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Risk plus (h/2) times the sharp divergence to the reference."""
    value = regularized_risk(ensemble, data, cfg)
    if cfg.lagrange_h > 0:
        check_same_size(ensemble, reference, "objective")
        value += 0.5 * cfg.lagrange_h * sinkhorn_divergence(
            ensemble, reference, cfg.epsilon, tolerance).value
    return value


def _transport_term(ensemble, reference, cfg, plan, tolerance):
    check_same_size(ensemble, reference, "objective")
    if plan is None:
        plan = sinkhorn_divergence(ensemble, reference, cfg.epsilon, tolerance).plan
    return 0.5 * cfg.lagrange_h * sinkhorn_gradient(ensemble, reference, plan,
                                                    max_residual=max(tolerance, plan.tolerance))


def stochastic_gradient(ensemble: ParticleEnsemble, pair: PairSample, cfg: ObjectiveConfig,
                        reference: ParticleEnsemble | None = None,
                        plan: TransportPlan | None = None,
                        tolerance: float = DEFAULT_TOLERANCE) -> np.ndarray:
    g = pair_risk_gradient(ensemble.particles, pair.squared_distance, pair.label_product, cfg.gamma)
    if cfg.lagrange_h > 0:
        g = g + _transport_term(ensemble, reference, cfg, plan, tolerance)
    return g


def full_gradient(ensemble: ParticleEnsemble, data: LabeledDataset, cfg: ObjectiveConfig,
                  reference: ParticleEnsemble | None = None, plan: TransportPlan | None = None,
                  tolerance: float = DEFAULT_TOLERANCE, include_diagonal: bool = False) -> np.ndarray:
    _require_pairs(data)
    g = risk_gradient(ensemble.particles, data, cfg.gamma, include_diagonal)
    if cfg.lagrange_h > 0:
        g = g + _transport_term(ensemble, reference, cfg, plan, tolerance)
    return g
