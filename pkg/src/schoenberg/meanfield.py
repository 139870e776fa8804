"""Finite-volume solver for the mean-field density of the particle dynamics.

The density p(t, xi) on the support interval evolves by

    dp/dt = d/dxi (p dJ/dxi) + (1/beta) d^2p/dxi^2,   zero flux at both ends,

with the potential

    J(xi, p) = -E[y y' exp(-xi d^2)] + (1/gamma) int E[exp(-(xi + s) d^2)] p(s) ds,

where expectations run over the pairs of the training set and d^2 is the
pair's squared distance. Particles driven by the stochastic gradient (scaled
by N/2) follow -dJ/dxi on average, so exp(-beta J) is the stationary law.

Fluxes use the Scharfetter-Gummel form, which keeps the discrete Gibbs
density exactly stationary.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConvergenceError, StabilityError
from .measure import LabeledDataset, ParticleEnsemble, SupportInterval

MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Cell averages of a probability density on ``bin_count`` equal cells."""

    support: SupportInterval
    density: np.ndarray
    time: float = 0.0
    clipped_mass: float = 0.0

    def __post_init__(self):
        p = np.array(self.density, dtype=float).reshape(-1)
        if p.size < 8:
            raise ValueError("need at least 8 cells")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("density must be finite and non-negative")
        mass = p.sum() * self.support.width / p.size
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"density integrates to {mass!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "density", p)

    @property
    def bin_count(self) -> int:
        return self.density.size

    @property
    def dx(self) -> float:
        return self.support.width / self.bin_count

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.support.lower, self.support.upper, self.bin_count + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.dx)

    @classmethod
    def uniform(cls, bins: int, support: SupportInterval) -> "DensityGrid":
        return cls(support, np.full(bins, 1.0 / support.width))

    @classmethod
    def from_values(cls, values, support: SupportInterval, time: float = 0.0) -> "DensityGrid":
        """Normalise arbitrary non-negative cell values."""
        v = np.maximum(np.asarray(values, dtype=float), 0.0)
        dx = support.width / v.size
        return cls(support, v / (v.sum() * dx), time)

    def coarsen(self, bins: int) -> "DensityGrid":
        if self.bin_count % bins:
            raise ValueError(f"{self.bin_count} cells do not split into {bins}")
        p = self.density.reshape(bins, -1).mean(axis=1)
        return DensityGrid.from_values(p, self.support, self.time)


@dataclass(frozen=True, eq=False)
class DriftField:
    """dJ/dxi at cell centres and, when known, J itself."""

    values: np.ndarray
    potential: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("drift must be finite")
        object.__setattr__(self, "values", v)

    def potential_steps(self, dx: float) -> np.ndarray:
        """J[i+1] - J[i]; trapezoid rule on the drift if J is absent."""
        if self.potential is not None:
            return np.diff(self.potential)
        return 0.5 * dx * (self.values[:-1] + self.values[1:])


def _pair_stats(data: LabeledDataset, include_diagonal: bool, max_pairs: int | None, rng):
    d2, yy = data.upper_pairs
    if max_pairs is not None and d2.size > max_pairs:
        pick = rng.choice(d2.size, size=max_pairs, replace=False)
        d2, yy = d2[pick], yy[pick]
    n = data.count
    factor = (n - 1) / n if include_diagonal else 1.0
    return d2, yy, factor


class MeanFieldOperator:
    """Precomputed pieces of J and dJ/dxi for one dataset, grid and gamma.

    The interaction term depends on cell indices only through i + j, so it is
    assembled from 2M - 1 pair averages rather than M^2.
    """

    def __init__(self, data: LabeledDataset, support: SupportInterval, bins: int, gamma: float,
                 include_diagonal: bool = False, max_pairs: int | None = None, rng=None):
        self.support, self.bins, self.gamma = support, int(bins), float(gamma)
        dx = support.width / bins
        c = support.lower + dx * (np.arange(bins) + 0.5)
        d2, yy, fac = _pair_stats(data, include_diagonal, max_pairs, rng)
        self.centers, self.dx = c, dx
        e = np.exp(-np.multiply.outer(c, d2))
        self.base_potential = -fac * (e @ yy) / d2.size
        self.base_drift = fac * (e @ (yy * d2)) / d2.size
        # exact average of exp(-s d^2) over a cell of width dx, relative to its midpoint value
        half = 0.5 * dx * d2
        cell = np.ones_like(d2)
        nz = half > 0
        cell[nz] = np.sinh(half[nz]) / half[nz]
        s = 2 * c[0] + dx * np.arange(2 * bins - 1)
        es = np.exp(-np.multiply.outer(s, d2))
        hp = fac * dx * (es @ cell) / d2.size
        hd = fac * dx * (es @ (cell * d2)) / d2.size
        ij = np.add.outer(np.arange(bins), np.arange(bins))
        self.interaction_potential = hp[ij]
        self.interaction_drift = hd[ij]

    def potential(self, p: np.ndarray) -> np.ndarray:
        return self.base_potential + self.interaction_potential @ p / self.gamma

    def drift_values(self, p: np.ndarray) -> np.ndarray:
        return self.base_drift - self.interaction_drift @ p / self.gamma

    def field(self, grid: DensityGrid) -> DriftField:
        p = grid.density
        return DriftField(self.drift_values(p), self.potential(p))


def drift(grid: DensityGrid, data: LabeledDataset, gamma: float,
          include_diagonal: bool = False, operator: MeanFieldOperator | None = None) -> DriftField:
    """dJ/dxi at the cell centres of ``grid`` for its current density."""
    op = operator or MeanFieldOperator(data, grid.support, grid.bin_count, gamma, include_diagonal)
    return op.field(grid)


def stable_time_step(dx: float, beta: float, max_drift: float) -> float:
    """Largest dt keeping the explicit scheme positivity-preserving, with a 0.9 margin."""
    return 0.9 / (2.0 / (beta * dx * dx) + 2.0 * max_drift / dx)


def _bernoulli(x):
    out = np.ones_like(x)
    big = np.abs(x) > 1e-10
    out[big] = x[big] / np.expm1(x[big])
    # second-order expansion near zero
    small = ~big
    out[small] = 1.0 - 0.5 * x[small]
    return out


def _advance(p, dj_steps, beta, dx, dt):
    pe = beta * dj_steps
    flux = (_bernoulli(pe) * p[:-1] - _bernoulli(-pe) * p[1:]) / (beta * dx)
    div = np.empty_like(p)
    div[0] = flux[0]
    div[1:-1] = flux[1:] - flux[:-1]
    div[-1] = -flux[-1]
    return p - (dt / dx) * div


def step_pde(grid: DensityGrid, field_: DriftField, beta: float, dt: float) -> DensityGrid:
    """One explicit conservative step; rejects dt above the stability bound."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    dx = grid.dx
    bound = stable_time_step(dx, beta, float(np.abs(field_.values).max()))
    if dt > bound:
        raise StabilityError(f"dt={dt:.3g} exceeds stability bound {bound:.3g}", "meanfield")
    p = _advance(grid.density, field_.potential_steps(dx), beta, dx, dt)
    clipped = 0.0
    if p.min() < 0:
        clipped = float(-p[p < 0].sum() * dx)
        p = np.maximum(p, 0.0)
    # flux form conserves mass up to rounding; renormalising keeps the grid invariant exact
    p = p / (p.sum() * dx)
    return DensityGrid(grid.support, p, grid.time + dt, grid.clipped_mass + clipped)


def simulate(grid: DensityGrid, operator: MeanFieldOperator, beta: float, horizons,
             max_dt: float | None = None, callback=None):
    """Advance to each time in ``horizons`` (ascending); returns the grids reached."""
    out = []
    p = np.array(grid.density)
    t = grid.time
    dx = grid.dx
    clipped = grid.clipped_mass
    for target in horizons:
        if target < t:
            raise ValueError("horizons must be ascending and not before the start time")
        while t < target:
            v = operator.drift_values(p)
            dt = stable_time_step(dx, beta, float(np.abs(v).max()))
            if max_dt is not None:
                dt = min(dt, max_dt)
            remaining = target - t
            # equal steps to the target; the slack stops rounding from adding a sliver step
            k = max(1.0, np.ceil(remaining / dt * (1.0 - 1e-12)))
            dt = remaining / k
            t = target if k == 1 else t + dt
            steps = np.diff(operator.potential(p))
            p = _advance(p, steps, beta, dx, dt)
            if p.min() < 0:
                clipped += float(-p[p < 0].sum() * dx)
                p = np.maximum(p, 0.0)
            p /= p.sum() * dx
            if callback is not None:
                callback(t, p)
        out.append(DensityGrid(grid.support, p.copy(), float(t), clipped))
    return out


@dataclass
class FixedPointResult:
    grid: DensityGrid
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)


def gibbs_fixed_point(data: LabeledDataset, beta: float, gamma: float, grid: DensityGrid,
                      damping: float = 0.5, max_iterations: int = 10_000,
                      tolerance: float = 1e-12, operator: MeanFieldOperator | None = None,
                      strict: bool = False) -> FixedPointResult:
    """Damped iteration p <- (1-a) p + a exp(-beta J(., p)) / Z from ``grid``."""
    if not 0 < damping <= 1:
        raise ValueError("damping must lie in (0, 1]")
    op = operator or MeanFieldOperator(data, grid.support, grid.bin_count, gamma)
    dx = grid.dx
    p = np.array(grid.density)
    residual = np.inf
    it = 0
    for it in range(1, max_iterations + 1):
        u = -beta * op.potential(p)
        g = np.exp(u - u.max())
        g /= g.sum() * dx
        new = (1.0 - damping) * p + damping * g
        residual = float(np.abs(new - p).max())
        p = new
        if residual <= tolerance:
            break
    p /= p.sum() * dx
    ok = residual <= tolerance
    if strict and not ok:
        raise ConvergenceError(f"fixed point residual {residual:.3g} after {it} iterations",
                               "meanfield")
    return FixedPointResult(replace(grid, density=p), it, residual, ok)


def histogram(ensemble: ParticleEnsemble | np.ndarray, support: SupportInterval,
              bins: int) -> DensityGrid:
    x = ensemble.particles if isinstance(ensemble, ParticleEnsemble) else np.asarray(ensemble)
    counts, _ = np.histogram(x, bins=bins, range=(support.lower, support.upper))
    return DensityGrid.from_values(counts.astype(float), support)


def l1_distance(a: DensityGrid, b: DensityGrid) -> float:
    if a.bin_count != b.bin_count or a.support != b.support:
        raise ValueError("grids differ")
    return float(np.abs(a.density - b.density).sum() * a.dx)


def compare_particles_to_density(ensemble: ParticleEnsemble, grid: DensityGrid):
    """L1 distance between the particle histogram on the grid's cells and the density."""
    if ensemble.support != grid.support:
        raise ValueError("ensemble and grid supports differ")
    h = histogram(ensemble, grid.support, grid.bin_count)
    return l1_distance(h, grid), h
