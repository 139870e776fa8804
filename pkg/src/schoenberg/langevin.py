"""Projected particle Langevin dynamics and the multiplier search around it."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _backend
from .errors import InfeasibleRadiusError
from .measure import (LabeledDataset, ParticleEnsemble, RandomSource, SupportInterval,
                      check_same_size, sample_pair, sample_pair_indices)
from .objective import ObjectiveConfig, pair_risk_gradient, stochastic_gradient
from .sinkhorn import sinkhorn_divergence, sinkhorn_gradient

MULTIPLIER_CAP = 1e12


@dataclass(frozen=True)
class LangevinConfig:
    """Settings for the particle iteration and the multiplier search.

    ``particle_scaling`` multiplies the surrogate gradient by N/2 so that each
    particle feels an O(1) force independent of N; ``False`` uses the raw
    gradient of the surrogate.
    """

    step_size: float = 1e-4
    inverse_temperature: float = 1e4
    total_steps: int = 1000
    gamma: float = 1e4
    epsilon: float = 0.01
    radius: float = 1.0
    bisection_tolerance: float = 0.1
    seed: int = 0
    particle_scaling: bool = True
    step_decay: bool = False
    initial_multiplier: float = 1.0
    min_multiplier: float = 1e-6
    multiplier_cap: float = MULTIPLIER_CAP
    sinkhorn_tolerance: float = 1e-9
    sinkhorn_max_iterations: int = 10_000
    snapshot_every: int = 0
    chunk: int = 4096

    def __post_init__(self):
        for name in ("step_size", "inverse_temperature", "gamma", "epsilon", "radius",
                     "bisection_tolerance", "initial_multiplier", "min_multiplier", "multiplier_cap",
                     "sinkhorn_tolerance"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v) or
                    name == "inverse_temperature" and v == math.inf):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if int(self.total_steps) < 1:
            raise ValueError("total_steps must be at least 1")
        if self.snapshot_every < 0 or self.chunk < 1:
            raise ValueError("snapshot_every >= 0 and chunk >= 1 required")

    def objective(self, h: float) -> ObjectiveConfig:
        return ObjectiveConfig(self.gamma, h, self.epsilon)


@dataclass
class TrainResult:
    ensemble: ParticleEnsemble
    multiplier: float
    bracket: tuple
    constraint_value: float
    last_trial_multiplier: float
    trials: list = field(default_factory=list)
    trajectory: list | None = None


def project(candidate, support: SupportInterval) -> ParticleEnsemble:
    return ParticleEnsemble(np.clip(np.asarray(candidate, dtype=float), support.lower,
                                    support.upper), support)


def _scale(cfg: LangevinConfig, n: int) -> float:
    return 0.5 * n if cfg.particle_scaling else 1.0


def _step_sizes(cfg: LangevinConfig, start: int, count: int) -> np.ndarray:
    if not cfg.step_decay:
        return np.full(count, cfg.step_size)
    m = np.arange(start, start + count, dtype=float)
    return cfg.step_size / np.sqrt(m + 1.0)


def langevin_step(ensemble: ParticleEnsemble, h: float, cfg: LangevinConfig,
                  data: LabeledDataset, reference: ParticleEnsemble | None,
                  rng: RandomSource) -> ParticleEnsemble:
    """One projected noisy stochastic-gradient step."""
    pair = sample_pair(data, rng)
    noise = rng.standard_normal(len(ensemble))
    g = stochastic_gradient(ensemble, pair, cfg.objective(h), reference,
                            tolerance=cfg.sinkhorn_tolerance)
    eta = cfg.step_size
    cand = (ensemble.particles - eta * _scale(cfg, len(ensemble)) * g
            + math.sqrt(2.0 * eta / cfg.inverse_temperature) * noise)
    return project(cand, ensemble.support)


def run_langevin(ensemble: ParticleEnsemble, h: float, cfg: LangevinConfig,
                 data: LabeledDataset, reference: ParticleEnsemble | None,
                 rng: RandomSource, steps: int | None = None, snapshots: list | None = None):
    """Run ``steps`` updates (default ``cfg.total_steps``) and return the final ensemble.

    Pairs and noise are drawn in chunks from ``rng``; the result depends only on
    the seed, not on the backend, up to floating-point rounding.
    """
    steps = cfg.total_steps if steps is None else int(steps)
    sup = ensemble.support
    xi = np.array(ensemble.particles, dtype=float)
    n = xi.size
    scale = _scale(cfg, n)
    beta = cfg.inverse_temperature
    d2all, yyall = data.squared_distances, data.label_products
    work = np.empty(n)
    plan = None
    if h > 0:
        check_same_size(ensemble, reference, "langevin")
    done = 0
    while done < steps:
        k = min(cfg.chunk, steps - done)
        if cfg.snapshot_every:
            nxt = cfg.snapshot_every - done % cfg.snapshot_every
            k = min(k, nxt)
        idx = sample_pair_indices(data, rng, k)
        noise = rng.standard_normal((k, n))
        d2 = np.ascontiguousarray(d2all[idx[:, 0], idx[:, 1]])
        yy = np.ascontiguousarray(yyall[idx[:, 0], idx[:, 1]])
        eta = _step_sizes(cfg, done, k)
        if h == 0:
            _backend.core.langevin_pair_steps(xi, d2, yy, noise, eta, scale,
                                              beta, cfg.gamma, sup.lower, sup.upper, work)
        else:
            for m in range(k):
                res = sinkhorn_divergence(xi, reference, cfg.epsilon, cfg.sinkhorn_tolerance,
                                          cfg.sinkhorn_max_iterations, warm_start=plan)
                plan = res.plan
                g = pair_risk_gradient(xi, d2[m], yy[m], cfg.gamma)
                g += 0.5 * h * sinkhorn_gradient(xi, reference, plan,
                                                 max_residual=math.inf)
                xi = xi - eta[m] * scale * g + math.sqrt(2.0 * eta[m] / beta) * noise[m]
                np.clip(xi, sup.lower, sup.upper, out=xi)
        done += k
        if snapshots is not None and cfg.snapshot_every and done % cfg.snapshot_every == 0:
            snapshots.append((done, xi.copy()))
    return ParticleEnsemble(xi, sup)


def constraint_value(ensemble, reference, cfg: LangevinConfig) -> float:
    """Square root of the sharp divergence, the quantity compared with the radius."""
    res = sinkhorn_divergence(ensemble, reference, cfg.epsilon, cfg.sinkhorn_tolerance,
                              cfg.sinkhorn_max_iterations)
    return math.sqrt(res.value)


def train(cfg: LangevinConfig, data: LabeledDataset, reference: ParticleEnsemble,
          rng: RandomSource | None = None) -> TrainResult:
    """Doubling then bisection on the multiplier h.

    Phase 1 starts from the reference and doubles h, each trial continuing
    from the previous trial's particles, until a trial ends inside the
    radius. Phase 2 bisects between the last infeasible and the first
    feasible multiplier, restarting every trial from the phase-1 terminal
    particles. The ensemble returned is the one from the smallest feasible h.
    """
    root = rng if rng is not None else RandomSource(cfg.seed)
    trials = []
    trial_no = 0

    def attempt(start, h):
        nonlocal trial_no
        snaps = [] if cfg.snapshot_every else None
        out = run_langevin(start, h, cfg, data, reference, root.child(trial_no), snapshots=snaps)
        trial_no += 1
        w = constraint_value(out, reference, cfg)
        ok = w <= cfg.radius
        trials.append({"multiplier": h, "constraint": w, "feasible": ok})
        return out, w, ok, snaps

    h_s = cfg.initial_multiplier
    h_l, h_u = 0.0, math.inf
    current = reference
    while h_u == math.inf:
        out, w, ok, snaps = attempt(current, h_s)
        if ok:
            h_u = h_s
            best = (out, w, snaps)
        else:
            h_s *= 2.0
            if h_s > cfg.multiplier_cap:
                raise InfeasibleRadiusError(
                    f"radius {cfg.radius:g} not reached with multiplier up to "
                    f"{cfg.multiplier_cap:g}; last constraint value {w:.3g}", "langevin")
        current = out
    phase_entry = current
    while h_u - h_l >= cfg.bisection_tolerance * h_s and h_u >= cfg.min_multiplier:
        h_s = 0.5 * (h_u + h_l)
        out, w, ok, snaps = attempt(phase_entry, h_s)
        if ok:
            h_u = h_s
            best = (out, w, snaps)
        else:
            h_l = h_s
    ens, w, snaps = best
    return TrainResult(ens, h_u, (h_l, h_u), w, h_s, trials, snaps)


def retune(cfg: LangevinConfig, **changes) -> LangevinConfig:
    return replace(cfg, **changes)
