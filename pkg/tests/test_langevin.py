import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_dataset
from schoenberg import _backend, _fallback
from schoenberg.errors import InfeasibleRadiusError
from schoenberg.langevin import (LangevinConfig, constraint_value, langevin_step, project,
                                 run_langevin, train)
from schoenberg.measure import LabeledDataset, ParticleEnsemble, RandomSource, SupportInterval
from schoenberg.objective import ObjectiveConfig, regularized_risk
from schoenberg.synthetic import variance_task

SUP = SupportInterval(0.0, 10.0)


def test_project_clamps():
    assert project([-1.0, 0.5, 20.0], SUP).particles.tolist() == [0.0, 0.5, 10.0]


def test_project_all_below():
    assert project([-3.0, -0.1], SUP).particles.tolist() == [0.0, 0.0]


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30))
def test_project_idempotent_and_inside(xs):
    once = project(xs, SUP)
    assert SUP.contains(once.particles)
    assert np.array_equal(project(once.particles, SUP).particles, once.particles)


def _uniform_labels():
    return LabeledDataset([[0.0], [1.0], [2.5]], [1, 1, 1])


def test_step_fixed_point_without_noise_or_gradient():
    # gamma = 1 and xi = 0 give K = 1 = gamma*yy on every pair, so the gradient is zero
    cfg = LangevinConfig(step_size=0.1, inverse_temperature=math.inf, gamma=1.0)
    e = ParticleEnsemble([0.0, 0.0, 0.0], SUP)
    out = langevin_step(e, 0.0, cfg, _uniform_labels(), None, RandomSource(0))
    assert np.array_equal(out.particles, e.particles)


def test_step_fixed_point_with_saturated_kernel():
    # all features equal: every pair has d2 = 0 and the gradient vanishes
    cfg = LangevinConfig(step_size=0.1, inverse_temperature=math.inf)
    data = LabeledDataset(np.ones((4, 2)), [1, -1, 1, -1])
    e = ParticleEnsemble([0.3, 4.0, 9.0], SUP)
    out = run_langevin(e, 0.0, cfg, data, None, RandomSource(1), steps=50)
    assert np.array_equal(out.particles, e.particles)


def test_step_with_zero_step_size_is_identity():
    # the config type demands eta > 0; a vanishing step is exercised through the kernel directly
    xi = np.array([0.5, 1.5, 2.0])
    before = xi.copy()
    _fallback.langevin_pair_steps(xi, np.array([1.0]), np.array([-1.0]), np.ones((1, 3)),
                                  np.zeros(1), 1.5, 1e4, 1e4, 0.0, 10.0, np.empty(3))
    assert np.array_equal(xi, before)


def test_step_is_reproducible():
    data = make_dataset(10, 3, seed=0)
    cfg = LangevinConfig(step_size=1e-2, inverse_temperature=100.0, gamma=1.0)
    e = ParticleEnsemble([1.0, 2.0, 3.0, 4.0], SUP)
    a = langevin_step(e, 0.0, cfg, data, None, RandomSource(5))
    b = langevin_step(e, 0.0, cfg, data, None, RandomSource(5))
    assert np.array_equal(a.particles, b.particles)


def test_step_matches_chunked_runner():
    data = make_dataset(10, 3, seed=1)
    cfg = LangevinConfig(step_size=1e-2, inverse_temperature=100.0, gamma=1.0)
    e = ParticleEnsemble([1.0, 2.0, 3.0, 4.0], SUP)
    a = langevin_step(e, 0.0, cfg, data, None, RandomSource(5))
    b = run_langevin(e, 0.0, cfg, data, None, RandomSource(5), steps=1)
    assert np.allclose(a.particles, b.particles, atol=1e-14, rtol=0)


@pytest.mark.skipif(_backend.NAME != "cython", reason="compiled core not built")
def test_compiled_core_matches_fallback():
    from schoenberg import _core
    rng = np.random.default_rng(0)
    n, steps = 64, 500
    d2 = rng.random(steps) * 3
    yy = np.where(rng.random(steps) < 0.5, -1.0, 1.0)
    noise = rng.standard_normal((steps, n))
    eta = np.full(steps, 1e-3)
    x0 = rng.random(n) * 2
    a, b = x0.copy(), x0.copy()
    _fallback.langevin_pair_steps(a, d2, yy, noise, eta, n / 2, 1e3, 10.0, 0.0, 2.0, np.empty(n))
    _core.langevin_pair_steps(b, d2, yy, noise, eta, n / 2, 1e3, 10.0, 0.0, 2.0, np.empty(n))
    assert np.abs(a - b).max() <= 1e-12


def test_backend_override_forces_fallback(monkeypatch):
    import importlib
    monkeypatch.setenv("SCHOENBERG_BACKEND", "python")
    mod = importlib.reload(_backend)
    try:
        assert mod.NAME == "python" and mod.core is _fallback
    finally:
        monkeypatch.delenv("SCHOENBERG_BACKEND")
        importlib.reload(_backend)


def test_particles_stay_in_support_on_snapshots():
    data = make_dataset(20, 3, seed=2)
    cfg = LangevinConfig(step_size=0.05, inverse_temperature=1.0, gamma=1.0, snapshot_every=10)
    sup = SupportInterval(0.0, 1.0)
    snaps = []
    run_langevin(ParticleEnsemble([0.5] * 8, sup), 0.0, cfg, data, None, RandomSource(3),
                 steps=200, snapshots=snaps)
    assert len(snaps) == 20
    assert all(sup.contains(x) for _, x in snaps)
    # large noise at unit temperature must actually reach both walls
    allx = np.concatenate([x for _, x in snaps])
    assert allx.min() == 0.0 and allx.max() == 1.0


def _small_problem():
    data = make_dataset(12, 2, seed=4)
    sup = SupportInterval(0.0, 2.0)
    ref = ParticleEnsemble(np.linspace(0.1, 1.9, 6), sup)
    return data, ref


def test_train_slack_radius_accepts_first_trial():
    data, ref = _small_problem()
    cfg = LangevinConfig(step_size=1e-3, inverse_temperature=1e4, total_steps=30, gamma=1.0,
                         epsilon=0.05, radius=1e9, seed=7)
    res = train(cfg, data, ref)
    # phase 1 accepts h = 1 on the first trial; the later bisection never finds the radius binding
    first = res.trials[0]
    assert first["multiplier"] == 1.0 and first["feasible"]
    assert all(t["feasible"] for t in res.trials) and res.bracket[0] == 0.0
    plain = run_langevin(ref, 1.0, cfg, data, ref, RandomSource(7).child(0))
    assert first["constraint"] == pytest.approx(constraint_value(plain, ref, cfg), abs=1e-12)


def test_train_tiny_radius_is_infeasible():
    data, ref = _small_problem()
    cfg = LangevinConfig(step_size=1e-3, inverse_temperature=1e4, total_steps=5, gamma=1.0,
                         epsilon=0.05, radius=1e-9, multiplier_cap=64.0)
    # even the reference itself sits at positive entropic divergence from itself
    assert constraint_value(ref, ref, cfg) > 1e-9
    with pytest.raises(InfeasibleRadiusError):
        train(cfg, data, ref)


@pytest.mark.parametrize("radius", [0.1, 0.05])
def test_train_result_invariants(radius):
    data, ref = _small_problem()
    cfg = LangevinConfig(step_size=5e-3, inverse_temperature=1e4, total_steps=60, gamma=1.0,
                         epsilon=0.01, radius=radius, seed=1, bisection_tolerance=0.2,
                         initial_multiplier=0.25)
    res = train(cfg, data, ref)
    h_l, h_u = res.bracket
    assert res.constraint_value <= radius * (1 + 1e-6)
    assert abs(constraint_value(res.ensemble, ref, cfg) - res.constraint_value) <= 1e-8
    assert h_l <= res.multiplier <= h_u
    assert h_u - h_l < cfg.bisection_tolerance * res.last_trial_multiplier
    assert ref.support.contains(res.ensemble.particles)
    # replay the bracket: every bisection midpoint must fall strictly inside the previous bracket
    lo, hi = 0.0, math.inf
    for t in res.trials:
        h = t["multiplier"]
        if hi < math.inf:
            assert lo < h < hi and h == pytest.approx(0.5 * (lo + hi), rel=1e-15)
        if t["feasible"]:
            hi = h
        elif hi < math.inf:
            lo = h
    assert (lo, hi) == (h_l, h_u)


def test_descent_sanity_over_seeds():
    data = variance_task(60, 5, 0.5, RandomSource(0), scale=1.0)
    sup = SupportInterval(0.0, 2.0)
    cfg = LangevinConfig(step_size=1e-4, inverse_temperature=1e4, total_steps=2000, gamma=1e4)
    obj = ObjectiveConfig(cfg.gamma)
    before, after = [], []
    for seed in range(20):
        e0 = ParticleEnsemble.uniform(50, sup, RandomSource(seed).child(0))
        e1 = run_langevin(e0, 0.0, cfg, data, None, RandomSource(seed).child(1))
        before.append(regularized_risk(e0, data, obj))
        after.append(regularized_risk(e1, data, obj))
    assert np.mean(after) <= np.mean(before)
