import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog, root

from schoenberg.errors import DimensionError, StalePlanError
from schoenberg.sinkhorn import (cost_matrix, sinkhorn_divergence, sinkhorn_gradient,
                                 sinkhorn_plan, wasserstein2_squared_exact)


def lp_w2(a, b):
    """Exact squared W2 between uniform empirical measures via a linear program."""
    n = len(a)
    c = cost_matrix(a, b).ravel()
    rows = np.kron(np.eye(n), np.ones(n))
    cols = np.kron(np.ones(n), np.eye(n))
    res = linprog(c, A_eq=np.vstack([rows, cols]), b_eq=np.full(2 * n, 1.0 / n),
                  bounds=(0, None), method="highs")
    return res.fun


def naive_sinkhorn(a, b, eps, iterations):
    k = np.exp(-cost_matrix(a, b) / eps)
    w = np.full(len(a), 1.0 / len(a))
    u = np.ones(len(a))
    v = np.ones(len(b))
    for _ in range(iterations):
        u = w / (k @ v)
        v = w / (k.T @ u)
    return u[:, None] * k * v[None, :]


def test_single_particle_plan_forced():
    tp = sinkhorn_plan([2.0], [5.0], 0.1)
    assert tp.plan.shape == (1, 1) and tp.plan[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_single_particle_divergence():
    assert sinkhorn_divergence([2.0], [5.0], 0.1).value == pytest.approx(9.0, abs=1e-12)


def test_two_point_identity_coupling():
    tp = sinkhorn_plan([0.0, 1.0], [0.0, 1.0], 0.01)
    assert np.allclose(tp.plan, 0.5 * np.eye(2), atol=1e-6)


def root_sinkhorn(a, b, eps):
    """Solve the scaling equations in log form with a generic root finder."""
    c = cost_matrix(a, b) / eps
    n = len(a)
    lw = np.log(1.0 / n)

    def resid(z):
        f, g = z[:n], np.append(z[n:], 0.0)
        p = np.exp(f[:, None] - c + g[None, :])
        return np.concatenate([np.log(p.sum(1)) - lw, np.log(p.sum(0)[:-1]) - lw])

    sol = root(resid, np.zeros(2 * n - 1), method="hybr", tol=1e-15)
    f, g = sol.x[:n], np.append(sol.x[n:], 0.0)
    return np.exp(f[:, None] - c + g[None, :])


def test_three_point_plan_matches_converged_oracle():
    a, b = np.array([0.0, 1.0, 2.0]), np.array([0.5, 1.5, 2.5])
    tp = sinkhorn_plan(a, b, 0.05, tolerance=1e-13)
    assert np.allclose(tp.plan, root_sinkhorn(a, b, 0.05), atol=1e-8, rtol=0)


def test_three_point_plan_agrees_with_naive_iterations_up_to_their_residual():
    # plain iteration converges only like 1/k on this instance
    a, b = np.array([0.0, 1.0, 2.0]), np.array([0.5, 1.5, 2.5])
    tp = sinkhorn_plan(a, b, 0.05, tolerance=1e-13)
    ref = naive_sinkhorn(a, b, 0.05, 100_000)
    naive_residual = np.abs(ref.sum(1) - 1 / 3).max()
    assert np.abs(tp.plan - ref).max() <= 1.01 * naive_residual


def test_identical_ensembles_small_value():
    assert sinkhorn_divergence([0.0, 1.0], [0.0, 1.0], 0.005).value <= 1e-4


def test_shifted_pairs_near_lp():
    v = sinkhorn_divergence([0.0, 2.0], [1.0, 3.0], 0.01).value
    assert lp_w2(np.array([0.0, 2.0]), np.array([1.0, 3.0])) == pytest.approx(1.0, abs=1e-9)
    assert abs(v - 1.0) <= 2e-3


def test_size_mismatch():
    with pytest.raises(DimensionError):
        sinkhorn_plan([0.0, 1.0], [0.0], 0.1)


def test_plan_factorises_and_stays_finite():
    rng = np.random.default_rng(0)
    a, b = rng.random(8) * 3, rng.random(8) * 3
    tp = sinkhorn_plan(a, b, 0.001)
    assert np.all(np.isfinite(tp.plan)) and tp.converged
    rebuilt = np.exp(tp.log_v[:, None] - tp.cost / tp.epsilon + tp.log_u[None, :])
    assert np.allclose(rebuilt, tp.plan, atol=1e-300, rtol=1e-10)


def test_exact_w2_matches_lp():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, b = rng.random(5), rng.random(5)
        assert wasserstein2_squared_exact(a, b) == pytest.approx(lp_w2(a, b), abs=1e-9)


small_sets = st.lists(st.floats(0, 3), min_size=1, max_size=6)


@given(small_sets, st.data(), st.sampled_from([0.02, 0.1, 0.5]))
def test_marginals_within_residual(a, data, eps):
    b = data.draw(st.lists(st.floats(0, 3), min_size=len(a), max_size=len(a)))
    tp = sinkhorn_plan(a, b, eps)
    n = len(a)
    assert tp.residual <= tp.tolerance
    assert np.all(tp.plan >= 0)
    assert np.abs(tp.plan.sum(1) - 1 / n).max() <= tp.residual + 1e-15
    assert np.abs(tp.plan.sum(0) - 1 / n).max() <= tp.residual + 1e-15


@given(small_sets, st.data(), st.sampled_from([0.05, 0.2]))
def test_divergence_symmetric(a, data, eps):
    b = data.draw(st.lists(st.floats(0, 3), min_size=len(a), max_size=len(a)))
    v1 = sinkhorn_divergence(a, b, eps, tolerance=1e-12).value
    v2 = sinkhorn_divergence(b, a, eps, tolerance=1e-12).value
    assert abs(v1 - v2) <= 1e-10 * max(1.0, v1)


@given(small_sets, st.data(), st.floats(-2, 2))
def test_divergence_shift_invariant(a, data, shift):
    b = data.draw(st.lists(st.floats(0, 3), min_size=len(a), max_size=len(a)))
    v1 = sinkhorn_divergence(a, b, 0.1, tolerance=1e-12).value
    v2 = sinkhorn_divergence(np.add(a, shift), np.add(b, shift), 0.1, tolerance=1e-12).value
    assert abs(v1 - v2) <= 1e-10 * max(1.0, v1)


@given(small_sets, st.data())
def test_value_is_transport_cost_of_plan(a, data):
    b = data.draw(st.lists(st.floats(0, 3), min_size=len(a), max_size=len(a)))
    r = sinkhorn_divergence(a, b, 0.05)
    direct = float(np.sum(r.plan.plan * r.plan.cost))
    assert r.value >= 0 and abs(r.value - direct) <= 1e-10 * max(direct, 1e-300)


def test_gradient_single_particle():
    tp = sinkhorn_plan([2.0], [5.0], 0.1)
    assert sinkhorn_gradient([2.0], [5.0], tp) == pytest.approx([-6.0], abs=1e-10)


def test_gradient_antisymmetric():
    a = [-0.7, 0.7]
    tp = sinkhorn_plan(a, a, 0.3, tolerance=1e-12)
    g = sinkhorn_gradient(a, a, tp)
    assert g[0] == pytest.approx(-g[1], abs=1e-12)


def _fd(a, b, eps, k, step=1e-5):
    hi, lo = np.array(a, float), np.array(a, float)
    hi[k] += step
    lo[k] -= step
    f = lambda x: sinkhorn_divergence(x, b, eps, tolerance=1e-11).value
    return (f(hi) - f(lo)) / (2 * step)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random(4) * 2, rng.random(4) * 2
    tp = sinkhorn_plan(a, b, 0.05, tolerance=1e-11)
    g = sinkhorn_gradient(a, b, tp)
    for k in range(4):
        fd = _fd(a, b, 0.05, k)
        assert abs(g[k] - fd) <= 1e-4 * max(abs(fd), 1e-6)


def test_fixed_scaling_variant_is_not_the_derivative():
    rng = np.random.default_rng(3)
    a, b = rng.random(4) * 2, rng.random(4) * 2
    tp = sinkhorn_plan(a, b, 0.05, tolerance=1e-11)
    approx = sinkhorn_gradient(a, b, tp, method="fixed-scaling")
    exact = np.array([_fd(a, b, 0.05, k) for k in range(4)])
    assert np.abs(approx - exact).max() > 1e-2


def test_gradient_rejects_stale_plan():
    a, b = [0.1, 0.9], [0.2, 0.5]
    tp = sinkhorn_plan(a, b, 0.1)
    with pytest.raises(StalePlanError):
        sinkhorn_gradient([0.1, 0.95], b, tp)
    loose = sinkhorn_plan(a, b, 0.1, tolerance=1e-3)
    if loose.residual > 1e-9:
        with pytest.raises(StalePlanError):
            sinkhorn_gradient(a, b, loose)


def test_unconverged_plan_is_flagged_not_fatal():
    rng = np.random.default_rng(2)
    a, b = rng.random(20), rng.random(20)
    tp = sinkhorn_plan(a, b, 1e-4, tolerance=1e-15, max_iterations=3, newton_after=None)
    assert tp.iterations <= 3 and not tp.converged
    assert np.all(np.isfinite(tp.plan))


def test_warm_start_reaches_same_plan():
    rng = np.random.default_rng(6)
    a, b = rng.random(30), rng.random(30)
    cold = sinkhorn_plan(a, b, 0.01)
    a2 = a + 1e-3 * rng.standard_normal(30)
    warm = sinkhorn_plan(a2, b, 0.01, warm_start=cold)
    again = sinkhorn_plan(a2, b, 0.01)
    assert warm.converged and np.allclose(warm.plan, again.plan, atol=1e-9)
