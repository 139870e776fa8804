"""Entropic transport between two scalar particle ensembles.

Scalings are kept in log form. The plan is
``plan[i, j] = exp(log_v[i] - cost[i, j] / eps + log_u[j])`` with rows indexed
by source particles and columns by reference particles.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, StalePlanError
from .measure import ParticleEnsemble

DEFAULT_TOLERANCE = 1e-9
DEFAULT_MAX_ITER = 10_000
_TINY = 1e-280
# exp() of arguments below this underflows to subnormals, which is very slow;
# entries that small (about 1e-304) are irrelevant to every tolerance used here
_FLOOR = -700.0
_MAX_MOVE = 10.0  # log units per Newton step
_ANNEAL_RATIO = 64.0


def _expc(x):
    return np.exp(np.clip(x, _FLOOR, -_FLOOR))


def logsumexp(x, axis):
    m = x.max(axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(_expc(x - m).sum(axis=axis))


def _values(e):
    return e.particles if isinstance(e, ParticleEnsemble) else np.asarray(e, dtype=float).reshape(-1)


def cost_matrix(source, reference) -> np.ndarray:
    a, b = _values(source), _values(reference)
    return (a[:, None] - b[None, :]) ** 2


@dataclass(frozen=True, eq=False)
class TransportPlan:
    plan: np.ndarray
    log_v: np.ndarray
    log_u: np.ndarray
    epsilon: float
    iterations: int
    residual: float
    tolerance: float
    cost: np.ndarray

    @property
    def converged(self) -> bool:
        return self.residual <= self.tolerance

    @property
    def scaling_v(self) -> np.ndarray:
        # may overflow for tiny epsilon; the log form is authoritative
        with np.errstate(over="ignore"):
            return np.exp(self.log_v)

    @property
    def scaling_u(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_u)


@dataclass(frozen=True, eq=False)
class DivergenceResult:
    value: float
    plan: TransportPlan


def _marginal_residual(plan, n):
    target = 1.0 / n
    return max(np.abs(plan.sum(axis=1) - target).max(),
               np.abs(plan.sum(axis=0) - target).max())


def _sweep(f, g, log_k, log_w):
    f = log_w - logsumexp(log_k + g[None, :], axis=1)
    g = log_w - logsumexp(log_k + f[:, None], axis=0)
    return f, g


def _dual(f, g, log_k, w):
    return w * (f.sum() + g.sum()) - _expc(f[:, None] + log_k + g[None, :]).sum()


def _newton(f, g, log_k, w, tolerance, max_steps):
    """Damped Newton ascent on the dual; the Jacobian of the marginals is the
    block matrix [[diag(rows), P], [P^T, diag(cols)]] with one gauge direction.

    When the plan splits into nearly decoupled blocks the pinned system is
    singular to rounding; a Levenberg-Marquardt shift on the diagonal then
    gives an ascent direction, and the shift adapts to the step accepted.
    """
    steps = 0
    shift = 1e-3 * w
    for steps in range(1, max_steps + 1):
        P = _expc(f[:, None] + log_k + g[None, :])
        rows, cols = P.sum(axis=1), P.sum(axis=0)
        r = np.concatenate([rows - w, cols - w])
        if np.abs(r).max() <= tolerance:
            return f, g, steps - 1
        try:
            with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
                df, dg = _block_solve(P, rows, cols, -(rows - w), -(cols - w))
                slope = -(r @ np.concatenate([df, dg]))
                big = max(np.abs(df).max(), np.abs(dg).max())
        except np.linalg.LinAlgError:
            slope = big = np.nan
        shifted = not (np.isfinite(slope) and slope > 0 and big < 1e6)
        if shifted:
            df, dg = _shifted_solve(P, rows, cols, -(rows - w), -(cols - w), shift)
            slope = -(r @ np.concatenate([df, dg]))
            big = max(np.abs(df).max(), np.abs(dg).max())
        if big > _MAX_MOVE:
            df, dg, slope = df * (_MAX_MOVE / big), dg * (_MAX_MOVE / big), slope * _MAX_MOVE / big
        base = _dual(f, g, log_k, w)
        t = 1.0
        while t > 1e-10:
            nf, ng = f + t * df, g + t * dg
            if _dual(nf, ng, log_k, w) >= base + 0.25 * t * slope:
                break
            t *= 0.5
        else:
            break
        if shifted:
            shift = max(shift * 0.1, 1e-14 * w) if t == 1.0 else min(shift * 10.0, w)
        f, g = nf, ng
    return f, g, steps


def sinkhorn_plan(source, reference, epsilon: float, tolerance: float = DEFAULT_TOLERANCE,
                  max_iterations: int = DEFAULT_MAX_ITER, warm_start: TransportPlan | None = None,
                  check_every: int = 10, newton_after: int | None = 50,
                  newton_steps: int = 50) -> TransportPlan:
    """Sinkhorn-Knopp with uniform marginals 1/N.

    Sweeps run on multiplicative scalings against the kernel
    exp(f_i - cost_ij / eps + g_j); the scalings are folded into the log
    potentials f, g at every residual check, so nothing overflows. When
    sweeps have not converged after ``newton_after`` iterations, damped Newton
    steps on the dual finish the solve (``None`` disables them). Stops when
    the sup-norm marginal residual is at most ``tolerance`` or after
    ``max_iterations`` sweeps; non-convergence is reported through
    ``residual`` and ``converged``, not raised.
    """
    a, b = _values(source), _values(reference)
    if a.size != b.size:
        raise DimensionError(f"ensembles have {a.size} and {b.size} particles", "sinkhorn")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    n = a.size
    cost = cost_matrix(a, b)
    log_k = -cost / epsilon
    w = 1.0 / n
    log_w = -np.log(n)
    if warm_start is None and n > 1 and cost.max() > _ANNEAL_RATIO * epsilon:
        # far from any good start: solve at twice epsilon first and rescale
        warm_start = sinkhorn_plan(a, b, 2.0 * epsilon, max(tolerance, 1e-7), max_iterations,
                                   None, check_every, newton_after, newton_steps)
    warm = warm_start is not None and warm_start.log_u.shape == (n,)
    # log potentials scale like 1/epsilon
    g = warm_start.log_u * (warm_start.epsilon / epsilon) if warm else np.zeros(n)
    if warm and newton_after is not None:
        # potentials are already close; go to Newton almost at once
        newton_after = min(newton_after, 2)
    # an exact log-domain sweep first, so every kernel row has a usable entry
    f, g = _sweep(g, g, log_k, log_w)
    it = 1
    residual = np.inf
    budget = max_iterations if newton_after is None else min(max_iterations, newton_after)
    while it < budget:
        kern = _expc(f[:, None] + log_k + g[None, :])
        u = np.ones(n)
        ok = True
        for _ in range(check_every):
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                v = w / (kern @ u)
                u = w / (kern.T @ v)
            it += 1
            if it >= budget:
                break
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and np.all(u > 0)
                and np.all(v > 0)):
            ok = False
        if ok:
            residual = float(np.abs(v * (kern @ u) - w).max())
            f = f + np.log(v)
            g = g + np.log(u)
        else:
            f, g = _sweep(f, g, log_k, log_w)
            residual = np.inf
        if residual <= tolerance:
            break
    if residual > tolerance and newton_after is not None:
        f, g, steps = _newton(f, g, log_k, w, tolerance, newton_steps)
        it += steps
    plan = _expc(f[:, None] + log_k + g[None, :])
    residual = float(_marginal_residual(plan, n))
    while residual > tolerance and it < max_iterations:
        # plain sweeps as a last resort
        f, g = _sweep(f, g, log_k, log_w)
        it += 1
        plan = _expc(f[:, None] + log_k + g[None, :])
        residual = float(_marginal_residual(plan, n))
    return TransportPlan(plan, f, g, float(epsilon), it, residual, float(tolerance), cost)


def sinkhorn_divergence(source, reference, epsilon: float, tolerance: float = DEFAULT_TOLERANCE,
                        max_iterations: int = DEFAULT_MAX_ITER,
                        warm_start: TransportPlan | None = None) -> DivergenceResult:
    """Transport cost of the entropic plan, without the entropy term."""
    tp = sinkhorn_plan(source, reference, epsilon, tolerance, max_iterations, warm_start)
    value = float(np.sum(tp.plan * tp.cost))
    return DivergenceResult(max(value, 0.0), tp)


def _check_plan(a, b, plan: TransportPlan, max_tolerance: float):
    if plan.cost.shape != (a.size, b.size):
        raise StalePlanError("plan shape does not match the ensembles", "sinkhorn")
    if not np.array_equal(plan.cost, cost_matrix(a, b)):
        raise StalePlanError("plan was computed for different particle positions", "sinkhorn")
    if plan.residual > max_tolerance:
        raise StalePlanError(
            f"plan residual {plan.residual:.3g} above {max_tolerance:.3g}", "sinkhorn")


def sinkhorn_gradient(source, reference, plan: TransportPlan, method: str = "implicit",
                      max_residual: float = DEFAULT_TOLERANCE) -> np.ndarray:
    """Gradient of the sharp divergence with respect to the source particles.

    ``implicit`` differentiates through the marginal constraints and is the
    true derivative of :func:`sinkhorn_divergence`. ``fixed-scaling`` holds
    the dual scalings constant, which is cheaper but only approximate.
    """
    a, b = _values(source), _values(reference)
    if a.size != b.size:
        raise DimensionError(f"ensembles have {a.size} and {b.size} particles", "sinkhorn")
    _check_plan(a, b, plan, max_residual)
    P, C, eps = plan.plan, plan.cost, plan.epsilon
    diff = a[:, None] - b[None, :]
    if method == "fixed-scaling":
        return 2.0 * np.sum(P * (1.0 - C / eps) * diff, axis=1)
    if method != "implicit":
        raise ValueError(f"unknown gradient method {method!r}")
    n = a.size
    lam = _adjoint_potentials(P, C)
    weight = 1.0 + (lam[:n, None] + lam[None, n:] - C) / eps
    return 2.0 * np.sum(P * diff * weight, axis=1)


def _block_solve(P, rows, cols, s, t):
    """Solve [[diag(rows), P], [P^T, diag(cols)]] (x, y) = (s, t) with y[-1] = 0.

    The matrix has the gauge direction (1, -1) in its kernel, so pinning one
    component leaves a nonsingular system whenever the right side is
    consistent. The diagonal block is eliminated first (Schur complement).
    """
    P = np.where(P < _TINY, 0.0, P)  # subnormal entries make LAPACK crawl
    Q = P / rows[:, None]
    S = np.diag(cols) - P.T @ Q
    rhs = t - Q.T @ s
    y = np.zeros(cols.size)
    y[:-1] = np.linalg.solve(S[:-1, :-1], rhs[:-1])
    x = (s - P @ y) / rows
    return x, y


def _shifted_solve(P, rows, cols, s, t, shift):
    n = rows.size
    m = np.block([[np.diag(rows + shift), P], [P.T, np.diag(cols + shift)]])
    z = np.linalg.solve(m, np.concatenate([s, t]))
    return z[:n], z[n:]


def _adjoint_potentials(P, C):
    """Solve [[diag(r), P], [P^T, diag(c)]] lam = (rowsum(P*C), colsum(P*C))."""
    PC = P * C
    x, y = _block_solve(P, P.sum(axis=1), P.sum(axis=0), PC.sum(axis=1), PC.sum(axis=0))
    return np.concatenate([x, y])


def wasserstein2_squared_exact(source, reference) -> float:
    """Exact squared 2-Wasserstein distance between equal-size 1-d ensembles."""
    a, b = np.sort(_values(source)), np.sort(_values(reference))
    if a.size != b.size:
        raise DimensionError("ensembles differ in size", "sinkhorn")
    return float(np.mean((a - b) ** 2))
