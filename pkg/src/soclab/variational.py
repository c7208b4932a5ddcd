"""Rate-function machinery: Hamiltonian, Lagrangian, action, solvers.

The point Hamiltonian H(x, p) = -x^3 p / (2 sigma^4) + p^2 / 2 and its
Legendre transform L(x, v) = |v + x^3/(2 sigma^4)|^2 / 2 drive three
numerical routines: quadrature of the action along a path, minimization
of the discretized action over interior nodes (damped Newton with the
analytic tridiagonal Hessian, cross-validated by shooting on the
momentum form of the Euler-Lagrange equations), and a monotone
Lax-Friedrichs solver for the stationary equation f - lambda H(x, f') = h.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.optimize


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""


def hamiltonian_point(sigma, x, p):
    """H(x, p) = -x^3 p / (2 sigma^4) + p^2 / 2."""
    s4 = float(sigma) ** 4
    return -(x**3) * p / (2 * s4) + 0.5 * p * p


def lagrangian(sigma, x, v):
    """L(x, v) = |v + x^3 / (2 sigma^4)|^2 / 2, the running cost."""
    s4 = float(sigma) ** 4
    w = v + x**3 / (2 * s4)
    return 0.5 * w * w


def legendre_check(sigma, x, v, p_grid):
    """Compare sup_p {p v - H(x, p)} on a grid with the closed form.

    Returns (numeric_sup, analytic_value, argmax, at_boundary).  The
    analytic maximizer is p* = v + x^3/(2 sigma^4).
    """
    p = np.asarray(p_grid, dtype=float)
    vals = p * v - hamiltonian_point(sigma, x, p)
    k = int(np.argmax(vals))
    at_boundary = k in (0, p.size - 1)
    if at_boundary:
        import warnings

        warnings.warn("Legendre grid argmax hit the boundary; widen p_grid")
    return float(vals[k]), float(lagrangian(sigma, x, v)), float(p[k]), at_boundary


def zero_cost_flow(sigma, x0, t):
    """Deterministic relaxation x0 / sqrt(1 + x0^2 t / sigma^4).

    Solves dx/dt = -x^3/(2 sigma^4), the zero set of the running cost;
    the sign of x0 is preserved.
    """
    s4 = float(sigma) ** 4
    return x0 / np.sqrt(1.0 + x0 * x0 * np.asarray(t, dtype=float) / s4)


@dataclass
class ActionReport:
    """Action of a path: running quadrature cost plus initial cost."""

    times: np.ndarray
    values: np.ndarray
    running_cost: float
    initial_cost: float
    nodes: int
    scheme: str = "midpoint-centered"

    @property
    def total(self):
        return self.running_cost + self.initial_cost

    def to_dict(self):
        return {"running_cost": self.running_cost, "initial_cost": self.initial_cost,
                "total": self.total, "nodes": self.nodes, "scheme": self.scheme}


def path_action(sigma, times, values, initial_cost=None) -> ActionReport:
    """Midpoint-rule action with centered interval velocities.

    On each interval the velocity is the difference quotient (a centered
    estimate at the midpoint) and the position is the node average, so
    the quadrature error is O(h^2) and the discrete action is a smooth
    function of the node values.  initial_cost may be a number or a
    callable applied to the start value; default zero (deterministic
    start at the path's own origin).
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(values, dtype=float)
    if t.ndim != 1 or t.size < 2 or t.size != x.size:
        raise ValueError("need equal-length 1-d times and values with >= 2 points")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("time grid must be strictly increasing")
    v = np.diff(x) / dt
    mid = 0.5 * (x[:-1] + x[1:])
    run = float(np.sum(lagrangian(sigma, mid, v) * dt))
    if initial_cost is None:
        i0 = 0.0
    elif callable(initial_cost):
        i0 = float(initial_cost(x[0]))
    else:
        i0 = float(initial_cost)
    return ActionReport(times=t, values=x, running_cost=run, initial_cost=i0,
                        nodes=t.size)


def _action_pieces(sigma, x, dt):
    """Per-interval residuals e_i = v_i + mid_i^3/(2 s^4) and their jets."""
    s4 = float(sigma) ** 4
    v = np.diff(x) / dt
    mid = 0.5 * (x[:-1] + x[1:])
    e = v + mid**3 / (2 * s4)
    # d e_i / d x_i, d e_i / d x_{i+1}; d mid / d x = 1/2 on both sides
    de_l = -1.0 / dt + 3.0 * mid**2 / (4 * s4)
    de_r = 1.0 / dt + 3.0 * mid**2 / (4 * s4)
    # second derivative of e wrt any pair of its two nodes
    dde = 3.0 * mid / (4 * s4)
    return e, de_l, de_r, dde


def discrete_action(sigma, x, dt):
    e, _, _, _ = _action_pieces(sigma, x, dt)
    return float(np.sum(0.5 * e * e * dt))


def action_gradient_interior(sigma, x, dt):
    """Gradient of the discrete action in the interior nodes x[1:-1]."""
    e, de_l, de_r, _ = _action_pieces(sigma, x, dt)
    g = np.zeros_like(x)
    g[:-1] += e * de_l * dt
    g[1:] += e * de_r * dt
    return g[1:-1]


def _action_hessian_banded(sigma, x, dt):
    """Tridiagonal Hessian (interior block) in solve_banded layout."""
    e, de_l, de_r, dde = _action_pieces(sigma, x, dt)
    m = x.size
    diag = np.zeros(m)
    off = np.zeros(m - 1)
    diag[:-1] += (de_l * de_l + e * dde) * dt
    diag[1:] += (de_r * de_r + e * dde) * dt
    off += (de_l * de_r + e * dde) * dt
    return diag[1:-1], off[1:-1]


@dataclass
class OptimalPathResult:
    times: np.ndarray
    values: np.ndarray
    action: float
    diagnostics: dict = field(default_factory=dict)


def optimal_path(sigma, x0, xT, horizon, grid_size=1024, tol=1e-11, max_iter=200,
                 cross_validate=True) -> OptimalPathResult:
    """Minimize the discretized action over paths from x0 to xT.

    Damped Newton over the interior node values with the analytic
    gradient and tridiagonal Hessian (Levenberg shift on indefinite
    steps, backtracking on the value).  With cross_validate the result
    is checked against the Euler-Lagrange shooting solution; the
    relative action gap is reported in the diagnostics.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if grid_size < 16:
        raise ValueError("grid_size must be at least 16")
    t = np.linspace(0.0, horizon, grid_size + 1)
    dt = np.diff(t)
    x = np.linspace(x0, xT, grid_size + 1)  # straight-line initialization
    value = discrete_action(sigma, x, dt)
    shift = 0.0
    converged = False
    iters = 0
    for iters in range(1, max_iter + 1):
        g = action_gradient_interior(sigma, x, dt)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < tol:
            converged = True
            break
        diag, off = _action_hessian_banded(sigma, x, dt)
        step = None
        for _ in range(40):
            ab = np.zeros((3, diag.size))
            ab[0, 1:] = off
            ab[1] = diag + shift
            ab[2, :-1] = off
            try:
                cand = scipy.linalg.solve_banded((1, 1), ab, -g)
            except np.linalg.LinAlgError:
                shift = max(10 * shift, 1e-8)
                continue
            if np.dot(cand, -g) <= 0:  # not a descent direction
                shift = max(10 * shift, 1e-8)
                continue
            step = cand
            break
        if step is None:
            raise ConvergenceError("could not regularize the Newton system")
        lam = 1.0
        improved = False
        for _ in range(60):
            trial = x.copy()
            trial[1:-1] += lam * step
            tv = discrete_action(sigma, trial, dt)
            if tv <= value + 1e-14:
                x, value = trial, tv
                improved = True
                break
            lam *= 0.5
        shift *= 0.25
        if not improved:
            break
    diagnostics = {"iterations": iters, "converged": converged,
                   "grad_sup": float(np.max(np.abs(action_gradient_interior(sigma, x, dt)))),
                   "action": value}
    if not converged:
        diagnostics["warning"] = "Newton did not meet tolerance"
    if cross_validate:
        try:
            shoot = euler_lagrange_shooting(sigma, x0, xT, horizon)
            rel = abs(value - shoot["action"]) / max(abs(shoot["action"]), 1e-12)
            diagnostics["action_shooting"] = shoot["action"]
            diagnostics["shooting_p0"] = shoot["p0"]
            diagnostics["relative_gap"] = rel
        except Exception as exc:  # report, do not mask the primary result
            diagnostics["shooting_error"] = str(exc)
    return OptimalPathResult(times=t, values=x, action=value, diagnostics=diagnostics)


def euler_lagrange_shooting(sigma, x0, xT, horizon, rtol=1e-10, atol=1e-12):
    """Solve the boundary problem by shooting on the initial momentum.

    Along extremals the momentum p = v + x^3/(2 sigma^4) satisfies
    p' = 3 x^2 p / (2 sigma^4) while x' = p - x^3/(2 sigma^4); the
    action is the integral of p^2/2.  Brent root-finding on p(0).
    """
    s4 = float(sigma) ** 4

    def rhs(_, state):
        x, p, _a = state
        return (p - x**3 / (2 * s4), 3 * x * x * p / (2 * s4), 0.5 * p * p)

    def terminal(p0):
        sol = scipy.integrate.solve_ivp(rhs, (0.0, horizon), (x0, p0, 0.0),
                                        rtol=rtol, atol=atol, dense_output=False)
        if not sol.success:
            raise ConvergenceError(f"shooting integration failed: {sol.message}")
        return sol.y[0, -1], sol.y[2, -1]

    # bracket the root of x(T; p0) - xT in p0
    scale = max(1.0, abs(x0), abs(xT), abs(x0) ** 3 / s4, abs(xT) ** 3 / s4)
    grid = np.concatenate([-np.geomspace(1e-3, 60 * scale, 40)[::-1],
                           [0.0], np.geomspace(1e-3, 60 * scale, 40)])
    residuals = []
    for p0 in grid:
        try:
            residuals.append(terminal(p0)[0] - xT)
        except ConvergenceError:
            residuals.append(np.nan)
    bracket = None
    for a, b, ra, rb in zip(grid, grid[1:], residuals, residuals[1:]):
        if np.isfinite(ra) and np.isfinite(rb) and ra == 0:
            bracket = (a, a)
            break
        if np.isfinite(ra) and np.isfinite(rb) and ra * rb < 0:
            bracket = (a, b)
            break
    if bracket is None:
        raise ConvergenceError("no shooting bracket found")
    if bracket[0] == bracket[1]:
        p0 = bracket[0]
    else:
        p0 = scipy.optimize.brentq(lambda q: terminal(q)[0] - xT, *bracket,
                                   xtol=1e-13, rtol=1e-14)
    xend, action = terminal(p0)
    return {"p0": float(p0), "terminal": float(xend), "action": float(action)}


@dataclass
class ResolventProblem:
    """Stationary equation f - lambda H(x, f') = h on a uniform grid."""

    lam: float
    xs: np.ndarray
    h: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        self.xs = np.asarray(self.xs, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        if self.lam <= 0:
            raise ValueError("lambda must be positive")
        if self.xs.ndim != 1 or self.xs.size < 3 or self.xs.size != self.h.size:
            raise ValueError("need matching 1-d grids with >= 3 points")
        steps = np.diff(self.xs)
        if not np.allclose(steps, steps[0], rtol=1e-9):
            raise ValueError("grid must be uniform")


@dataclass
class ResolventSolution:
    f: np.ndarray
    residual_sup: float
    iterations: int
    converged: bool
    theta: float


def _resolvent_residual(prob: ResolventProblem, f, theta):
    """Monotone Lax-Friedrichs residual F(f) = f - lam Hhat(x, Df) - h."""
    dx = prob.xs[1] - prob.xs[0]
    pm = np.empty_like(f)  # backward difference
    pp = np.empty_like(f)  # forward difference
    pm[1:] = (f[1:] - f[:-1]) / dx
    pp[:-1] = pm[1:]
    pm[0] = pp[0]      # one-sided at the ends: inward upwinding for the
    pp[-1] = pm[-1]    # confining cubic drift
    pbar = 0.5 * (pm + pp)
    hval = hamiltonian_point(prob.sigma, prob.xs, pbar) + 0.5 * theta * (pp - pm)
    return f - prob.lam * hval - prob.h, pm, pp, pbar


def suggest_theta(prob: ResolventProblem):
    """Default artificial-viscosity weight for a problem.

    Comparison statements between two solves are only meaningful for a
    shared weight (one numerical Hamiltonian); take the max of the
    suggestions over the problems being compared.
    """
    s4 = float(prob.sigma) ** 4
    drift_sup = float(np.max(np.abs(prob.xs**3 / (2 * s4))))
    dx = prob.xs[1] - prob.xs[0]
    grad_scale = float(np.max(np.abs(np.gradient(prob.h, dx))))
    return drift_sup + 4.0 * (1 + grad_scale)


def solve_resolvent(prob: ResolventProblem, f0=None, tol=1e-10, max_iter=400,
                    theta=None) -> ResolventSolution:
    """Damped Newton on the monotone discretization of f - lam Hf = h.

    The artificial-diffusion weight theta at least sup |H_p| makes the
    scheme monotone (an M-matrix Jacobian), which is the discrete shadow
    of the comparison principle: the solve is initialization-independent
    and order-preserving in h.  theta is enlarged and the solve repeated
    if the a-posteriori momentum range invalidates it.
    """
    f = np.full_like(prob.h, float(np.min(prob.h))) if f0 is None \
        else np.array(f0, dtype=float) + np.zeros_like(prob.h)
    s4 = float(prob.sigma) ** 4
    drift_sup = float(np.max(np.abs(prob.xs**3 / (2 * s4))))
    if theta is None:
        theta = suggest_theta(prob)
    dx = prob.xs[1] - prob.xs[0]
    for _ in range(8):
        iters = 0
        converged = False
        for iters in range(1, max_iter + 1):
            F, pm, pp, pbar = _resolvent_residual(prob, f, theta)
            res = float(np.max(np.abs(F)))
            if res < tol:
                converged = True
                break
            hp = -prob.xs**3 / (2 * s4) + pbar
            a = 0.5 * hp - 0.5 * theta   # dHhat/dp-
            b = 0.5 * hp + 0.5 * theta   # dHhat/dp+
            n = f.size
            diag = np.ones(n) - prob.lam * (a - b) / dx
            lower = np.zeros(n - 1)
            upper = np.zeros(n - 1)
            lower[:] = prob.lam * a[1:] / dx
            upper[:] = -prob.lam * b[:-1] / dx
            # boundary rows use the one-sided derivative only
            diag[0] = 1.0 + prob.lam * hp[0] / dx
            upper[0] = -prob.lam * hp[0] / dx
            diag[-1] = 1.0 - prob.lam * hp[-1] / dx
            lower[-1] = prob.lam * hp[-1] / dx
            ab = np.zeros((3, n))
            ab[0, 1:] = upper
            ab[1] = diag
            ab[2, :-1] = lower
            step = scipy.linalg.solve_banded((1, 1), ab, -F)
            lam_ls = 1.0
            for _ in range(50):
                trial = f + lam_ls * step
                Ft, *_ = _resolvent_residual(prob, trial, theta)
                if float(np.max(np.abs(Ft))) < res:
                    f = trial
                    break
                lam_ls *= 0.5
            else:
                break
        F, pm, pp, _ = _resolvent_residual(prob, f, theta)
        res = float(np.max(np.abs(F)))
        needed = drift_sup + float(np.max(np.abs(np.concatenate([pm, pp]))))
        if converged and theta >= needed:
            return ResolventSolution(f=f, residual_sup=res, iterations=iters,
                                     converged=True, theta=theta)
        theta = max(2 * theta, 1.25 * needed)
    raise ConvergenceError(f"resolvent solve failed (residual {res:.2e})")
