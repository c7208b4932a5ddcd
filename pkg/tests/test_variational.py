from fractions import Fraction

import numpy as np
import pytest

from soclab.exactpoly import Poly1
from soclab.expansion import limit_hamiltonian
from soclab.functions import PolyFunction
from soclab.variational import (
    ActionReport,
    ResolventProblem,
    action_gradient_interior,
    discrete_action,
    euler_lagrange_shooting,
    hamiltonian_point,
    lagrangian,
    legendre_check,
    optimal_path,
    path_action,
    solve_resolvent,
    suggest_theta,
    zero_cost_flow,
)


class TestPointFunctions:
    def test_hamiltonian_values(self):
        assert hamiltonian_point(1.0, 0.0, 3.0) == pytest.approx(4.5)
        assert hamiltonian_point(1.0, 1.0, 1.0) == pytest.approx(0.0)
        assert hamiltonian_point(2.0, 1.7, 0.0) == 0.0

    def test_lagrangian_values(self):
        assert lagrangian(1.0, 1.0, 0.0) == pytest.approx(1 / 8)
        assert lagrangian(1.0, 0.0, 2.0) == pytest.approx(2.0)
        xs = np.linspace(-3, 3, 11)
        assert np.all(lagrangian(1.3, xs, -xs**3 / (2 * 1.3**4)) == 0.0)
        assert np.all(lagrangian(0.8, xs, 1.0) >= 0.0)

    def test_limit_hamiltonian_consistency(self):
        # Hf(x) = H(x, f'(x)) ties the expansion module to this one
        f = PolyFunction(Poly1([0, 1, -2, 3]))
        for x in (-1.2, 0.0, 0.8):
            _, d1 = f.jet(x, order=1)
            assert limit_hamiltonian(f, 1.1, x) == pytest.approx(
                hamiltonian_point(1.1, x, d1), rel=1e-12)

    def test_legendre_duality(self):
        p_grid = np.arange(-6.0, 6.0, 1e-4)
        sup, ana, argmax, boundary = legendre_check(1.0, 0.0, 1.0, p_grid)
        assert not boundary
        assert argmax == pytest.approx(1.0, abs=1e-3)
        assert sup == pytest.approx(0.5, abs=1e-6)
        sup, ana, argmax, _ = legendre_check(1.0, 1.0, 0.0, p_grid)
        assert argmax == pytest.approx(0.5, abs=1e-3)
        assert sup == pytest.approx(1 / 8, abs=1e-6)
        assert ana == pytest.approx(1 / 8)

    def test_legendre_boundary_warning(self):
        with pytest.warns(UserWarning):
            _, _, _, boundary = legendre_check(1.0, 2.0, 5.0, np.linspace(-1, 1, 100))
        assert boundary

    def test_zero_cost_flow(self):
        assert zero_cost_flow(1.0, 1.0, 3.0) == pytest.approx(0.5)
        assert zero_cost_flow(1.0, 1.0, 0.0) == 1.0
        assert zero_cost_flow(2.0, 0.0, 5.0) == 0.0
        assert zero_cost_flow(1.0, -1.0, 3.0) == pytest.approx(-0.5)


class TestAction:
    def test_constant_path_costs_nothing(self):
        t = np.linspace(0, 1, 65)
        rep = path_action(1.0, t, np.zeros_like(t))
        assert rep.total == 0.0

    def test_linear_benchmark_value(self):
        # gamma(t) = t on [0, 1]: action = 9/14 (exact polynomial integral)
        t = np.linspace(0, 1, 2**14 + 1)
        rep = path_action(1.0, t, t)
        assert abs(rep.total - 9 / 14) < 1e-6

    def test_linear_benchmark_order_two(self):
        errs = []
        for k in (8, 9, 10, 11):
            t = np.linspace(0, 1, 2**k + 1)
            errs.append(abs(path_action(1.0, t, t).total - 9 / 14))
        for a, b in zip(errs, errs[1:]):
            assert a / b == pytest.approx(4.0, rel=0.25)

    def test_zero_cost_flow_action(self):
        t = np.linspace(0, 3, 2**12 + 1)
        rep = path_action(1.0, t, zero_cost_flow(1.0, 1.0, t))
        assert rep.running_cost < 1e-6

    def test_initial_cost_hooks(self):
        t = np.linspace(0, 1, 33)
        rep = path_action(1.0, t, t, initial_cost=2.5)
        assert rep.total == pytest.approx(rep.running_cost + 2.5)
        rep = path_action(1.0, t, t, initial_cost=lambda x0: 0.0 if x0 == 0 else np.inf)
        assert rep.initial_cost == 0.0

    def test_monotone_grid_required(self):
        with pytest.raises(ValueError):
            path_action(1.0, np.array([0.0, 0.5, 0.4]), np.zeros(3))

    def test_exact_symbolic_oracle(self):
        # independent oracle: exact rational integral of the running cost
        # for gamma(t) = t via the polynomial antiderivative
        half = Fraction(1, 2)
        poly = Poly1([1, 0, 0, half])  # velocity + mid^3/2 with x = t, v = 1
        sq = poly * poly
        antider = Poly1([0] + [c / (k + 1) for k, c in enumerate(sq.coeffs)])
        exact = half * (antider(Fraction(1)) - antider(Fraction(0)))
        assert exact == Fraction(9, 14)


class TestOptimalPath:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        t = np.linspace(0, 1, 33)
        dt = np.diff(t)
        x = np.sin(t) + 0.1 * rng.standard_normal(t.size)
        g = action_gradient_interior(1.2, x, dt)
        eps = 1e-7
        for k in (1, 7, 16, 31):
            xp = x.copy()
            xp[k] += eps
            xm = x.copy()
            xm[k] -= eps
            fd = (discrete_action(1.2, xp, dt) - discrete_action(1.2, xm, dt)) / (2 * eps)
            assert g[k - 1] == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_zero_cost_endpoints_give_zero_action(self):
        res = optimal_path(1.0, 1.0, 0.5, 3.0, grid_size=256)
        assert res.action < 1e-6
        assert res.diagnostics["converged"]

    def test_uphill_cost_and_shooting_agreement(self):
        res = optimal_path(1.0, 0.0, 1.0, 1.0, grid_size=1024)
        assert res.action > 0.3
        assert res.diagnostics["relative_gap"] < 1e-5

    def test_sign_symmetry(self):
        up = optimal_path(1.0, 0.0, 1.0, 1.0, grid_size=256, cross_validate=False)
        down = optimal_path(1.0, 0.0, -1.0, 1.0, grid_size=256, cross_validate=False)
        assert abs(up.action - down.action) < 1e-8

    def test_local_minimality_under_perturbations(self):
        res = optimal_path(1.0, 0.0, 1.0, 1.0, grid_size=128, cross_validate=False)
        dt = np.diff(res.times)
        base = discrete_action(1.0, res.values, dt)
        rng = np.random.default_rng(7)
        for _ in range(25):
            bump = rng.standard_normal(res.values.size) * 1e-2
            bump[0] = bump[-1] = 0.0
            assert discrete_action(1.0, res.values + bump, dt) >= base - 1e-12

    def test_shooting_momentum_dynamics(self):
        # p = v + x^3/(2 s^4) must satisfy p' = 3 x^2 p/(2 s^4) along the optimum
        res = optimal_path(1.0, 0.0, 1.0, 1.0, grid_size=2048, cross_validate=False)
        t, x = res.times, res.values
        v = np.gradient(x, t)
        p = v + x**3 / 2.0
        lhs = np.gradient(p, t)[50:-50]
        rhs = (3 * x**2 * p / 2.0)[50:-50]
        assert np.max(np.abs(lhs - rhs)) < 0.05

    def test_grid_size_validation(self):
        with pytest.raises(ValueError):
            optimal_path(1.0, 0.0, 1.0, 1.0, grid_size=8)


class TestResolvent:
    def _problem(self, lam=0.7, sigma=1.0, npts=241):
        xs = np.linspace(-3, 3, npts)
        h = np.cos(1.3 * xs) * np.exp(-0.25 * xs**2)
        return ResolventProblem(lam=lam, xs=xs, h=h, sigma=sigma)

    def test_constant_h_gives_constant_solution(self):
        xs = np.linspace(-3, 3, 101)
        prob = ResolventProblem(lam=0.5, xs=xs, h=np.full(101, 2.3))
        sol = solve_resolvent(prob)
        assert np.allclose(sol.f, 2.3, atol=1e-10)
        assert sol.residual_sup < 1e-10

    def test_two_initializations_agree(self):
        prob = self._problem()
        a = solve_resolvent(prob, f0=float(prob.h.min()))
        b = solve_resolvent(prob, f0=float(prob.h.max()))
        assert np.max(np.abs(a.f - b.f)) < 1e-6
        assert a.residual_sup < 1e-8 and b.residual_sup < 1e-8

    def test_monotonicity_in_h(self):
        rng = np.random.default_rng(13)
        xs = np.linspace(-3, 3, 181)
        for _ in range(10):
            c = rng.uniform(-1, 1, 3)
            h1 = c[0] * np.cos(xs) + c[1] * np.sin(2 * xs) + c[2]
            bump = rng.uniform(0.1, 1.0) * np.exp(-((xs - rng.uniform(-2, 2)) ** 2))
            h2 = h1 + bump
            p1 = ResolventProblem(lam=0.6, xs=xs, h=h1)
            p2 = ResolventProblem(lam=0.6, xs=xs, h=h2)
            theta = max(suggest_theta(p1), suggest_theta(p2))
            f1 = solve_resolvent(p1, theta=theta).f
            f2 = solve_resolvent(p2, theta=theta).f
            assert np.all(f2 - f1 >= -1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            ResolventProblem(lam=-1.0, xs=np.linspace(0, 1, 10), h=np.zeros(10))
        with pytest.raises(ValueError):
            ResolventProblem(lam=1.0, xs=np.array([0.0, 0.1, 0.4]), h=np.zeros(3))
