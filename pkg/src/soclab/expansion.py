"""Exact and numeric machinery for the generator expansion.

Contents: the second-order perturbation of a test function and the exact
cancellation conditions its correctors must satisfy, the Taylor remainder
of the feedback factor, application of the rescaled nonlinear generator,
the candidate limit Hamiltonian, the compact-support repair of the
perturbed functions, and the grid verification of the upper and lower
Hamiltonian bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exactpoly import Poly1, Poly2
from .functions import (
    Combo2D,
    CutoffComposite,
    LogOnePlusSquare,
    PerturbedFunction,
    PolyFunction,
    SmoothCutoff,
    SmoothFunction1D,
    SmoothFunction2D,
    XLift,
    YSquared,
    Zero2D,
    sup_norms,
)
from .model import ModelParams, fluctuation_coefficients

LOG_ATOM = LogOnePlusSquare()


def _sigma2(sigma, exact):
    return Fraction(sigma) ** 2 if exact else float(sigma) ** 2


def corrector_polys(f: Poly1, sigma):
    """Exact correctors (Gamma_f, Lambda_f) of a polynomial f.

    Gamma_f = -x y f'(x) / (2 sigma^2),
    Lambda_f = x y^2 (3 f'(x) + x f''(x)) / (8 sigma^4).
    """
    s2 = Fraction(sigma) ** 2
    f1 = Poly2.from_x_poly(f.deriv())
    f2 = Poly2.from_x_poly(f.deriv(2))
    x = Poly2.monomial(1, 0)
    y = Poly2.monomial(0, 1)
    gamma = x * y * f1 * Fraction(-1, 2) * (1 / s2)
    lam = x * y * y * (3 * f1 + x * f2) * Fraction(1, 8) * (1 / s2**2)
    return gamma, lam


def cancellation_residuals(f: Poly1, sigma, gamma=None, lam=None):
    """Left-hand sides of the corrector cancellation system, exactly.

    With the canonical correctors both residuals are the zero
    polynomial; passing custom (gamma, lam) exposes the defect of a
    wrong ansatz.
    """
    s2 = Fraction(sigma) ** 2
    if gamma is None or lam is None:
        g0, l0 = corrector_polys(f, sigma)
        gamma = g0 if gamma is None else gamma
        lam = l0 if lam is None else lam
    f1 = Poly2.from_x_poly(f.deriv())
    x = Poly2.monomial(1, 0)
    y = Poly2.monomial(0, 1)
    r1 = -(1 / s2) * (y * gamma.diff_y()) - (1 / (2 * s2**2)) * (x * y * f1)
    r2 = (-(1 / s2) * (y * lam.diff_y())
          - (1 / (2 * s2**2)) * (x * y * gamma.diff_x())
          + (1 / (2 * s2**3)) * (x * y * y * f1))
    return r1, r2


def perturb(f, sigma, bn) -> PerturbedFunction:
    """Second-order perturbation F(x,y) = f(x) + Gamma/b + Lambda/b^2."""
    return PerturbedFunction(f, sigma, bn)


def feedback_taylor(params: ModelParams, bn, y):
    """Feedback factor h and its second-order Taylor remainder eps.

    h(y) = 1 - y/(b s^2) + y^2/(b s^2)^2 + eps(y)/b^2, so
    eps(y) = b^2 (h(y) - 1 + y/(b s^2) - y^2/(b^2 s^4)); exact for
    Fraction inputs.
    """
    from .model import feedback_factor

    s2 = _sigma2(params.sigma, isinstance(y, Fraction) and isinstance(bn, (int, Fraction)))
    h = feedback_factor(params, bn, y)
    eps = bn * bn * (h - 1 + y / (bn * s2) - y * y / (bn * bn * s2 * s2))
    return h, eps


def remainder_band(sigma):
    """Half-width of the control band K_n: sigma^2 sqrt(log sqrt(b))."""
    def width(bn):
        return sigma * sigma * math.sqrt(math.log(math.sqrt(bn)))
    return width


def remainder_constant(sigma, n, bn, npts=4001):
    """sup over K_n of |eps_n| and its normalized constant.

    The normalization divides by b^-1 (log sqrt(b))^(3/2); boundedness
    of the constant across an n-ladder is the remainder control claim.
    """
    w = remainder_band(sigma)(bn)
    ys = np.linspace(-w, w, npts)
    s2 = sigma * sigma
    h = 1.0 / (1.0 + ys / (bn * s2) + 1.0 / (n * s2))
    eps = bn * bn * (h - 1.0 + ys / (bn * s2) - ys * ys / (bn * bn * s2 * s2))
    sup = float(np.max(np.abs(eps)))
    norm = sup * bn / math.log(math.sqrt(bn)) ** 1.5
    return sup, norm


def apply_generator(fun: SmoothFunction2D, params: ModelParams, bn, x, y):
    """Rescaled generator G_n applied to a 2-d function at (x, y)."""
    coeffs = fluctuation_coefficients(params, bn, x, y)
    _, fx, fy, fxx, fxy, fyy = fun.jet2(x, y)
    return coeffs.apply(fx, fy, fxx, fxy, fyy)


def apply_hamiltonian(fun: SmoothFunction2D, params: ModelParams, bn, x, y):
    """Nonlinear generator H_n f = G_n f + quadratic gradient terms.

    H_n f = G_n f + (1/2) f_x^2 + 2 s^2 f_y^2 + (2x/b) f_x f_y
    + (2y/b) f_y^2, the speed-n b^-4 exponential transform of G_n.
    """
    coeffs = fluctuation_coefficients(params, bn, x, y)
    _, fx, fy, fxx, fxy, fyy = fun.jet2(x, y)
    exact = isinstance(x, Fraction)
    s2 = _sigma2(params.sigma, exact)
    half = Fraction(1, 2) if exact else 0.5
    quad = (half * fx * fx + 2 * s2 * fy * fy
            + (2 * x / bn) * fx * fy + (2 * y / bn) * fy * fy)
    return coeffs.apply(fx, fy, fxx, fxy, fyy) + quad


def limit_hamiltonian(f: SmoothFunction1D, sigma, x):
    """Candidate limit operator Hf(x) = -x^3 f'/(2 s^4) + (f')^2 / 2."""
    f = f if isinstance(f, SmoothFunction1D) else PolyFunction(f)
    _, d1 = f.jet(x, order=1)
    exact = isinstance(x, Fraction)
    s2 = _sigma2(sigma, exact)
    half = Fraction(1, 2) if exact else 0.5
    return -x**3 * d1 / (2 * s2**2) + half * d1 * d1


def _grid(lo, hi, pitch):
    npts = int(round((hi - lo) / pitch)) + 1
    return np.linspace(lo, hi, npts)


def _refined_sup(values_fn, box, pitch, refine=4):
    """Grid sup with a x`refine` local refinement around the coarse argmax."""
    (x_lo, x_hi), (y_lo, y_hi) = box
    xs, ys = _grid(x_lo, x_hi, pitch), _grid(y_lo, y_hi, pitch)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    vals = values_fn(X, Y)
    k = int(np.argmax(vals))
    i, j = np.unravel_index(k, vals.shape)
    sup = float(vals[i, j])
    loc = (float(X[i, j]), float(Y[i, j]))
    fx = _grid(max(x_lo, loc[0] - 2 * pitch), min(x_hi, loc[0] + 2 * pitch), pitch / refine)
    fy = _grid(max(y_lo, loc[1] - 2 * pitch), min(y_hi, loc[1] + 2 * pitch), pitch / refine)
    FX, FY = np.meshgrid(fx, fy, indexing="ij")
    fvals = values_fn(FX, FY)
    k = int(np.argmax(fvals))
    i, j = np.unravel_index(k, fvals.shape)
    if fvals[i, j] > sup:
        sup = float(fvals[i, j])
        loc = (float(FX[i, j]), float(FY[i, j]))
    return sup, loc


def expansion_gap(f: SmoothFunction1D, sigma, schedule, n_list, box=((-1, 1), (-1, 1)),
                  pitch=0.01):
    """sup over a grid on K of |H_n F_{n,f} - Hf| for each n.

    The decay of this table toward zero is the content of the
    perturbative expansion; the observed order is about b_n^-1.
    """
    rows = []
    for n in n_list:
        bn = schedule.bn(n)
        params = ModelParams(sigma=sigma, n=int(n))
        F = perturb(f, sigma, bn)

        def gap(X, Y, params=params, bn=bn, F=F):
            hn = apply_hamiltonian(F, params, bn, X, Y)
            hf = limit_hamiltonian(f, sigma, X)
            return np.abs(hn - hf)

        sup, loc = _refined_sup(gap, box, pitch)
        rows.append({"n": int(n), "bn": bn, "sup": sup, "argmax": loc})
    return rows


def loglog_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs)."""
    return float(np.polyfit(np.log(np.asarray(xs, float)),
                            np.log(np.asarray(ys, float)), 1)[0])


@dataclass
class BoundConstants:
    """Constants governing when the cutoff machinery is active."""

    cbar: float
    n1: int
    n2: int

    @property
    def nstar(self):
        return max(self.n1, self.n2)


def cbar_constant(f: SmoothFunction1D, sigma):
    """C-bar = max of the three envelope constants of the correctors."""
    norms = sup_norms(f, orders=(0, 1, 2))
    m = f.constancy_radius
    s2 = float(sigma) ** 2
    return max(norms[0],
               (m * norms[1] + 2.0) / (2.0 * s2),
               (3.0 * m * norms[1] + m * m * norms[2] + 8.0) / (8.0 * s2**2))


def _largest_n_where(cond, schedule, n_max=2**62):
    """Largest n with cond(n) true, assuming cond eventually stays false."""
    support = schedule.support()
    if support is not None:
        hits = [n for n in support if cond(n)]
        return max(hits) if hits else 0
    if not cond(1):
        return 0
    lo, hi = 1, 2
    while hi < n_max and cond(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if cond(mid):
            lo = mid
        else:
            hi = mid
    return lo


def bound_constants(f: SmoothFunction1D, eps, sigma, schedule) -> BoundConstants:
    """C-bar and the activation indices N1, N2 (N star is their max).

    N1 is the last n with eps <= 6 C-bar b_n^-2.  N2 is the last n
    where the damping inequality -2 b^2/s^2 + 8 s^2 (b^4/n |chi''| +
    |chi'|^2) > 0 fails to be negative, with the cutoff derivative
    suprema taken over all arguments (|chi'| <= 1, |chi''| <= 3/4).
    """
    cbar = cbar_constant(f, sigma)
    s2 = float(sigma) ** 2

    def n1_cond(n):
        return eps <= 6.0 * cbar / schedule.bn(n) ** 2

    def n2_cond(n):
        b = schedule.bn(n)
        return (-2.0 * b * b / s2
                + 8.0 * s2 * (b**4 / n * SmoothCutoff.SUP_D2 + SmoothCutoff.SUP_D1**2)) > 0

    return BoundConstants(cbar=cbar,
                          n1=_largest_n_where(n1_cond, schedule),
                          n2=_largest_n_where(n2_cond, schedule))


def limit_perturbation(f: SmoothFunction1D, eps, sign) -> SmoothFunction2D:
    """The limit object f(x) +/- eps (y^2 + log(1 + x^2))."""
    s = 1.0 if sign == "+" else -1.0
    return Combo2D([(1.0, XLift(f)), (s * eps, YSquared()), (s * eps, XLift(LOG_ATOM))])


def bounded_perturbation(f: SmoothFunction1D, eps, sign, sigma, schedule, n,
                         nstar=None) -> SmoothFunction2D:
    """Cutoff repair of the perturbed function, zero below the index N star.

    For n > N star this is chi_n(F_{n,f} +/- eps (y^2 + F_{n,g})) with
    g the log atom; on any fixed compact it agrees with the raw
    perturbation once n is large enough that the cutoff plateau has
    moved past it.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if sign not in ("+", "-"):
        raise ValueError("sign must be '+' or '-'")
    if nstar is None:
        nstar = bound_constants(f, eps, sigma, schedule).nstar
    if n <= nstar:
        return Zero2D()
    bn = schedule.bn(n)
    s = 1.0 if sign == "+" else -1.0
    inner = Combo2D([(1.0, perturb(f, sigma, bn)),
                     (s * eps, YSquared()),
                     (s * eps, perturb(LOG_ATOM, sigma, bn))])
    return CutoffComposite(SmoothCutoff.for_scale(sigma, bn), inner)


def lyapunov_function(sigma, bn) -> SmoothFunction2D:
    """Containment Lyapunov function chi_n((y^2 + F_{n,g}) / 2)."""
    inner = Combo2D([(0.5, YSquared()), (0.5, perturb(LOG_ATOM, sigma, bn))])
    return CutoffComposite(SmoothCutoff.for_scale(sigma, bn), inner)


def bound_slack(f: SmoothFunction1D, eps, sigma, schedule, n, box=((-2, 2), (-2, 2)),
                pitch=0.01, sign="+", nstar=None):
    """Worst-case slack of the upper (lower) Hamiltonian bound on a grid.

    For sign '+' the slack is H_n f_n^{eps,+} - (Hf + eps ||f'|| / 2 +
    eps^2); for sign '-' it is (Hf - eps ||f'|| / 2 - eps^2) -
    H_n f_n^{eps,-}.  The bound claims the limsup of the sup is <= 0.
    """
    params = ModelParams(sigma=sigma, n=int(n))
    bn = schedule.bn(n)
    if nstar is None:
        nstar = bound_constants(f, eps, sigma, schedule).nstar
    fn = bounded_perturbation(f, eps, sign, sigma, schedule, n, nstar=nstar)
    fprime_sup = sup_norms(f, orders=(1,))[1]
    target_shift = 0.5 * eps * fprime_sup + eps * eps
    s = 1.0 if sign == "+" else -1.0

    def slack(X, Y):
        hn = apply_hamiltonian(fn, params, bn, X, Y)
        hf = limit_hamiltonian(f, sigma, X)
        return s * (hn - hf) - target_shift

    sup, loc = _refined_sup(slack, box, pitch)
    return {"n": int(n), "bn": bn, "sup_slack": sup, "argmax": loc,
            "below_nstar": n <= nstar, "nstar": int(nstar)}
