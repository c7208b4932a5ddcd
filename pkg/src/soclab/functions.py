"""Smooth test functions with closed-form derivatives.

Univariate functions carry a jet of derivatives up to order four (the
regularity the perturbation construction consumes); bivariate functions
carry value, gradient and Hessian.  Everything works elementwise on
numpy arrays and stays exact on Fraction scalars where the underlying
formulas are rational.

The inventory is deliberately small: exact polynomials, the slow-growth
atom log(1 + x^2), a compact-support mollifier, the second-order
perturbation of a univariate function, and a smooth plateau cutoff.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .exactpoly import Poly1, Poly2

# 9th-degree smoothstep: S(0)=0, S(1)=1, derivatives 1..4 vanish at both ends.
_SMOOTHSTEP4 = Poly1([0, 0, 0, 0, 0, 126, -420, 540, -315, 70])
# 5th-degree smoothstep: C^2 flat at both ends.
_SMOOTHSTEP2 = Poly1([0, 0, 0, 10, -15, 6])


def _binom(k, j):
    return math.comb(k, j)


class SmoothFunction1D:
    """A function of x with derivatives available up to order 4."""

    #: radius R such that the function is constant (all listed derivatives
    #: vanish) for |x| >= R, or None when not compactly constant.
    constancy_radius = None

    def jet(self, x, order=4):
        raise NotImplementedError

    def __call__(self, x):
        return self.jet(x, order=0)[0]


class PolyFunction(SmoothFunction1D):
    """Exact polynomial test function."""

    def __init__(self, poly):
        if not isinstance(poly, Poly1):
            poly = Poly1(poly)
        self.poly = poly
        self._derivs = [poly]
        for _ in range(4):
            self._derivs.append(self._derivs[-1].deriv())
        self.constancy_radius = 0.0 if poly.degree <= 0 else None

    def jet(self, x, order=4):
        return tuple(self._derivs[k](x) for k in range(order + 1))

    def __repr__(self):
        return f"PolyFunction({self.poly!r})"


class ZeroFunction1D(PolyFunction):
    def __init__(self):
        super().__init__(Poly1())


class LogOnePlusSquare(SmoothFunction1D):
    """g(x) = log(1 + x^2), the slow-growth Lyapunov atom."""

    def jet(self, x, order=4):
        q = 1.0 + x * x if not isinstance(x, Fraction) else 1 + x * x
        vals = [np.log(1.0 + np.asarray(x, dtype=float) ** 2)
                if isinstance(x, np.ndarray) else math.log(float(q))]
        if order >= 1:
            vals.append(2 * x / q)
        if order >= 2:
            vals.append(2 * (1 - x * x) / q**2)
        if order >= 3:
            vals.append(4 * x * (x * x - 3) / q**3)
        if order >= 4:
            x2 = x * x
            vals.append(-12 * (x2 * x2 - 6 * x2 + 1) / q**4)
        return tuple(vals)


class Bump(SmoothFunction1D):
    """C^4 even bump: 1 on [-inner, inner], 0 outside [-outer, outer].

    The transition uses the 9th-degree smoothstep, so four derivatives
    vanish at both band edges and products with C^4 functions stay C^4.
    """

    def __init__(self, inner, width=1.0):
        if inner <= 0 or width <= 0:
            raise ValueError("bump needs inner > 0 and width > 0")
        self.inner = float(inner)
        self.outer = float(inner + width)
        self.width = float(width)
        self._s = [_SMOOTHSTEP4.deriv(k) for k in range(5)]
        self.constancy_radius = self.outer

    def jet(self, x, order=4):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        t = np.clip((a - self.inner) / self.width, 0.0, 1.0)
        sgn = np.sign(x)
        out = []
        for k in range(order + 1):
            if k == 0:
                vals = 1.0 - self._s[0](t)
            else:
                vals = -self._s[k](t) * sgn**k / self.width**k
                vals = np.where((a <= self.inner) | (a >= self.outer), 0.0, vals)
            out.append(vals if vals.shape else float(vals))
        return tuple(out)


class MollifiedPolynomial(SmoothFunction1D):
    """Polynomial times a C^4 bump, constant (zero) outside a compact set."""

    def __init__(self, poly, radius=4.0, width=1.0):
        self.base = poly if isinstance(poly, PolyFunction) else PolyFunction(poly)
        self.bump = Bump(radius, width)
        self.radius = float(radius)
        self.constancy_radius = self.bump.outer

    def jet(self, x, order=4):
        pj = self.base.jet(x, order)
        bj = self.bump.jet(x, order)
        out = []
        for k in range(order + 1):
            acc = 0.0
            for j in range(k + 1):
                acc = acc + _binom(k, j) * pj[j] * bj[k - j]
            out.append(acc)
        return tuple(out)


def sup_norms(fn, orders=(0, 1, 2), npts=40001, radius=None):
    """Grid estimate of sup |f^(k)| over the constancy interval."""
    r = radius if radius is not None else fn.constancy_radius
    if r is None:
        raise ValueError("function has no constancy radius; pass radius=")
    xs = np.linspace(-r, r, npts) if r > 0 else np.zeros(1)
    jet = fn.jet(xs, order=max(orders))
    return {k: float(np.max(np.abs(jet[k]))) for k in orders}


class SmoothFunction2D:
    """A function of (x, y) with value, gradient and Hessian."""

    def jet2(self, x, y):
        """Return (f, fx, fy, fxx, fxy, fyy)."""
        raise NotImplementedError

    def __call__(self, x, y):
        return self.jet2(x, y)[0]


class Zero2D(SmoothFunction2D):
    def jet2(self, x, y):
        z = 0.0 * x + 0.0 * y
        return (z, z, z, z, z, z)


class XLift(SmoothFunction2D):
    """f(x) viewed as a function of (x, y)."""

    def __init__(self, fn):
        self.fn = fn

    def jet2(self, x, y):
        f, d1, d2 = self.fn.jet(x, order=2)
        z = 0.0 * y
        return (f + z, d1 + z, z, d2 + z, z, z)


class YSquared(SmoothFunction2D):
    def jet2(self, x, y):
        z = 0.0 * x
        return (y * y + z, z, 2 * y + z, z, z, 2.0 + z)


class Poly2Function(SmoothFunction2D):
    """Exact bivariate polynomial with cached partial derivatives."""

    def __init__(self, poly: Poly2):
        self.poly = poly
        self.px = poly.diff_x()
        self.py = poly.diff_y()
        self.pxx = self.px.diff_x()
        self.pxy = self.px.diff_y()
        self.pyy = self.py.diff_y()

    def jet2(self, x, y):
        return (self.poly(x, y), self.px(x, y), self.py(x, y),
                self.pxx(x, y), self.pxy(x, y), self.pyy(x, y))


class Combo2D(SmoothFunction2D):
    """Linear combination sum_i w_i f_i."""

    def __init__(self, terms):
        self.terms = [(w, f) for w, f in terms]

    def jet2(self, x, y):
        acc = None
        for w, f in self.terms:
            jet = f.jet2(x, y)
            if acc is None:
                acc = [w * c for c in jet]
            else:
                acc = [a + w * c for a, c in zip(acc, jet)]
        return tuple(acc)


class PerturbedFunction(SmoothFunction2D):
    """Second-order perturbation f(x) + G/b + L/b^2 of a univariate f.

    G(x, y) = -x y f'(x) / (2 sigma^2) and
    L(x, y) = x y^2 (3 f'(x) + x f''(x)) / (8 sigma^4)
    are the correctors that average out the fast variable; the Hessian
    consumes derivatives of f up to order four.
    """

    def __init__(self, base, sigma, bn):
        self.base = base if isinstance(base, SmoothFunction1D) else PolyFunction(base)
        self.sigma = sigma
        self.bn = bn

    def _pieces(self, x, y):
        f0, f1, f2, f3, f4 = self.base.jet(x, order=4)
        exact = isinstance(x, Fraction)
        s2 = Fraction(self.sigma) ** 2 if exact else float(self.sigma) ** 2
        A = x * f1
        A1 = f1 + x * f2
        A2 = 2 * f2 + x * f3
        B = 3 * x * f1 + x * x * f2
        B1 = 3 * f1 + 5 * x * f2 + x * x * f3
        B2 = 8 * f2 + 7 * x * f3 + x * x * f4
        g = (-y * A / (2 * s2), -y * A1 / (2 * s2), -A / (2 * s2),
             -y * A2 / (2 * s2), -A1 / (2 * s2), 0 * A)
        l = (y * y * B / (8 * s2**2), y * y * B1 / (8 * s2**2), y * B / (4 * s2**2),
             y * y * B2 / (8 * s2**2), y * B1 / (4 * s2**2), B / (4 * s2**2))
        z = 0 * y
        fjet = (f0 + z, f1 + z, z, f2 + z, z, z)
        return fjet, g, l

    def jet2(self, x, y):
        fjet, g, l = self._pieces(x, y)
        b = self.bn
        return tuple(fj + gj / b + lj / (b * b) for fj, gj, lj in zip(fjet, g, l))

    def corrector_values(self, x, y):
        """(Gamma, Lambda) evaluated at (x, y), without the b-weights."""
        _, g, l = self._pieces(x, y)
        return g[0], l[0]


class SmoothCutoff:
    """Monotone C^2 plateau cutoff of radius R.

    Identity on [-R + 2, R - 2], constant -R + 1 below -R and R - 1
    above R, with a monotone quartic transition matching value, slope
    and curvature at both band ends.  For R in (1, 2] the identity band
    is empty and a single C^2 smoothstep joins the two plateaus.  By
    construction |chi'| <= 1 and |chi''| <= 3/4 in the canonical case.
    """

    SUP_D1 = 1.0
    SUP_D2 = 0.75
    # transition eta(t) = 2t - 2t^3 + t^4 on t in [0, 1], band width 2
    _ETA = Poly1([0, 2, 0, -2, 1])
    _ETA1 = _ETA.deriv()
    _ETA2 = _ETA1.deriv()

    def __init__(self, radius):
        if radius <= 1:
            raise ValueError(f"cutoff radius must exceed 1, got {radius}")
        self.radius = float(radius)
        self.degenerate = self.radius < 2.0

    @classmethod
    def for_scale(cls, sigma, bn):
        """Cutoff at the canonical radius sigma^2 * log sqrt(b_n)."""
        return cls(sigma * sigma * math.log(math.sqrt(bn)))

    def jet(self, z, order=2):
        z = np.asarray(z, dtype=float)
        r = self.radius
        if self.degenerate:
            t = np.clip((z + r) / (2 * r), 0.0, 1.0)
            amp = r - 1.0
            v = -amp + 2 * amp * _SMOOTHSTEP2(t)
            d1 = 2 * amp * _SMOOTHSTEP2.deriv()(t) / (2 * r)
            d2 = 2 * amp * _SMOOTHSTEP2.deriv(2)(t) / (2 * r) ** 2
            inside = (z > -r) & (z < r)
            d1 = np.where(inside, d1, 0.0)
            d2 = np.where(inside, d2, 0.0)
        else:
            a = np.abs(z)
            sgn = np.where(z < 0, -1.0, 1.0)
            t = np.clip((a - (r - 2.0)) / 2.0, 0.0, 1.0)
            band = (a > r - 2.0) & (a < r)
            v_band = (r - 2.0) + self._ETA(t)
            v = np.where(a <= r - 2.0, a, np.where(a >= r, r - 1.0, v_band)) * sgn
            d1 = np.where(a <= r - 2.0, 1.0, np.where(band, self._ETA1(t) / 2.0, 0.0))
            d2 = np.where(band, self._ETA2(t) / 4.0, 0.0) * sgn
        out = (v, d1, d2)[: order + 1]
        return tuple(o if o.shape else float(o) for o in out)

    def __call__(self, z):
        return self.jet(z, order=0)[0]


class CutoffComposite(SmoothFunction2D):
    """chi(u(x, y)) for a cutoff chi and a 2-d inner function u."""

    def __init__(self, cutoff: SmoothCutoff, inner: SmoothFunction2D):
        self.cutoff = cutoff
        self.inner = inner

    def jet2(self, x, y):
        u, ux, uy, uxx, uxy, uyy = self.inner.jet2(x, y)
        c, c1, c2 = self.cutoff.jet(u, order=2)
        return (c, c1 * ux, c1 * uy,
                c2 * ux * ux + c1 * uxx,
                c2 * ux * uy + c1 * uxy,
                c2 * uy * uy + c1 * uyy)
