"""Exact rational polynomial arithmetic in one and two variables.

Coefficients are `fractions.Fraction`, so addition, multiplication and
differentiation are exact.  Evaluation preserves exactness for Fraction
inputs and degrades gracefully to float for float inputs.  This is the
backbone of the algebraic identity checks: a residual polynomial either
is the zero polynomial or it is not, with no tolerance involved.
"""

from __future__ import annotations

from fractions import Fraction


def _frac(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)  # exact dyadic value
    raise TypeError(f"cannot use {type(x).__name__} as an exact coefficient")


class Poly1:
    """Univariate polynomial with exact rational coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=()):
        cs = [_frac(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs = tuple(cs)

    @classmethod
    def monomial(cls, power, coeff=1):
        return cls([0] * power + [coeff])

    @property
    def degree(self):
        return len(self.coeffs) - 1 if self.coeffs else -1

    def is_zero(self):
        return not self.coeffs

    def __eq__(self, other):
        return isinstance(other, Poly1) and self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __add__(self, other):
        if not isinstance(other, Poly1):
            other = Poly1([other])
        n = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [Fraction(0)] * (n - len(self.coeffs))
        for i, c in enumerate(other.coeffs):
            a[i] += c
        return Poly1(a)

    def __neg__(self):
        return Poly1([-c for c in self.coeffs])

    def __sub__(self, other):
        if not isinstance(other, Poly1):
            other = Poly1([other])
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, Poly1):
            c = _frac(other)
            return Poly1([a * c for a in self.coeffs])
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs))
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return Poly1(out)

    __rmul__ = __mul__

    def deriv(self, order=1):
        p = self
        for _ in range(order):
            p = Poly1([(i + 1) * c for i, c in enumerate(p.coeffs[1:])])
        return p

    def __call__(self, x):
        acc = 0 * x if not isinstance(x, (int, Fraction)) else Fraction(0)
        for c in reversed(self.coeffs):
            coeff = c if isinstance(x, (int, Fraction)) else float(c)
            acc = acc * x + coeff
        return acc

    def __repr__(self):
        return f"Poly1({list(self.coeffs)!r})"


class Poly2:
    """Bivariate polynomial in (x, y), stored as {(i, j): coeff}."""

    __slots__ = ("terms",)

    def __init__(self, terms=None):
        self.terms = {}
        if terms:
            for (i, j), c in dict(terms).items():
                c = _frac(c)
                if c != 0:
                    self.terms[(int(i), int(j))] = c

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def monomial(cls, i, j, coeff=1):
        return cls({(i, j): coeff})

    @classmethod
    def from_x_poly(cls, p: Poly1):
        return cls({(i, 0): c for i, c in enumerate(p.coeffs)})

    def is_zero(self):
        return not self.terms

    def __eq__(self, other):
        return isinstance(other, Poly2) and self.terms == other.terms

    def __add__(self, other):
        if not isinstance(other, Poly2):
            other = Poly2({(0, 0): other})
        out = dict(self.terms)
        for k, c in other.terms.items():
            s = out.get(k, Fraction(0)) + c
            if s == 0:
                out.pop(k, None)
            else:
                out[k] = s
        return Poly2(out)

    def __neg__(self):
        return Poly2({k: -c for k, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, Poly2):
            other = Poly2({(0, 0): other})
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, Poly2):
            c = _frac(other)
            return Poly2({k: a * c for k, a in self.terms.items()})
        out = {}
        for (i1, j1), a in self.terms.items():
            for (i2, j2), b in other.terms.items():
                k = (i1 + i2, j1 + j2)
                out[k] = out.get(k, Fraction(0)) + a * b
        return Poly2(out)

    __rmul__ = __mul__

    def diff_x(self):
        return Poly2({(i - 1, j): i * c for (i, j), c in self.terms.items() if i > 0})

    def diff_y(self):
        return Poly2({(i, j - 1): j * c for (i, j), c in self.terms.items() if j > 0})

    def degree(self):
        if not self.terms:
            return -1
        return max(i + j for i, j in self.terms)

    def __call__(self, x, y):
        exact = isinstance(x, (int, Fraction)) and isinstance(y, (int, Fraction))
        acc = Fraction(0) if exact else 0.0
        for (i, j), c in self.terms.items():
            coeff = c if exact else float(c)
            acc = acc + coeff * x**i * y**j
        return acc

    def __repr__(self):
        items = sorted(self.terms.items())
        return f"Poly2({dict(items)!r})"
