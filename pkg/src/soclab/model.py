"""Model parameters, state spaces, and drift/diffusion coefficients.

The model is a system of n interacting Langevin spins whose pair of
statistics (S/n, T/n - sigma^2), with S the spin sum and T the sum of
squares, is autonomously Markov.  This module exposes every coefficient
function of the three generators in play:

* the n-spin drift (`microscopic_drift`),
* the reduced two-dimensional diffusion (`reduced_coefficients`),
* the space-time rescaled fluctuation diffusion (`fluctuation_coefficients`),

together with the feedback factor h entering the rescaled drift.  All
functions are pure and evaluate exactly when given Fraction inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

FRAME_RAW = "raw"
FRAME_CLT = "clt"
FRAME_MODERATE = "moderate"
_FRAMES = (FRAME_RAW, FRAME_CLT, FRAME_MODERATE)


class StateSpaceError(ValueError):
    """State lies outside the admissible region for the requested frame."""


class ScheduleError(ValueError):
    """Scaling schedule violates its admissibility constraints."""


@dataclass(frozen=True)
class ModelParams:
    """Spin standard deviation sigma and system size n."""

    sigma: float
    n: int

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ValueError(f"n must be an integer >= 1, got {self.n}")

    @property
    def sigma2(self):
        return self.sigma * self.sigma


class ScalingSchedule:
    """Moderate-deviation scale sequence b_n.

    Either a power law b_n = n**alpha with alpha in (0, 1/4), or an
    explicit table {n: b_n}.  Admissibility (b_n strictly increasing,
    b_n^4 / n strictly decreasing) is automatic for admissible power
    laws and is checked over the support for tables.
    """

    def __init__(self, alpha=None, table=None):
        if (alpha is None) == (table is None):
            raise ScheduleError("provide exactly one of alpha or table")
        self.alpha = None
        self.table = None
        if alpha is not None:
            alpha = float(alpha)
            if not 0.0 < alpha < 0.25:
                raise ScheduleError(f"alpha must lie in (0, 1/4), got {alpha}")
            self.alpha = alpha
        else:
            items = sorted((int(n), v) for n, v in dict(table).items())
            if not items:
                raise ScheduleError("empty schedule table")
            for (n1, b1), (n2, b2) in zip(items, items[1:]):
                if not b2 > b1:
                    raise ScheduleError(f"b_n not strictly increasing at n={n2}")
                if not b2**4 / n2 < b1**4 / n1:
                    raise ScheduleError(f"b_n^4/n not strictly decreasing at n={n2}")
            self.table = dict(items)

    def bn(self, n):
        """b_n for a system of size n."""
        if self.alpha is not None:
            return float(n) ** self.alpha
        try:
            return self.table[int(n)]
        except KeyError:
            raise ScheduleError(f"n={n} not in schedule table") from None

    def support(self):
        return None if self.table is None else sorted(self.table)

    def __repr__(self):
        if self.alpha is not None:
            return f"ScalingSchedule(alpha={self.alpha})"
        return f"ScalingSchedule(table={self.table})"


@dataclass
class SpinConfiguration:
    """A configuration of n real spins with its sufficient statistics."""

    z: np.ndarray

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if self.z.ndim != 1 or self.z.size < 1:
            raise ValueError("z must be a nonempty 1-d array")

    @property
    def n(self):
        return self.z.size

    @property
    def spin_sum(self):
        return float(self.z.sum())

    @property
    def square_sum(self):
        return float(np.square(self.z).sum())

    def reduced(self, sigma):
        """Map to the raw-frame pair (S/n, T/n - sigma^2)."""
        n = self.n
        return ReducedState(self.spin_sum / n, self.square_sum / n - sigma**2, FRAME_RAW)


@dataclass(frozen=True)
class ReducedState:
    """Point (x, y) of the two-dimensional statistic in a tagged frame.

    Frames: ``raw`` for (S/n, T/n - sigma^2), ``clt`` for the sqrt(n)
    rescaling, ``moderate`` for the (b_n, b_n^2 t) rescaling.  Mixing
    frames is a programming error, so operations check the tag.
    """

    x: float
    y: float
    frame: str = FRAME_RAW

    def __post_init__(self):
        if self.frame not in _FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")

    def require(self, frame):
        if self.frame != frame:
            raise StateSpaceError(f"expected a {frame!r}-frame state, got {self.frame!r}")
        return self

    def check_admissible(self, params: ModelParams, bn=None):
        if self.frame == FRAME_RAW and self.y + params.sigma2 < self.x**2:
            raise StateSpaceError(f"raw state violates y + sigma^2 >= x^2: {self}")
        if self.frame == FRAME_MODERATE:
            if bn is None:
                raise ValueError("moderate-frame admissibility needs b_n")
            if not self.y > -params.sigma2 * bn:
                raise StateSpaceError(f"moderate state leaves y > -sigma^2 b_n: {self}")
        return self


def microscopic_drift(params: ModelParams, config: SpinConfiguration, j):
    """Drift of spin j in the n-spin Langevin system.

    Under the Gaussian reference law, 2 phi'(z) = -z / sigma^2 and the
    drift is (1/2) [ -z_j/sigma^2 + S/(T+1) - z_j (S/(T+1))^2 ].
    """
    if not 1 <= j <= config.n:
        raise IndexError(f"spin index {j} outside 1..{config.n}")
    zj = config.z[j - 1]
    return drift_from_stats(params, zj, config.spin_sum, config.square_sum)


def drift_from_stats(params, zj, S, T):
    """Same drift from the raw statistics; exact for Fraction inputs."""
    s2 = _maybe_exact_sigma2(params, zj, S, T)
    r = S / (T + 1)
    return (-zj / s2 + r - zj * r * r) / 2


def _maybe_exact_sigma2(params, *values):
    if any(isinstance(v, Fraction) for v in values):
        return Fraction(params.sigma) ** 2
    return params.sigma2


def _any(cond):
    return bool(np.any(cond)) if isinstance(cond, np.ndarray) else bool(cond)


def reduced_coefficients(params: ModelParams, x, y):
    """Drift vector and diffusion matrix of the reduced pair (x, y).

    The generator reads (1/2) a_xx d_xx + a_xy d_xy + (1/2) a_yy d_yy
    plus first-order terms; returns (drift_x, drift_y, a) with
    a = [[a_xx, a_xy], [a_xy, a_yy]].
    """
    n = params.n
    s2 = _maybe_exact_sigma2(params, x, y)
    den = n * y + n * s2 + 1
    if _any(den <= 0):
        raise StateSpaceError(f"degenerate feedback denominator at y={y}")
    drift_x = (-(n * n) * x**3 / den**2 + n * x / den - x / s2) / 2
    drift_y = n * x * x / den**2 - y / s2
    one = Fraction(1) if isinstance(s2, Fraction) else 1.0
    a_xx = one / n
    a_xy = 2 * x / n
    a_yy = 4 * (y + s2) / n
    return drift_x, drift_y, ((a_xx, a_xy), (a_xy, a_yy))


def feedback_factor(params: ModelParams, bn, y):
    """The factor h_n(y) = (1 + y/(b_n sigma^2) + 1/(n sigma^2))^(-1).

    This is sigma^2 times the self-tuned inverse temperature n/(T+1)
    expressed in the fluctuation variable; defined for y > -sigma^2 b_n.
    """
    s2 = _maybe_exact_sigma2(params, bn, y)
    den = 1 + y / (bn * s2) + 1 / (params.n * s2)
    if _any(den <= 0):
        raise StateSpaceError(f"h_n undefined: nonpositive denominator at y={y}")
    return 1 / den


@dataclass(frozen=True)
class FluctuationCoefficients:
    """Coefficient set of the rescaled fluctuation generator.

    drift_x * d_x + drift_y * d_y + c_xx * d_xx + c_xy * d_xy + c_yy * d_yy
    """

    drift_x: object
    drift_y: object
    c_xx: object
    c_xy: object
    c_yy: object

    def apply(self, fx, fy, fxx, fxy, fyy):
        return (self.drift_x * fx + self.drift_y * fy
                + self.c_xx * fxx + self.c_xy * fxy + self.c_yy * fyy)


def fluctuation_coefficients(params: ModelParams, bn, x, y):
    """Coefficients of the generator of (b_n x(b_n^2 t), b_n y(b_n^2 t)).

    Requires the moderate-frame state (x, y) with y > -sigma^2 b_n.
    """
    s2 = _maybe_exact_sigma2(params, bn, x, y)
    if _any(y <= -s2 * bn):
        raise StateSpaceError("state outside fluctuation domain: y <= -sigma^2 b_n")
    n = params.n
    h = feedback_factor(params, bn, y)
    drift_x = (x * bn**2 / s2 * (h - 1) - x**3 / s2**2 * h * h) / 2
    drift_y = bn * x * x / (n * s2**2) * h * h - bn**2 * y / s2
    c_xx = bn**4 / (2 * n)
    c_xy = 2 * bn**3 * x / n
    c_yy = 2 * bn**4 / n * (y / bn + s2)
    return FluctuationCoefficients(drift_x, drift_y, c_xx, c_xy, c_yy)
