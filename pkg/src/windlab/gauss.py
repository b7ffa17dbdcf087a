"""Exact Gaussian computations: Hermite polynomials, quadrant expectations
of the form E[X1 X2 1{X3>0} 1{X4>0}], orthant probabilities, the conditional
variance-covariance matrix of (X2'(0), X2'(t), X1(0), X1(t)) given two zeros
of X2, and the Hermite coefficient tables of the winding-number expansion.

Closed form for the quadrant expectation (unit-variance jointly Gaussian
(X1..X4) with correlations rho_ij):

    rho12/4 + rho12*arcsin(rho34)/(2 pi)
    + [rho13*rho24 + rho14*rho23 - rho34*(rho13*rho23 + rho14*rho24)]
      / (2 pi sqrt(1 - rho34^2))

The last (exchange) product does not appear in some published statements of
this identity; it is required, as both the diagram expansion and Monte Carlo
confirm (see tests).  It vanishes whenever X3 or X4 is uncorrelated with
(X1, X2), which covers the independent-model winding computation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .covmodel import CovarianceModel
from .errors import (CapabilityError, DegenerateConditioningError, DomainError,
                     ParameterError, SingularityError)

__all__ = [
    "hermite",
    "orthant_prob",
    "orthant_angle",
    "QuadrantCorr",
    "quadrant_expectation",
    "quadrant_expectation_series",
    "ConditionalCov",
    "conditional_cov",
    "generic_regression",
    "joint_cov_matrix",
    "ChaosCoefficients",
    "chaos_coefficients",
    "dirac_coefficients",
    "indicator_coefficients",
    "g_norm_sq",
]

HERMITE_CAP = 200
SQ2PI = math.sqrt(2.0 * math.pi)

_PSD_TOL = -1e-12
# the closed form carries 1/sqrt(1 - rho34^2); reject the near-singular
# band rather than extrapolate (callers that need t -> 0 limits use a
# dedicated expansion instead)
_RHO34_GUARD = 1e-6


# ----------------------------------------------------------------------
# Hermite polynomials (probabilists')
# ----------------------------------------------------------------------
def hermite(n: int, x):
    """H_n(x) by the three-term recurrence H_{n+1} = x H_n - n H_{n-1}."""
    if n < 0 or int(n) != n:
        raise ParameterError(f"hermite order must be a nonnegative integer, got {n}")
    if n > HERMITE_CAP:
        raise CapabilityError(f"hermite order {n} exceeds cap {HERMITE_CAP}")
    x = np.asarray(x, dtype=float)
    if n == 0:
        out = np.ones_like(x)
    elif n == 1:
        out = x.copy()
    else:
        hm1, h = np.ones_like(x), x.copy()
        for k in range(1, n):
            hm1, h = h, x * h - k * hm1
        out = h
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# orthant probability
# ----------------------------------------------------------------------
def orthant_prob(r: float) -> float:
    """P{X(0) > 0, X(t) > 0} = 1/4 + arcsin(r)/(2 pi) for correlation r."""
    if not -1.0 <= r <= 1.0:
        raise DomainError(f"correlation must lie in [-1, 1], got {r}")
    return 0.25 + math.asin(r) / (2.0 * math.pi)


def orthant_angle(r: float) -> float:
    """arccos(sqrt((1-r)/2)) = pi * orthant_prob(r): the same quantity in
    angle units.  Exposed separately because some derivations carry the
    angle where a probability is meant; orthant_prob is what the variance
    formulas consume."""
    if not -1.0 <= r <= 1.0:
        raise DomainError(f"correlation must lie in [-1, 1], got {r}")
    return math.acos(math.sqrt((1.0 - r) / 2.0))


# ----------------------------------------------------------------------
# quadrant expectation
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class QuadrantCorr:
    """Correlations of a centered unit-variance Gaussian 4-vector."""

    rho12: float
    rho13: float
    rho14: float
    rho23: float
    rho24: float
    rho34: float

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[0, 1] = m[1, 0] = self.rho12
        m[0, 2] = m[2, 0] = self.rho13
        m[0, 3] = m[3, 0] = self.rho14
        m[1, 2] = m[2, 1] = self.rho23
        m[1, 3] = m[3, 1] = self.rho24
        m[2, 3] = m[3, 2] = self.rho34
        return m

    def validate(self):
        if max(abs(v) for v in self.__dict__.values()) > 1.0:
            raise DomainError("correlations must lie in [-1, 1]")
        emin = float(np.linalg.eigvalsh(self.matrix()).min())
        if emin < _PSD_TOL:
            raise DomainError(
                f"correlation matrix not positive semidefinite (min eig {emin:.2e})")
        return self


def quadrant_expectation(c: QuadrantCorr) -> float:
    """E[X1 X2 1{X3>0} 1{X4>0}] in closed form (module docstring)."""
    c.validate()
    if abs(c.rho34) > 1.0 - _RHO34_GUARD:
        raise SingularityError(
            f"|rho34| = {abs(c.rho34)} too close to 1 for the closed form")
    s = math.sqrt(1.0 - c.rho34 ** 2)
    direct = c.rho13 * c.rho24 + c.rho14 * c.rho23
    exchange = c.rho13 * c.rho23 + c.rho14 * c.rho24
    return (c.rho12 / 4.0
            + c.rho12 * math.asin(c.rho34) / (2.0 * math.pi)
            + (direct - c.rho34 * exchange) / (2.0 * math.pi * s))


def quadrant_expectation_series(c: QuadrantCorr, order: int = 80) -> float:
    """Diagram-formula series for the quadrant expectation.

    Grouped by powers of rho34; ``order`` counts how many indicator-coefficient
    terms each constituent sum keeps (powers of rho34 up to 2*order + 1),
    so the partial sum converges to quadrant_expectation as order grows.
    Coefficients are generated by the central-binomial recurrence
    b_j = C(2j, j)/4^j; the three sums have per-power weights
    b_j/((2j+1) 2 pi) (with arcsin limit), b_j/(2 pi) (inverse square root)
    and -b_j/(2 pi) (exchange).
    """
    c.validate()
    if abs(c.rho34) > 1.0 - _RHO34_GUARD:
        raise SingularityError(
            f"|rho34| = {abs(c.rho34)} too close to 1 for the series")
    if order < 0:
        raise ParameterError("order must be nonnegative")
    x = c.rho34
    direct = c.rho13 * c.rho24 + c.rho14 * c.rho23
    exchange = c.rho13 * c.rho23 + c.rho14 * c.rho24
    twopi = 2.0 * math.pi
    total = c.rho12 / 4.0 + direct / twopi  # power-0 terms
    b = 1.0
    for j in range(order + 1):
        xodd = x ** (2 * j + 1)
        total += c.rho12 * b / ((2 * j + 1) * twopi) * xodd
        total -= exchange * b / twopi * xodd
        bnext = b * (2 * j + 1) / (2 * j + 2)
        if j < order:
            total += direct * bnext / twopi * x ** (2 * j + 2)
        b = bnext
    return total


# ----------------------------------------------------------------------
# conditional covariance (two pinned zeros of X2)
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class ConditionalCov:
    """4x4 conditional covariance of (X2'(0), X2'(t), X1(0), X1(t)) given
    X2(0) = X2(t) = 0."""

    matrix: np.ndarray
    lag: float

    def correlations(self):
        sd = np.sqrt(np.diag(self.matrix))
        return self.matrix / np.outer(sd, sd), sd


def joint_cov_matrix(model: CovarianceModel, t: float) -> np.ndarray:
    """Unconditional 6x6 covariance of
    (X2'(0), X2'(t), X1(0), X1(t), X2(0), X2(t))."""
    model.require("d_r2", "dd_r2", "d_r12")
    r2, d_r2, dd_r2 = (float(model.r2(t)), float(model.d_r2(t)),
                       float(model.dd_r2(t)))
    r1 = float(model.r1(t))
    r12p, r12m = float(model.r12(t)), float(model.r12(-t))
    dp, dm, d0 = (float(model.d_r12(t)), float(model.d_r12(-t)),
                  float(model.d_r12(0.0)))
    m = np.empty((6, 6))
    # order: A = (X2'(0), X2'(t), X1(0), X1(t)), B = (X2(0), X2(t))
    m[0] = [1.0, -dd_r2, -d0, -dp, 0.0, -d_r2]
    m[1] = [-dd_r2, 1.0, -dm, -d0, d_r2, 0.0]
    m[2] = [-d0, -dm, 1.0, r1, 0.0, r12m]
    m[3] = [-dp, -d0, r1, 1.0, r12p, 0.0]
    m[4] = [0.0, d_r2, 0.0, r12p, 1.0, r2]
    m[5] = [-d_r2, 0.0, r12m, 0.0, r2, 1.0]
    return m


def conditional_cov(model: CovarianceModel, t: float) -> ConditionalCov:
    """Closed-form conditional covariance matrix.

    Entry conventions follow E[X1(t)X2(0)] = r12(t): the (2,3) and (2,4)
    entries carry r12'(-t) and -r12(t) respectively, which reduces to the
    symmetric textbook display when r12 is odd or identically zero.
    """
    if not model.x2_differentiable:
        raise CapabilityError("conditional_cov needs a differentiable X2")
    model.require("d_r2", "dd_r2", "d_r12")
    t = float(t)
    r2 = float(model.r2(t))
    q = float(model.omr2sq(t))
    if abs(r2) >= 1.0 - 1e-14 or q <= 0.0:
        raise DegenerateConditioningError(
            f"|r2({t})| = {abs(r2)}: conditioning block singular")
    d_r2, dd_r2, r1 = float(model.d_r2(t)), float(model.dd_r2(t)), float(model.r1(t))
    r12p, r12m = float(model.r12(t)), float(model.r12(-t))
    dp, dm, d0 = (float(model.d_r12(t)), float(model.d_r12(-t)),
                  float(model.d_r12(0.0)))
    m = np.empty((4, 4))
    m[0, 0] = m[1, 1] = 1.0 - d_r2 ** 2 / q
    m[0, 1] = -dd_r2 - r2 * d_r2 ** 2 / q
    m[0, 2] = -d0 + d_r2 * r12m / q
    m[0, 3] = -dp - r2 * d_r2 * r12p / q
    m[1, 2] = -dm + r2 * d_r2 * r12m / q
    m[1, 3] = -d0 - d_r2 * r12p / q
    m[2, 2] = 1.0 - r12m ** 2 / q
    m[2, 3] = r1 + r2 * r12p * r12m / q
    m[3, 3] = 1.0 - r12p ** 2 / q
    for i in range(4):
        for j in range(i):
            m[i, j] = m[j, i]
    return ConditionalCov(matrix=m, lag=t)


def generic_regression(joint: np.ndarray) -> ConditionalCov:
    """Schur complement Sigma_AA - Sigma_AB Sigma_BB^-1 Sigma_BA of a 6x6
    joint covariance (conditioning on the last two coordinates).  Oracle
    for conditional_cov."""
    joint = np.asarray(joint, dtype=float)
    if joint.shape != (6, 6):
        raise ParameterError("joint covariance must be 6x6")
    saa, sab, sbb = joint[:4, :4], joint[:4, 4:], joint[4:, 4:]
    det = sbb[0, 0] * sbb[1, 1] - sbb[0, 1] * sbb[1, 0]
    if abs(det) < 1e-14 * max(1.0, abs(sbb[0, 0] * sbb[1, 1])):
        raise DegenerateConditioningError("conditioning 2x2 block is singular")
    cond = saa - sab @ np.linalg.solve(sbb, sab.T)
    return ConditionalCov(matrix=0.5 * (cond + cond.T), lag=math.nan)


# ----------------------------------------------------------------------
# Hermite coefficient tables
# ----------------------------------------------------------------------
def dirac_coefficients(order: int) -> np.ndarray:
    """Coefficients a_k of the Dirac delta at zero: a_{2k} =
    (-1)^k / (sqrt(2 pi) 2^k k!), zero for odd k."""
    a = np.zeros(order + 1)
    val = 1.0 / SQ2PI
    a[0] = val
    for k in range(1, order // 2 + 1):
        val *= -1.0 / (2.0 * k)
        if 2 * k <= order:
            a[2 * k] = val
    return a


def indicator_coefficients(order: int) -> np.ndarray:
    """Hermite coefficients g_k of the indicator 1{x >= 0}: g_0 = 1/2,
    g_{2k+1} = (-1)^k / (sqrt(2 pi) 2^k k! (2k+1)), zero for even k > 0."""
    g = np.zeros(order + 1)
    g[0] = 0.5
    num = 1.0 / SQ2PI
    for k in range(0, (order - 1) // 2 + 1):
        if 2 * k + 1 <= order:
            g[2 * k + 1] = num / (2 * k + 1)
        num *= -1.0 / (2.0 * (k + 1))
    return g


@lru_cache(maxsize=8)
def _gh_nodes(n: int):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / w.sum()


def _phi(x):
    return np.exp(-0.5 * x * x) / SQ2PI


def _upper_hermite_integral(k: int, a: np.ndarray) -> np.ndarray:
    """int_a^inf H_k(z) phi(z) dz: equals H_{k-1}(a) phi(a) for k >= 1 and
    the Gaussian upper tail for k = 0 (exact; removes the indicator kink
    from the d-coefficient quadrature)."""
    if k == 0:
        from scipy.special import ndtr
        return 1.0 - ndtr(a)
    return hermite(k - 1, a) * _phi(a)


@dataclass(frozen=True)
class ChaosCoefficients:
    """Coefficient tables of the Hermite expansion of the winding count.

    a[k1]: Dirac coefficients; d[k2, k3]: coefficients of
    g(x', z) = x' 1{rho1 x' + rho2 z >= 0}, both up to total order
    ``order`` (d is full on k2 + k3 <= order and zero-padded beyond).
    """

    a: np.ndarray
    d: np.ndarray
    rho1: float
    rho2: float
    order: int
    quad_nodes: int = field(default=0, compare=False)

    def partial_norm_sq(self, q: int) -> float:
        """sum_{k2+k3 <= q} d^2 k2! k3! (nondecreasing in q, bounded by
        ||g||^2)."""
        tot = 0.0
        for k2 in range(min(q, self.order) + 1):
            f2 = math.factorial(k2)
            for k3 in range(min(q - k2, self.order - k2) + 1):
                tot += self.d[k2, k3] ** 2 * f2 * math.factorial(k3)
        return tot


def g_norm_sq(rho1: float) -> float:
    """||g||^2 = E[X'^2 1{rho1 X' + rho2 Z >= 0}] by Gauss-Hermite
    quadrature (exact inner integral)."""
    from scipy.special import ndtr
    rho2 = math.sqrt(1.0 - rho1 ** 2)
    x, w = _gh_nodes(256)
    return float(np.sum(w * x * x * ndtr(rho1 * x / rho2)))


def chaos_coefficients(rho1: float, order: int) -> ChaosCoefficients:
    """Coefficient tables for the regression parameter rho1.

    d_{k2,k3} = (k2! k3!)^-1 E[g H_{k2}(X') H_{k3}(Z)] with the z-integral
    done in closed form and the x'-integral by Gauss-Hermite, doubling the
    node count from 64 until two successive orders agree to 1e-12.
    """
    if not abs(rho1) < 1.0:
        raise ParameterError(f"|rho1| must be < 1, got {rho1}")
    if order < 1:
        raise ParameterError("order must be >= 1")
    rho2 = math.sqrt(1.0 - rho1 ** 2)

    def table(n_nodes):
        x, w = _gh_nodes(n_nodes)
        a_kink = -rho1 * x / rho2
        hx = [hermite(k, x) for k in range(order + 1)]
        d = np.zeros((order + 1, order + 1))
        for k3 in range(order + 1):
            inner = _upper_hermite_integral(k3, a_kink)
            f3 = math.factorial(k3)
            base = w * x * inner
            for k2 in range(order + 1 - k3):
                d[k2, k3] = float(np.sum(base * hx[k2])) / (math.factorial(k2) * f3)
        return d

    n = 64
    d = table(n)
    while n < 4096:
        n *= 2
        d_next = table(n)
        if np.max(np.abs(d_next - d)) < 1e-12:
            d = d_next
            break
        d = d_next
    return ChaosCoefficients(a=dirac_coefficients(order), d=d, rho1=rho1,
                             rho2=rho2, order=order, quad_nodes=n)
