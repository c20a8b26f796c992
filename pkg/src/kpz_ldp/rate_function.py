"""Exact short-time rate function via the polylogarithm, and its power laws.

Sign convention: ``phi_exact(lam)`` with ``lam < 0`` is the lower tail
P[h <= lam], ``lam > 0`` the upper tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special

from .errors import DomainError, NumericalError

SERIES_RADIUS = 0.5
LOG_EXPONENT = 1.5
ABS_TOL = 1e-13


def zeta(s: float) -> float:
    """Riemann zeta for real s > 1."""
    if not s > 1:
        raise DomainError("zeta is only needed for s > 1")
    return float(special.zeta(s, 1))


LAMBDA_C = math.log(zeta(1.5))


def _series(s: float, x: float) -> float:
    # terms decay like 0.5^k, so 60 terms is far below 1e-16
    k = np.arange(1, 61, dtype=float)
    return float(np.sum(x ** k / k ** s))


def _fermi_dirac(s: float, z: float) -> float:
    """Li_s(-z) for z > 0 from the Fermi-Dirac integral."""
    return fermi_dirac_log(s, math.log(z))


def fermi_dirac_log(s: float, a: float) -> float:
    """Li_s(-e^a), usable for log-arguments far beyond float range of e^a."""
    g = special.gamma(s)

    # t = u^2 keeps the t^(s-1) endpoint behaviour smooth
    def body(u):
        t = u * u
        return 2.0 * u * t ** (s - 1.0) * special.expit(a - t)

    total = 0.0
    if a > 0:
        edge = math.sqrt(a)
        total += integrate.quad(body, 0.0, edge, epsabs=ABS_TOL, epsrel=1e-13, limit=200)[0]
        total += integrate.quad(body, edge, math.sqrt(a + 60.0), epsabs=ABS_TOL, epsrel=1e-13, limit=200)[0]
    else:
        total += integrate.quad(body, 0.0, math.sqrt(60.0), epsabs=ABS_TOL, epsrel=1e-13, limit=200)[0]
    return -total / g


def _bose_einstein(s: float, x: float) -> float:
    """Li_s(x) for 0 < x <= 1 from the Bose-Einstein integral."""
    a = -math.log(x)
    g = special.gamma(s)

    def body(u):
        t = u * u
        # 2u t^(s-1) / (e^(t+a) - 1), written to stay finite as t + a -> 0
        return 2.0 * u * t ** (s - 1.0) / special.expm1(t + a)

    total = integrate.quad(body, 0.0, 1.0, epsabs=ABS_TOL, epsrel=1e-13, limit=200)[0]
    total += integrate.quad(body, 1.0, 9.0, epsabs=ABS_TOL, epsrel=1e-13, limit=200)[0]
    return total / g


def polylog(s: float, x: float) -> float:
    """Real polylogarithm Li_s(x) for x <= 1.

    The power series is used for |x| <= 0.5, the Fermi-Dirac integral for
    x < -0.5 and the Bose-Einstein integral for 0.5 < x <= 1.
    """
    x = float(x)
    if x > 1.0:
        raise DomainError("polylog argument must not exceed 1")
    if x == 1.0 and s <= 1:
        raise DomainError("Li_s(1) diverges for s <= 1")
    if abs(x) <= SERIES_RADIUS:
        return _series(s, x)
    if x < 0:
        return _fermi_dirac(s, -x)
    return _bose_einstein(s, x)


@dataclass(frozen=True)
class PhiEvaluation:
    lam: float
    value: float
    branch: str
    z_opt: float
    method: str = "exact"


def _objective_below(lam: float, z: float) -> float:
    return z * math.exp(lam) + polylog(2.5, -z)


def _phi_below(lam: float) -> tuple[float, float]:
    """Minimise z e^lam + Li_{5/2}(-z) over z >= -1 (lam <= LAMBDA_C)."""
    if lam == 0.0:
        return 0.0, 0.0
    if lam < 0:
        # stationarity in u = log z: e^(lam+u) + Li_{3/2}(-e^u) = 0
        def dfu(u):
            li = polylog(1.5, -math.exp(u)) if u < 0 else fermi_dirac_log(1.5, u)
            return math.exp(lam + u) + li

        # the root sits near u = |lam| + 1.5 log|lam|
        hi = abs(lam) + 2.0 * math.log1p(abs(lam)) + 5.0
        while dfu(hi) <= 0:
            hi *= 2.0
            if hi > 1e6:
                raise NumericalError(f"no stationary point bracketed for lam={lam}")
        # below u ~ log|lam| the derivative is already negative
        lo = min(math.log(abs(lam)) - 2.0, -1.0)
        while dfu(lo) >= 0:
            lo -= 5.0
            if lo < -300:
                raise NumericalError(f"lower bracket lost for lam={lam}")
        u = optimize.brentq(dfu, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=300)
        li = polylog(2.5, -math.exp(u)) if u < 0 else fermi_dirac_log(2.5, u)
        return math.exp(lam + u) + li, math.exp(u) if u < 700 else math.inf
    else:
        def dfz(z):
            return math.exp(lam) + polylog(1.5, -z) / z

        # f'(z) ~ e^lam - 1 + z/2^(3/2) near 0, so the root is O(lam)
        right = -min(1e-3, 0.1 * lam)
        if dfz(right) <= 0:
            right = -1e-14
        if dfz(-1.0) > 0 or dfz(right) <= 0:
            raise NumericalError(f"no stationary point on [-1, 0) for lam={lam}")
        z = optimize.brentq(dfz, -1.0, right, xtol=1e-16, rtol=1e-15, maxiter=300)
    return _objective_below(lam, z), z


def _phi_above(lam: float, exponent: float) -> tuple[float, float]:
    """Stationary value on z in [-1, 0) of the continued objective (lam > LAMBDA_C).

    Parametrised by z = -exp(-mu), mu > 0.
    """
    coef = 8.0 * math.sqrt(math.pi) / 3.0

    def g(mu):
        return -math.exp(lam - mu) + polylog(2.5, math.exp(-mu)) - coef * mu ** exponent

    def dg(mu):
        return math.exp(lam - mu) - polylog(1.5, math.exp(-mu)) - coef * exponent * mu ** (exponent - 1.0)

    hi = max(lam, 1.0) + 5.0
    lo = 1e-14
    if dg(lo) <= 0:
        # no interior stationary point: the constrained extremum sits at z = -1
        return g(0.0), -1.0
    while dg(hi) >= 0:
        hi *= 2.0
        if hi > 1e5:
            raise NumericalError(f"no stationary point bracketed for lam={lam}")
    mu = optimize.brentq(dg, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=300)
    return g(mu), -math.exp(-mu)


@lru_cache(maxsize=4096)
def _phi_cached(lam: float, exponent: float) -> PhiEvaluation:
    if lam <= LAMBDA_C:
        f, z = _phi_below(lam)
        branch = "below-critical"
    else:
        f, z = _phi_above(lam, exponent)
        branch = "above-critical"
    value = float(-f / math.sqrt(4.0 * math.pi))
    if lam == 0.0:
        value = 0.0
    return PhiEvaluation(lam, max(value, 0.0), branch, z, "exact")


def phi_exact(lam: float, exponent: float = LOG_EXPONENT) -> PhiEvaluation:
    """Exact rate function value at ``lam``.

    Below the branch point LAMBDA_C = log zeta(3/2) this is the minimum of
    z e^lam + Li_{5/2}(-z) over z >= -1, scaled by -1/sqrt(4 pi). Above it
    the logarithmic correction -(8 sqrt(pi)/3)(-log(-z))^exponent is added
    and the stationary point on (-1, 0) is used: the corrected objective is
    unbounded below as z -> 0-, so only its stationary value is meaningful.
    """
    lam = float(lam)
    if not math.isfinite(lam):
        raise DomainError("lambda must be finite")
    return _phi_cached(lam, float(exponent))


REGIMES = ("quadratic", "lower-5/2", "upper-3/2")


def phi_asymptotic(lam: float, regime: str) -> float:
    """Leading power law of the rate function in the given regime."""
    lam = float(lam)
    if regime == "quadratic":
        return lam * lam / math.sqrt(2.0 * math.pi)
    if regime == "lower-5/2":
        if lam >= 0:
            raise DomainError("the 5/2 law describes the lower tail (lam < 0)")
        return 4.0 / (15.0 * math.pi) * abs(lam) ** 2.5
    if regime == "upper-3/2":
        if lam <= 0:
            raise DomainError("the 3/2 law describes the upper tail (lam > 0)")
        return 4.0 / 3.0 * lam ** 1.5
    raise DomainError(f"unknown regime {regime!r}; expected one of {REGIMES}")
