"""The optimal deep-lower-tail deviation and the geometry of deviation fields.

The profile r(t) on (0, 2) is symmetric about t = 1, equals pi/2 there and
blows up like (2 - t)^(-2/3) at the ends. It is computed through the slope
y = sqrt(2r/pi - 1) >= 0, which solves

    y / (1 + y^2) + arctan(y) = (pi/2) |t - 1|,

and near the ends through w = 1/y, which solves
arctan(w) - w / (1 + w^2) = (pi/2) min(t, 2 - t). Both left-hand sides are
increasing, so each is a bracketed scalar root. The width l(t) = 1/r(t) is
concave with l' = sign(1 - t) y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

from .errors import DomainError, NumericalError
from .fields import ScalarField, SpaceTimeGrid, register_grid_factory, sample_on
from .heat_kernel import trapezoid_weights

HALF_PI = 0.5 * math.pi
RESIDUAL_TOL = 1e-12

# arctan(w) - w/(1+w^2) = sum_k (-1)^(k+1) 2k/(2k+1) w^(2k+1)
_K = np.arange(1, 16)
_SERIES_COEF = (-1.0) ** (_K + 1) * 2 * _K / (2 * _K + 1)


def _tail_lhs(w: float) -> float:
    if w < 0.1:
        return float(np.sum(_SERIES_COEF * w ** (2 * _K + 1)))
    return math.atan(w) - w / (1.0 + w * w)


def _center_lhs(y: float) -> float:
    return y / (1.0 + y * y) + math.atan(y)


@lru_cache(maxsize=65536)
def _slope_pair(t: float) -> tuple[float, float]:
    """Return (y, w) with y = sqrt(2r/pi - 1) and w = 1/y at time t."""
    if not 0.0 < t < 2.0:
        raise DomainError("the instanton profile is defined for 0 < t < 2")
    m = min(t, 2.0 - t)
    if m <= 0.5:
        target = HALF_PI * m
        # leading term (2/3) w^3 gives a tight bracket; the series correction only raises w
        lead = (1.5 * target) ** (1.0 / 3.0)
        lo, hi = 0.99 * lead, 2.0 * lead
        if lead >= 0.1 or not _tail_lhs(lo) < target < _tail_lhs(hi):
            lo, hi = 0.0, 4.0
        w = optimize.brentq(lambda v: _tail_lhs(v) - target, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
        return 1.0 / w, w
    target = HALF_PI * (1.0 - m)
    if target == 0.0:
        return 0.0, math.inf
    y = optimize.brentq(lambda v: _center_lhs(v) - target, 0.0, 1.0, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return y, (1.0 / y if y > 0 else math.inf)


def _vectorize(fn):
    vec = np.vectorize(fn, otypes=[float])

    def wrapper(t):
        out = vec(np.asarray(t, dtype=float))
        return float(out) if out.ndim == 0 else out

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_vectorize
def solve_r(t: float) -> float:
    """Profile r(t) >= pi/2 on (0, 2); minimum pi/2 at t = 1."""
    y, w = _slope_pair(float(t))
    if w < 1.0:
        return HALF_PI * (1.0 + w * w) / (w * w)
    return HALF_PI * (1.0 + y * y)


@_vectorize
def ell(t: float) -> float:
    """Support half-width l(t) = 1/r(t); zero at t = 0 and t = 2."""
    t = float(t)
    if t <= 0.0 or t >= 2.0:
        if t < 0.0 or t > 2.0:
            raise DomainError("l(t) is defined on [0, 2]")
        return 0.0
    y, w = _slope_pair(t)
    if w < 1.0:
        return w * w / (HALF_PI * (1.0 + w * w))
    return 1.0 / (HALF_PI * (1.0 + y * y))


@_vectorize
def ell_prime(t: float) -> float:
    """Derivative of l, equal to sign(1 - t) sqrt(2 r / pi - 1)."""
    y, _ = _slope_pair(float(t))
    return math.copysign(y, 1.0 - t) if y > 0 else 0.0


@_vectorize
def cumulative_r(t: float) -> float:
    """Closed form of the integral of r over (0, t)."""
    t = float(t)
    if t <= 0.0:
        return 0.0
    if t >= 2.0:
        return 2.0 * math.pi
    y, w = _slope_pair(t)
    half = 2.0 * math.atan(w) if w < 1.0 else math.pi - 2.0 * math.atan(y)
    return half if t <= 1.0 else 2.0 * math.pi - half


def relation_residual(t: float, r: float) -> float:
    """Residual of the implicit r-relation in its original variables."""
    q = math.sqrt(max(r / HALF_PI - 1.0, 0.0))
    lhs = math.sqrt(r - HALF_PI) / (r * HALF_PI) + (2.0 / math.pi) ** 1.5 * math.atan(q)
    return lhs - math.sqrt(2.0 / math.pi) * abs(t - 1.0)


def r_ode_rhs(t: float, r: float) -> float:
    """Right side of the first-order ODE satisfied by r, with the sign of t - 1."""
    return math.copysign(math.sqrt(2.0 / math.pi) * r * r * math.sqrt(max(r - HALF_PI, 0.0)), t - 1.0)


def rho_star(t, x):
    """Optimal deep-lower-tail deviation -(r/2pi)(1 - x^2/l^2)_+, zero at t in {0, 2}."""
    t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
    out = np.zeros(t.shape)
    inside = (t > 0.0) & (t < 2.0)
    if np.any(inside):
        ti = t[inside]
        uniq, inv = np.unique(ti, return_inverse=True)
        width = ell(uniq)[inv]
        # far outside a tiny support ratio^2 overflows to inf, which clips to 0
        with np.errstate(over="ignore"):
            ratio = x[inside] / width
            out[inside] = -(1.0 / (2.0 * math.pi * width)) * np.clip(1.0 - ratio * ratio, 0.0, None)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class InstantonProfile:
    """Bundle of the profile functions; the support is {|y| <= width * l(s)}."""

    width: float = 1.0

    def r(self, t):
        return solve_r(t)

    def ell(self, t):
        return self.width * np.asarray(ell(t))

    def in_support(self, t, x) -> np.ndarray:
        return np.abs(np.asarray(x)) <= self.ell(t)

    def deviation(self, t, x):
        if self.width == 1.0:
            return rho_star(t, x)
        kappa = self.width ** 2
        return kappa * rho_star(t, np.asarray(x) / self.width)


# graded time nodes: t = 2 I_u(3, 3) behaves like u^3 at both ends, which
# turns the t^(-2/3) growth of r into a smooth integrand in u
def graded_times(n: int, a: float = 3.0) -> tuple[np.ndarray, np.ndarray]:
    u = (np.arange(n) + 0.5) / n
    t = 2.0 * special.betainc(a, a, u)
    dt_du = 2.0 * u ** (a - 1) * (1 - u) ** (a - 1) / special.beta(a, a)
    return t, dt_du / n


@register_grid_factory("instanton")
def instanton_grid(n_t: int = 2000, n_xi: int = 257, xi_max: float = 1.0, width: float = 1.0) -> SpaceTimeGrid:
    """Grid whose slices follow the support width l(t), graded at both ends."""
    if n_xi % 2 == 0:
        raise DomainError("n_xi must be odd so that xi = 0 is a node")
    t, wt = graded_times(int(n_t))
    xi = np.linspace(-xi_max, xi_max, int(n_xi))
    return SpaceTimeGrid(t, wt, xi, trapezoid_weights(xi.size, xi[1] - xi[0]), width * ell(t),
                         {"factory": "instanton", "n_t": int(n_t), "n_xi": int(n_xi),
                          "xi_max": float(xi_max), "width": float(width)})


def rho_star_field(grid: SpaceTimeGrid | None = None) -> ScalarField:
    grid = grid or instanton_grid()
    return ScalarField(grid, rho_star(grid.tt, grid.x))


def l2_norm_sq(rho: ScalarField) -> float:
    """Squared L2 norm by the grid quadrature."""
    return float(np.sum(rho.grid.weights * rho.values ** 2))


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def _integral_r_from_zero(b: float) -> float:
    # t = v^3 on [0, b] with b <= 1; r(v^3) 3 v^2 is smooth in v
    if b <= 0.0:
        return 0.0
    top = b ** (1.0 / 3.0)
    v = 0.5 * top * (_GL_NODES + 1.0)
    return float(0.5 * top * np.dot(_GL_WEIGHTS, solve_r(v ** 3) * 3.0 * v * v))


def integral_r(lower: float = 0.0, upper: float = 2.0) -> float:
    """Quadrature of r over (lower, upper), graded toward the singular ends."""
    if not 0.0 <= lower <= upper <= 2.0:
        raise DomainError("need 0 <= lower <= upper <= 2")

    def from_zero(b):
        if b <= 1.0:
            return _integral_r_from_zero(b)
        return 2.0 * _integral_r_from_zero(1.0) - _integral_r_from_zero(2.0 - b)

    return from_zero(upper) - from_zero(lower)


def _scaled_spec(spec: dict, factor: float) -> dict:
    spec = dict(spec)
    if spec.get("factory") == "uniform":
        spec["L"] = spec["L"] * factor
    else:
        spec["width"] = spec.get("width", 1.0) * factor
    return spec


CONVENTIONS = ("inverse_sqrt", "sqrt")


def scale_deviation(rho, kappa: float, convention: str = "inverse_sqrt"):
    """The scaled deviation (t, x) -> kappa * rho(t, kappa^(-1/2) x).

    With this convention the squared norm picks up kappa^(5/2). The
    ``"sqrt"`` convention, kappa * rho(t, kappa^(1/2) x), is kept for
    comparison. Fields are rescaled exactly by stretching their slices;
    callables are wrapped.
    """
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    if convention not in CONVENTIONS:
        raise DomainError(f"convention must be one of {CONVENTIONS}")
    stretch = math.sqrt(kappa) if convention == "inverse_sqrt" else 1.0 / math.sqrt(kappa)
    if isinstance(rho, ScalarField):
        g = rho.grid
        grid = SpaceTimeGrid(g.t, g.t_weights, g.xi, g.xi_weights, g.scale * stretch,
                             _scaled_spec(g.spec, stretch))
        return ScalarField(grid, kappa * rho.values)
    if callable(rho):
        return lambda t, x: kappa * np.asarray(rho(t, np.asarray(x) / stretch))
    raise DomainError("expected a ScalarField or a callable")


def slice_mass(rho, t: float, n: int = 4001, L: float | None = None) -> float:
    """Trapezoid integral of rho(t, .) over a symmetric window."""
    L = L if L is not None else 1.05 * float(ell(t)) if 0 < t < 2 else 1.0
    x = np.linspace(-L, L, n)
    vals = np.asarray(rho(np.full_like(x, t), x))
    return float(np.dot(trapezoid_weights(n, x[1] - x[0]), vals))


__all__ = [
    "InstantonProfile", "ScalarField", "SpaceTimeGrid", "cumulative_r", "ell", "ell_prime",
    "instanton_grid", "integral_r", "l2_norm_sq", "relation_residual", "rho_star",
    "rho_star_field", "r_ode_rhs", "sample_on", "scale_deviation", "slice_mass", "solve_r",
    "graded_times",
]
