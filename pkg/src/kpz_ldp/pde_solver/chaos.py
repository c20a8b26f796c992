"""Iterated Duhamel (chaos) terms of Z(rho; t, x) by recursive quadrature.

Writing Xi_n(t, x) = p(t, x) psi_n(t, x), the recursion
Xi_n = int p(t - s, x - y) Xi_{n-1}(s, y) rho(s, y) becomes

    psi_n(t, x) = int_0^t ds int N(y; x s/t, s(t - s)/t) rho(s, y) psi_{n-1}(s, y) dy

with psi_0 = 1, a Gaussian average that Gauss-Hermite handles well.
Time is integrated with Gauss-Legendre after s = t (3u^2 - 2u^3), which
absorbs inverse square-root growth at both ends. Each psi_{n-1} is
tabulated on a tensor grid and interpolated by a bicubic spline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline

from ..errors import DomainError
from ..fields import as_sampler
from ..heat_kernel import eval_kernel

MAX_ORDER = 4


@dataclass(frozen=True)
class ChaosSettings:
    n_time: int = 48
    n_hermite: int = 32
    n_table_t: int = 48
    n_table_x: int = 161
    x_max: float = 8.0


def _nodes(n_time: int, n_hermite: int):
    u, wu = np.polynomial.legendre.leggauss(n_time)
    u = 0.5 * (u + 1.0)
    wu = 0.5 * wu
    frac = 3 * u ** 2 - 2 * u ** 3
    dfrac = 6 * u * (1 - u) * wu
    z, wz = np.polynomial.hermite_e.hermegauss(n_hermite)
    return frac, dfrac, z, wz / math.sqrt(2.0 * math.pi)


def _psi_next(f, prev, t, x, cfg: ChaosSettings):
    """psi_n at points (t, x) (1-D arrays) given psi_{n-1} as a callable."""
    frac, dfrac, z, wz = _nodes(cfg.n_time, cfg.n_hermite)
    t = np.asarray(t, float)[:, None, None]
    x = np.asarray(x, float)[:, None, None]
    s = t * frac[None, :, None]
    mean = x * frac[None, :, None]
    sd = np.sqrt(s * (t - s) / t)
    y = mean + sd * z[None, None, :]
    s_b = np.broadcast_to(s, y.shape)
    integrand = np.asarray(f(s_b, y), float) * prev(s_b, y)
    return np.einsum("pkh,h,k->p", integrand, wz, dfrac) * t[:, 0, 0]


class _Table:
    """psi tabulated on (s, y) with bicubic interpolation and clamped edges."""

    def __init__(self, s, y, values):
        self.spline = RectBivariateSpline(s, y, values, kx=3, ky=3)
        self.y_lo, self.y_hi = y[0], y[-1]
        self.s_lo, self.s_hi = s[0], s[-1]

    def __call__(self, s, y):
        shape = np.shape(y)
        ss = np.clip(np.ravel(s), self.s_lo, self.s_hi)
        yy = np.clip(np.ravel(y), self.y_lo, self.y_hi)
        return self.spline.ev(ss, yy).reshape(shape)


def chaos_ratios(rho, n: int, t: float = 2.0, x: float = 0.0, settings: ChaosSettings | None = None) -> list[float]:
    """psi_0 .. psi_n at (t, x), i.e. Xi_k(t, x) / p(t, x) for k <= n."""
    if not 0 <= n <= MAX_ORDER:
        raise DomainError(f"chaos order must be in [0, {MAX_ORDER}]")
    if not t > 0:
        raise DomainError("t must be positive")
    cfg = settings or ChaosSettings()
    f = as_sampler(rho)
    out = [1.0]
    prev = lambda s, y: np.ones(np.shape(y))
    # table nodes cluster toward s = 0 where psi_k ~ s^k varies fastest
    s_tab = t * (0.5 * (1 - np.cos(np.pi * (np.arange(cfg.n_table_t) + 0.5) / cfg.n_table_t)))
    y_tab = np.linspace(-cfg.x_max - abs(x), cfg.x_max + abs(x), cfg.n_table_x)
    for k in range(1, n + 1):
        out.append(float(_psi_next(f, prev, [t], [x], cfg)[0]))
        if k < n:
            ss, yy = np.meshgrid(s_tab, y_tab, indexing="ij")
            vals = _psi_next(f, prev, ss.ravel(), yy.ravel(), cfg).reshape(ss.shape)
            prev = _Table(s_tab, y_tab, vals)
    return out


def chaos_term(rho, n: int, t: float = 2.0, x: float = 0.0, settings: ChaosSettings | None = None) -> float:
    """The n-th iterated Duhamel term Xi_n(rho; t, x), n <= 4."""
    return float(eval_kernel(t, x) * chaos_ratios(rho, n, t, x, settings)[-1])


def chaos_sum(rho, n_max: int = MAX_ORDER, t: float = 2.0, x: float = 0.0,
              settings: ChaosSettings | None = None) -> float:
    """Truncated series sum_{k <= n_max} Xi_k / p(t, x)."""
    return float(sum(chaos_ratios(rho, n_max, t, x, settings)))
