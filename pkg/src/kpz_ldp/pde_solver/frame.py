"""Bridge-frame solver for h_lam(rho; 2, 0) and its exact gradient.

With viscosity 1/lam the quantity

    h_lam(rho) = lam^-1 log E[exp(int_0^2 lam rho(s, B(s)) ds)],

where B is a Brownian bridge 0 -> 0 on [0, 2] with diffusivity 1/lam, is
computed in self-similar coordinates: tau = (1/2) log(s / (2 - s)) and
xi = B / sigma(s) with sigma^2 = s(2 - s) / (2 lam). In these variables the
standardised bridge is a stationary Ornstein-Uhlenbeck process, so the
weighted density Q(tau, xi) obeys

    Q_tau = Q_xixi + (xi Q)_xi + s(2 - s) lam rho(s, sigma xi) Q,

starting from the standard normal density, and h_lam = log(sum Q dxi)/lam at
the final time. The free problem is stationary, which makes the width of
the frame independent of time and removes both singular end layers. The
drift-diffusion operator is discretised in flux form so that the discrete
Gaussian is an exact steady state and mass is conserved; time stepping is
Strang splitting with Crank-Nicolson half steps.

lam = 1 gives the unscaled h(rho; 2, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from ..errors import ConfigurationError, DomainError
from ..fields import ScalarField, SpaceTimeGrid, register_grid_factory, sample_on

DEFAULT_S_MIN = 1e-10
DEFAULT_DTAU = 0.01
DEFAULT_DXI = 0.02


def frame_xi_max(reach: float) -> float:
    """Half-width in xi covering N(0,1) tails plus a support of width sqrt(reach) l."""
    return 8.0 + 0.64 * math.sqrt(2.0 * max(reach, 0.0))


def frame_times(s_min: float, dtau: float) -> tuple[np.ndarray, float]:
    tau_end = 0.5 * math.log((2.0 - s_min) / s_min)
    n = int(math.ceil(2.0 * tau_end / dtau))
    step = 2.0 * tau_end / n
    tau_mid = -tau_end + (np.arange(n) + 0.5) * step
    return tau_mid, step


def s_of_tau(tau):
    # s / (2 - s) = exp(2 tau)
    return 2.0 / (1.0 + np.exp(-2.0 * np.asarray(tau)))


@register_grid_factory("bridge_frame")
def frame_grid(lam: float = 1.0, reach: float = 0.0, s_min: float = DEFAULT_S_MIN, dtau: float = DEFAULT_DTAU,
               dxi: float = DEFAULT_DXI, width: float = 1.0) -> SpaceTimeGrid:
    """Nodes of the bridge frame as a space-time grid in physical variables.

    Time nodes are the step midpoints s_n with weights s(2 - s) dtau; slice
    n is stretched by sigma(s_n) so physical positions are sigma(s_n) xi.
    """
    if not lam > 0:
        raise DomainError("lam must be positive")
    tau_mid, step = frame_times(s_min, dtau)
    s = s_of_tau(tau_mid)
    jac = s * (2.0 - s)
    half = int(math.ceil(frame_xi_max(reach) / dxi))
    xi = dxi * np.arange(-half, half + 1)
    sigma = np.sqrt(jac / (2.0 * lam))
    return SpaceTimeGrid(s, jac * step, xi, np.full(xi.size, dxi), width * sigma,
                         {"factory": "bridge_frame", "lam": float(lam), "reach": float(reach), "s_min": float(s_min),
                          "dtau": float(dtau), "dxi": float(dxi), "width": float(width)})


class _DriftDiffusionHalfStep:
    """Crank-Nicolson step of Q_tau = Q_xixi + (xi Q)_xi in flux form."""

    def __init__(self, xi: np.ndarray, k: float, theta: float = 0.5):
        d = xi[1] - xi[0]
        delta = 0.25 * (xi[1:] + xi[:-1]) * d  # half the log-ratio of neighbouring Gaussian weights
        ep, em = np.exp(delta), np.exp(-delta)
        n = xi.size
        diag = np.zeros(n)
        diag[:-1] -= em
        diag[1:] -= ep
        upper = ep / d ** 2        # A[j, j+1]
        lower = em / d ** 2        # A[j+1, j]
        diag /= d ** 2
        self.diag, self.upper, self.lower = diag, upper, lower
        self.theta = theta
        self.k = k
        self.ab = self._banded(-theta * k, upper, diag, lower)
        self.ab_t = self._banded(-theta * k, lower, diag, upper)

    @staticmethod
    def _banded(c, upper, diag, lower):
        ab = np.zeros((3, diag.size))
        ab[0, 1:] = c * upper
        ab[1, :] = 1.0 + c * diag
        ab[2, :-1] = c * lower
        return ab

    def _explicit(self, q, upper, lower):
        c = (1.0 - self.theta) * self.k
        out = q + c * self.diag * q
        out[:-1] += c * upper * q[1:]
        out[1:] += c * lower * q[:-1]
        return out

    def forward(self, q):
        return solve_banded((1, 1), self.ab, self._explicit(q, self.upper, self.lower), check_finite=False)

    def adjoint(self, a):
        return self._explicit(solve_banded((1, 1), self.ab_t, a, check_finite=False), self.lower, self.upper)


@dataclass
class FrameSolve:
    h: float
    mass: float
    layer: float
    gradient: ScalarField | None = None


_HERMITE_X, _HERMITE_W = np.polynomial.hermite_e.hermegauss(40)
_HERMITE_W = _HERMITE_W / math.sqrt(2.0 * math.pi)
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


class BridgeFrame:
    """Solver for h_lam on a fixed frame; reuse one instance for many potentials."""

    def __init__(self, lam: float = 1.0, reach: float | None = None, s_min: float = DEFAULT_S_MIN,
                 dtau: float = DEFAULT_DTAU, dxi: float = DEFAULT_DXI):
        if not lam > 0:
            raise DomainError("lam must be positive")
        if dxi > 0.125:
            # sigma(1) dxi must resolve the viscous scale (2 lam)^(-1/2) / 8
            raise ConfigurationError("dxi above 1/8 under-resolves the viscous scale")
        if not 0 < s_min < 0.01 or not 0 < dtau <= 0.1:
            raise ConfigurationError("s_min must lie in (0, 0.01) and dtau in (0, 0.1]")
        self.lam = float(lam)
        self.reach = float(lam if reach is None else reach)
        self.s_min = s_min
        self.grid = frame_grid(self.lam, self.reach, s_min, dtau, dxi)
        tau_mid, self.dtau = frame_times(s_min, dtau)
        self.s = self.grid.t
        self.jac = self.s * (2.0 - self.s)
        xi = self.grid.xi
        self.step = _DriftDiffusionHalfStep(xi, 0.5 * self.dtau)
        phi = np.exp(-0.5 * xi * xi)
        self.q0 = phi / (phi.sum() * dxi)
        self.dxi = dxi

    # potential ---------------------------------------------------------
    def nodal(self, rho) -> tuple[np.ndarray, bool]:
        """Values of rho on the frame nodes and whether end layers apply."""
        if isinstance(rho, ScalarField) and rho.grid.same_as(self.grid):
            return rho.values, False
        return sample_on(rho, self.grid), True

    def _end_layers(self, rho) -> float:
        """First-order contribution of lam * rho over s < s_min and s > 2 - s_min."""
        if isinstance(rho, ScalarField) and rho.grid.same_as(self.grid):
            return 0.0
        f = rho if callable(rho) else (lambda t, x: np.full(np.broadcast(t, x).shape, float(rho)))
        # s = v^3 absorbs a s^(-2/3) singularity
        top = self.s_min ** (1.0 / 3.0)
        v = 0.5 * top * (_GL_X + 1.0)
        wv = 0.5 * top * _GL_W * 3.0 * v * v
        total = 0.0
        for s in (v ** 3, 2.0 - v ** 3):
            sig = np.sqrt(s * (2.0 - s) / (2.0 * self.lam))
            vals = np.asarray(f(np.broadcast_to(s[:, None], (s.size, _HERMITE_X.size)), sig[:, None] * _HERMITE_X[None, :]))
            total += float(wv @ (vals @ _HERMITE_W))
        return self.lam * total

    # solve ---------------------------------------------------------------
    def solve(self, rho, gradient: bool = False) -> FrameSolve:
        values, with_layers = self.nodal(rho)
        pot = np.exp((self.dtau * self.lam * self.jac)[:, None] * values)
        step = self.step
        q = self.q0
        keep = np.empty_like(values) if gradient else None
        for n in range(values.shape[0]):
            v = pot[n] * step.forward(q)
            if gradient:
                keep[n] = v
            q = step.forward(v)
        mass = float(q.sum() * self.dxi)
        if not mass > 0 or not math.isfinite(mass):
            raise ConfigurationError("frame solve lost positivity or overflowed")
        layer = self._end_layers(rho) if with_layers else 0.0
        h = (math.log(mass) + layer) / self.lam
        grad = None
        if gradient:
            a = np.full(q.size, self.dxi / mass)
            g = np.empty_like(values)
            for n in range(values.shape[0] - 1, -1, -1):
                c = step.adjoint(a)
                g[n] = c * keep[n]
                a = step.adjoint(pot[n] * c)
            # g[n, j] = d log(mass) / d V[n, j] with V = dtau lam jac rho
            dh = g * (self.dtau * self.jac)[:, None]
            grad = ScalarField(self.grid, dh / self.grid.weights)
        return FrameSolve(h, mass, layer, grad)


def scaled_h(rho, lam: float, frame: BridgeFrame | None = None) -> float:
    """h_lam(rho; 2, 0) for viscosity 1/lam, lam >= 1."""
    if not lam >= 1:
        raise DomainError("scaled_h needs lam >= 1")
    frame = frame or BridgeFrame(lam)
    if frame.lam != lam:
        raise ConfigurationError("frame was built for a different lam")
    return frame.solve(rho).h


def unscaled_h(rho, frame: BridgeFrame | None = None) -> float:
    """h(rho; 2, 0) through the bridge frame (lam = 1)."""
    frame = frame or BridgeFrame(1.0, reach=0.0)
    return frame.solve(rho).h
