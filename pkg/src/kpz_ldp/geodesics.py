"""Zero-viscosity path problem: minimise int_0^t (1/2) g'(s)^2 - rho*(s, g(s)) ds.

Closed forms use l = 1/r and its cumulative integral R(t) = int_0^t r:

* inside the support, |x| <= l(t), the minimiser is a l(.) with a = x / l(t)
  and energy R(t)(1 + a^2)/(2 pi) - a^2 t / 2; at (2, 0) every |a| <= 1 is
  optimal with energy 1;
* outside, the path follows sign(x) l up to the tangency time t_* where
  l(t_*) + l'(t_*)(t - t_*) = |x|, then the tangent line; its energy is
  R(t_*)/pi - t_*/2 + (1/2) l'(t_*)^2 (t - t_*).

Paths live on meshes graded toward the ends, where l behaves like s^(2/3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special
from scipy.linalg import solve_banded

from .deviation_field import cumulative_r, ell, ell_prime, rho_star
from .errors import DomainError, NumericalError

GRADING = 5.0


@dataclass(frozen=True)
class DiscretePath:
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, float)
        g = np.asarray(self.positions, float)
        if t.ndim != 1 or t.shape != g.shape or t.size < 3:
            raise DomainError("times and positions must be matching 1-D arrays of length >= 3")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise DomainError("times must start at 0 and increase")
        if g[0] != 0.0:
            raise DomainError("paths start at the origin")
        if not np.all(np.isfinite(g)):
            raise DomainError("positions must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", g)

    @property
    def t(self) -> float:
        return float(self.times[-1])

    @property
    def x(self) -> float:
        return float(self.positions[-1])

    def with_positions(self, positions) -> "DiscretePath":
        return DiscretePath(self.times, positions)

    def to_csv(self, path) -> None:
        np.savetxt(path, np.column_stack([self.times, self.positions]), delimiter=",",
                   header="# kpz-ldp path v1\ns,gamma", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "DiscretePath":
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        return cls(data[:, 0], data[:, 1])


def path_times(t: float, n_nodes: int, grading: float = GRADING) -> np.ndarray:
    """Nodes on [0, t] clustered like u^grading at both ends."""
    if n_nodes < 3:
        raise DomainError("need at least 3 nodes")
    u = np.linspace(0.0, 1.0, n_nodes)
    s = t * special.betainc(grading, grading, u)
    s[0], s[-1] = 0.0, t
    return s


def _potential(s, x):
    """-rho*, nonnegative."""
    return -rho_star(s, x)


def _potential_dx(s, x, width):
    # d/dx of (r/2 pi)(1 - x^2/l^2) inside the support is -x / (pi l^3)
    inside = np.abs(x) < width
    return np.where(inside, -x / (math.pi * width ** 3), 0.0)


def path_energy(path: DiscretePath) -> float:
    """Discrete energy: exact kinetic term of the piecewise-linear path plus
    midpoint sampling of -rho*."""
    s, g = path.times, path.positions
    ds = np.diff(s)
    kinetic = 0.5 * np.sum(np.diff(g) ** 2 / ds)
    mids = 0.5 * (s[1:] + s[:-1])
    potential = np.sum(ds * _potential(mids, 0.5 * (g[1:] + g[:-1])))
    return float(kinetic + potential)


def _energy_and_gradient(s, g, mids, ds, widths):
    dg = np.diff(g)
    gm = 0.5 * (g[1:] + g[:-1])
    energy = 0.5 * np.sum(dg * dg / ds) + np.sum(ds * _potential(mids, gm))
    vel = dg / ds
    fx = ds * _potential_dx(mids, gm, widths)
    grad = np.zeros_like(g)
    grad[1:-1] = vel[:-1] - vel[1:] + 0.5 * (fx[:-1] + fx[1:])
    return float(energy), grad


def _stiffness(ds):
    inv = 1.0 / ds
    m = ds.size - 1
    ab = np.zeros((3, m))
    ab[1] = inv[:-1] + inv[1:]
    ab[0, 1:] = -inv[1:-1]
    ab[2, :-1] = -inv[1:-1]
    return ab


@dataclass
class DescentResult:
    path: DiscretePath
    energy: float
    converged: bool
    iterations: int

    def __iter__(self):
        return iter((self.path, self.energy))


def _descend(path: DiscretePath, iterations: int, tol: float = 1e-10) -> DescentResult:
    """H1-preconditioned gradient descent with Armijo backtracking."""
    s = path.times
    g = path.positions.copy()
    ds = np.diff(s)
    mids = 0.5 * (s[1:] + s[:-1])
    widths = ell(mids)
    ab = _stiffness(ds)
    energy, grad = _energy_and_gradient(s, g, mids, ds, widths)
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        d = np.zeros_like(g)
        d[1:-1] = -solve_banded((1, 1), ab, grad[1:-1])
        slope = float(np.dot(grad, d))
        if -slope < tol:
            converged = True
            break
        step = 1.0
        while True:
            trial = g + step * d
            e_new, g_new = _energy_and_gradient(s, trial, mids, ds, widths)
            if e_new <= energy + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-12:
                break
        if step < 1e-12:
            converged = -slope < 10.0 * tol
            break
        g, energy, grad = trial, e_new, g_new
    return DescentResult(path.with_positions(g), energy, converged, it)


@dataclass
class GeodesicResult:
    path: DiscretePath
    energy: float
    exact_energy: float
    classification: str
    alpha: float | None
    t_star: float | None
    nonunique: bool

    def tangency_slopes(self) -> tuple[float, float]:
        """(slope of sign(x) l at t_*-, slope of the final line segment)."""
        if self.t_star is None:
            raise DomainError("no tangency point for this endpoint")
        t, x = self.path.t, self.path.x
        sign = 1.0 if x >= 0 else -1.0
        left = sign * float(ell_prime(self.t_star))
        right = (x - sign * float(ell(self.t_star))) / (t - self.t_star)
        return left, right


def interior_energy(t: float, alpha: float) -> float:
    return cumulative_r(t) * (1.0 + alpha * alpha) / (2.0 * math.pi) - 0.5 * alpha * alpha * t


def tangent_time(t: float, x: float) -> float:
    """Tangency time for an endpoint outside the support."""
    ax = abs(x)

    def g(ts):
        return ell(ts) + ell_prime(ts) * (t - ts) - ax

    lo, hi = 1e-14 * t, t * (1.0 - 1e-15)
    if not (g(lo) > 0 > g(hi)):
        raise NumericalError(f"tangency bracket failed for (t, x) = ({t}, {x})")
    return optimize.brentq(g, lo, hi, xtol=1e-15, rtol=1e-14, maxiter=300)


def tangent_energy(t: float, t_star: float) -> float:
    slope = ell_prime(t_star)
    return cumulative_r(t_star) / math.pi - 0.5 * t_star + 0.5 * slope * slope * (t - t_star)


def _in_support(t: float, x: float) -> bool:
    return 0 < t < 2 and abs(x) <= ell(t)


def geodesic(t: float, x: float, n_nodes: int = 1001, polish: bool = True) -> GeodesicResult:
    """Minimising path from (0, 0) to (t, x), with its classification."""
    if not 0 < t <= 2:
        raise DomainError("t must lie in (0, 2]")
    s = path_times(t, n_nodes)
    if t == 2.0 and x == 0.0:
        path = DiscretePath(s, np.zeros_like(s))
        return GeodesicResult(path, path_energy(path), 1.0, "interior-family", 0.0, None, True)
    if _in_support(t, x):
        alpha = x / float(ell(t))
        pos = alpha * ell(s)
        pos[-1] = x
        kind, t_star, exact = "interior-unique", None, interior_energy(t, alpha)
    else:
        t_star = tangent_time(t, x)
        sign = 1.0 if x >= 0 else -1.0
        line = ell(t_star) + ell_prime(t_star) * (s - t_star)
        pos = sign * np.where(s <= t_star, ell(np.minimum(s, t_star)), line)
        pos[-1] = x
        alpha, kind, exact = None, "tangent", tangent_energy(t, t_star)
    path = DiscretePath(s, pos)
    if polish:
        path = _descend(path, 200).path
    return GeodesicResult(path, path_energy(path), exact, kind, alpha, t_star, False)


def h_star(t: float, x: float, n_nodes: int = 1001) -> float:
    """Zero-viscosity limit shape: minus the minimal path energy."""
    return -geodesic(t, x, n_nodes).energy


def h_star_exact(t: float, x: float) -> float:
    """Closed-form value of h_star."""
    if not 0 < t <= 2:
        raise DomainError("t must lie in (0, 2]")
    if t == 2.0 and x == 0.0:
        return -1.0
    if _in_support(t, x):
        return -interior_energy(t, x / float(ell(t)))
    return -tangent_energy(t, tangent_time(t, x))


def direct_minimize(t: float, x: float, n_nodes: int = 801, iterations: int = 10000, seed: int = 0,
                    bias: float = 0.0, amplitude: float = 0.3) -> DescentResult:
    """Descent from a straight line plus a seeded sinusoidal perturbation.

    ``bias`` adds a multiple of sin(pi s / t) to tilt the start toward
    positive or negative paths.
    """
    if n_nodes < 16:
        raise DomainError("n_nodes must be at least 16")
    if not 0 < t <= 2:
        raise DomainError("t must lie in (0, 2]")
    s = path_times(t, n_nodes)
    rng = np.random.default_rng(seed)
    k = np.arange(1, 6)
    coef = amplitude * rng.standard_normal(k.size) / k
    bump = np.sin(np.pi * np.outer(s / t, k)) @ coef + bias * np.sin(np.pi * s / t)
    start = x * s / t + bump
    start[0], start[-1] = 0.0, x
    return _descend(DiscretePath(s, start), iterations)


def family_distance(path: DiscretePath) -> tuple[float, float]:
    """(alpha, sup |gamma - alpha l|) for the best |alpha| <= 1."""
    width = ell(path.times)

    def sup(a):
        return float(np.max(np.abs(path.positions - a * width)))

    res = optimize.minimize_scalar(sup, bounds=(-1.0, 1.0), method="bounded", options={"xatol": 1e-10})
    return float(res.x), float(res.fun)


def geodesic_family(alphas=(-1.0, -0.5, 0.0, 0.5, 1.0), exterior=((2.0, 1.0), (2.0, -1.0), (1.5, 1.2)),
                    n_nodes: int = 401) -> list[tuple[str, DiscretePath]]:
    """Paths for plotting: the optimal family into (2, 0) and some tangent geodesics."""
    s = path_times(2.0, n_nodes)
    out = [(f"alpha={a:+.2f}", DiscretePath(s, a * ell(s))) for a in alphas]
    for t, x in exterior:
        out.append((f"t={t:g},x={x:g}", geodesic(t, x, n_nodes, polish=False).path))
    return out
