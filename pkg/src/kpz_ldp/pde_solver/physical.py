"""Heat equation with potential in physical coordinates, and its exact adjoint.

Z_t = (1/2) Z_xx + rho Z from delta initial data. The delta is propagated
exactly to a small time t0, where Z(t0, x) = p(t0, x) exp(Lambda(x)) and
Lambda(x) is the bridge average of rho over [0, t0] (first-order in t0).
From there Strang splitting advances to t = 2: half heat step, potential
factor exp(dt * mean of rho at the two step ends), half heat step. Heat
half-steps are theta-schemes with homogeneous Dirichlet ends.

Because every step is linear in Z and the heat half-steps are symmetric,
the gradient of h(2, 0) = log(sqrt(4 pi) Z(2, 0)) with respect to the nodal
values of rho is obtained exactly by running the same steps backwards.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import solve_banded

from ..errors import ConfigurationError
from ..fields import ScalarField, SpaceTimeGrid, register_grid_factory, sample_on, uniform_grid
from ..heat_kernel import eval_kernel, trapezoid_weights
from .config import SchemeParams

SQRT_4PI = math.sqrt(4.0 * math.pi)
MASS_LOSS_WARN = 1e-8


class _HeatHalfStep:
    """theta-scheme for Z_t = Z_xx / 2 over a step k on interior nodes."""

    def __init__(self, n_interior: int, dx: float, k: float, theta: float):
        self.mu = 0.5 * k / (dx * dx)
        self.theta = theta
        m = n_interior
        ab = np.zeros((3, m))
        ab[0, 1:] = -theta * self.mu
        ab[1, :] = 1.0 + 2.0 * theta * self.mu
        ab[2, :-1] = -theta * self.mu
        self.ab = ab

    def __call__(self, z: np.ndarray) -> np.ndarray:
        # z holds all nodes with zero Dirichlet values at both ends
        inner = z[1:-1]
        c = (1.0 - self.theta) * self.mu
        rhs = (1.0 - 2.0 * c) * inner
        rhs[1:] += c * inner[:-1]
        rhs[:-1] += c * inner[1:]
        out = np.zeros_like(z)
        out[1:-1] = solve_banded((1, 1), self.ab, rhs, check_finite=False) if self.theta > 0 else rhs
        return out


def _layer_weights(x: np.ndarray, s: float, t0: float, dx: float) -> sparse.csr_matrix:
    """Rows map nodal rho(s, .) to its bridge average at (s | 0 -> (t0, x_j))."""
    n = x.size
    mean = x * (s / t0)
    sd = math.sqrt(max(s * (t0 - s) / t0, 0.0))
    if sd < 2.0 * dx:
        pos = (mean - x[0]) / dx
        j = np.clip(np.floor(pos).astype(int), 0, n - 2)
        frac = np.clip(pos - j, 0.0, 1.0)
        rows = np.repeat(np.arange(n), 2)
        cols = np.column_stack([j, j + 1]).ravel()
        vals = np.column_stack([1.0 - frac, frac]).ravel()
        return sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    half = int(math.ceil(7.0 * sd / dx))
    offsets = np.arange(-half, half + 1)
    centre = np.rint((mean - x[0]) / dx).astype(int)
    cols = centre[:, None] + offsets[None, :]
    valid = (cols >= 0) & (cols < n)
    colc = np.clip(cols, 0, n - 1)
    wts = np.exp(-0.5 * ((x[colc] - mean[:, None]) / sd) ** 2) * valid
    wts /= wts.sum(axis=1, keepdims=True)
    rows = np.broadcast_to(np.arange(n)[:, None], cols.shape)
    return sparse.csr_matrix((wts[valid], (rows[valid], cols[valid])), shape=(n, n))


@register_grid_factory("uniform_window")
def uniform_window_grid(n_t: int, n_x: int, L: float, start_index: int, t_end: float = 2.0) -> SpaceTimeGrid:
    """Rows ``start_index:`` of the uniform grid, used for solution fields."""
    full = uniform_grid(n_t, n_x, L, t_end)
    t = full.t[start_index:]
    return SpaceTimeGrid(t, trapezoid_weights(t.size, t[1] - t[0]), full.xi, full.xi_weights, np.ones(t.size),
                         {"factory": "uniform_window", "n_t": n_t, "n_x": n_x, "L": L,
                          "start_index": start_index, "t_end": t_end})


@dataclass
class PotentialSolveResult:
    """Forward solution on [t0, 2] x [-L, L] plus what the adjoint needs."""

    z_field: ScalarField
    t0: float
    params: SchemeParams
    rho_values: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def z_end(self) -> float:
        """Z(2, 0)."""
        return float(self.z_field.values[-1, self.params.nx // 2])

    @property
    def h(self) -> float:
        """h(2, 0) = log(sqrt(4 pi) Z(2, 0))."""
        return math.log(SQRT_4PI * self.z_end)

    @property
    def ratio(self) -> float:
        """Z(2, 0) / p(2, 0), the bridge expectation."""
        return self.z_end / eval_kernel(2.0, 0.0)

    def h_at(self, t, x):
        return np.log(SQRT_4PI * np.asarray(self.z_field(t, x)))


def _check_stability(p: SchemeParams):
    if p.theta < 0.5:
        # explicit part of a half step must satisfy (1 - 2 theta) D k / dx^2 <= 1/2 with D = 1/2
        if (1.0 - 2.0 * p.theta) * 0.5 * (0.5 * p.dt) / p.dx ** 2 > 0.5:
            raise ConfigurationError(
                f"theta={p.theta} with dt={p.dt:.3g}, dx={p.dx:.3g} violates the explicit stability limit")


def solve_forward(rho, params: SchemeParams | None = None, t0: float | None = None) -> PotentialSolveResult:
    """Solve for Z(rho; t, x) on the uniform grid described by ``params``.

    ``rho`` may be a ScalarField on any grid (it is interpolated onto the
    solver grid when needed), a vectorised callable f(t, x) or a constant.
    """
    p = params or SchemeParams()
    if t0 is not None:
        p = p.replace(t0=t0)
    _check_stability(p)
    grid = uniform_grid(p.nt, p.nx, p.L)
    x = grid.xi
    dt, dx = p.dt, p.dx
    n0 = max(1, int(round(p.t0 / dt)))
    if n0 >= p.nt - 2:
        raise ConfigurationError("t0 leaves no steps for the scheme")
    t0_eff = n0 * dt
    rho_v = sample_on(rho, grid)

    layer = [_layer_weights(x, grid.t[m], t0_eff, dx) for m in range(n0 + 1)]
    w_layer = trapezoid_weights(n0 + 1, dt)
    lam = sum(w_layer[m] * (layer[m] @ rho_v[m]) for m in range(n0 + 1))

    z = eval_kernel(t0_eff, x) * np.exp(lam)
    z[0] = z[-1] = 0.0
    regular = _HeatHalfStep(p.nx - 2, dx, 0.5 * dt, p.theta)
    damped = _HeatHalfStep(p.nx - 2, dx, 0.5 * dt, 1.0)
    n_last = p.nt - 1
    zs = np.empty((p.nt - n0, p.nx))
    vs = np.empty((p.nt - 1 - n0, p.nx))
    zs[0] = z
    flux = 0.0
    for n in range(n0, n_last):
        step = damped if n >= n_last - p.smoothing_steps else regular
        u = step(z)
        v = np.exp(0.5 * dt * (rho_v[n] + rho_v[n + 1])) * u
        z = step(v)
        vs[n - n0] = v
        zs[n + 1 - n0] = z
        flux += dt * 0.5 * (z[1] + z[-2]) / dx
    if not zs[-1, p.nx // 2] > 0:
        raise ConfigurationError("non-positive Z(2, 0): the potential is too strong for this grid")
    wgrid = uniform_window_grid(p.nt, p.nx, p.L, n0)
    # far tails underflow to zero; only sign changes count as positivity loss
    diag = {"mass_loss": float(flux), "mass_warning": bool(flux > MASS_LOSS_WARN),
            "t0_effective": t0_eff, "start_index": n0,
            "negative_nodes": int(np.count_nonzero(zs[:, 1:-1] < 0)), "min_z": float(zs[:, 1:-1].min())}
    if diag["mass_warning"]:
        warnings.warn(f"boundary mass loss {flux:.2e} exceeds {MASS_LOSS_WARN:g}; enlarge L", RuntimeWarning)
    res = PotentialSolveResult(ScalarField(wgrid, zs), t0_eff, p, rho_v, diag)
    res._cache.update(vs=vs, layer=layer, w_layer=w_layer, n0=n0, grid=grid, regular=regular, damped=damped)
    return res


def _adjoint(res: PotentialSolveResult) -> np.ndarray:
    """d h(2,0) / d rho at every node of the solver grid."""
    c = res._cache
    p = res.params
    n0, vs, dt = c["n0"], c["vs"], p.dt
    zs = res.z_field.values
    n_last = p.nt - 1
    a = np.zeros(p.nx)
    a[p.nx // 2] = 1.0 / res.z_end
    dh = np.zeros((p.nt, p.nx))
    for n in range(n_last - 1, n0 - 1, -1):
        step = c["damped"] if n >= n_last - p.smoothing_steps else c["regular"]
        cvec = step(a)
        g = cvec * vs[n - n0]
        dh[n] += 0.5 * dt * g
        dh[n + 1] += 0.5 * dt * g
        a = step(np.exp(0.5 * dt * (res.rho_values[n] + res.rho_values[n + 1])) * cvec)
    seed = a * zs[0]
    for m in range(n0 + 1):
        dh[m] += c["w_layer"][m] * (c["layer"][m].T @ seed)
    return dh


def gradient_h(rho, params: SchemeParams | None = None, result: PotentialSolveResult | None = None) -> ScalarField:
    """Functional derivative of h(rho; 2, 0) as a density on the solver grid.

    The returned field G satisfies sum(G * chi * weights) = exact discrete
    directional derivative of h in the direction chi.
    """
    res = result if result is not None else solve_forward(rho, params)
    grid = res._cache["grid"]
    dh = _adjoint(res)
    w = grid.weights
    G = np.divide(dh, w, out=np.zeros_like(dh), where=w > 0)
    return ScalarField(grid, G)


def h_value(rho, params: SchemeParams | None = None) -> float:
    return solve_forward(rho, params).h
