"""Space-time grids and real-valued fields on them, with CSV and binary I/O.

A grid is a tensor product of time nodes ``t`` and reference coordinates
``xi``. Each time slice carries a positive spatial ``scale`` so the
physical node positions are ``x[i, j] = scale[i] * xi[j]``. The uniform grid
on [0, T] x [-L, L] is the special case ``scale == 1``; the other factories
(instanton-adapted, bridge frame) stretch each slice to the width of the
object being resolved.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError
from .heat_kernel import trapezoid_weights

FIELD_SCHEMA = "kpz-ldp scalar-field v1"
BINARY_MAGIC = b"KPZF"
_HEADER = struct.Struct("<4sIII d")

GRID_FACTORIES: dict[str, Callable[..., "SpaceTimeGrid"]] = {}


def register_grid_factory(name: str):
    def wrap(fn):
        GRID_FACTORIES[name] = fn
        return fn
    return wrap


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    t: np.ndarray
    t_weights: np.ndarray
    xi: np.ndarray
    xi_weights: np.ndarray
    scale: np.ndarray
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("t", "t_weights", "xi", "xi_weights", "scale"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.t.shape != self.t_weights.shape or self.t.shape != self.scale.shape:
            raise ConfigurationError("time nodes, weights and scales must have equal length")
        if self.xi.shape != self.xi_weights.shape:
            raise ConfigurationError("spatial nodes and weights must have equal length")
        if np.any(np.diff(self.t) <= 0) or np.any(np.diff(self.xi) <= 0):
            raise ConfigurationError("grid nodes must be strictly increasing")
        if np.any(self.scale <= 0):
            raise ConfigurationError("slice scales must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.t.size, self.xi.size)

    @property
    def n_t(self) -> int:
        return self.t.size

    @property
    def n_x(self) -> int:
        return self.xi.size

    @property
    def x(self) -> np.ndarray:
        """Physical node positions, shape (n_t, n_x)."""
        return self.scale[:, None] * self.xi[None, :]

    @property
    def tt(self) -> np.ndarray:
        return np.broadcast_to(self.t[:, None], self.shape)

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights for dx dt at every node."""
        return (self.t_weights * self.scale)[:, None] * self.xi_weights[None, :]

    @property
    def is_uniform(self) -> bool:
        return self.spec.get("factory") == "uniform"

    @property
    def L(self) -> float:
        return float(np.max(np.abs(self.xi)) * np.max(self.scale))

    def sample(self, fn) -> "ScalarField":
        return ScalarField(self, np.asarray(fn(self.tt, self.x), dtype=float) * np.ones(self.shape))

    def zeros(self) -> "ScalarField":
        return ScalarField(self, np.zeros(self.shape))

    @staticmethod
    def uniform(n_t: int, n_x: int, L: float, t_end: float = 2.0) -> "SpaceTimeGrid":
        return uniform_grid(n_t, n_x, L, t_end)

    @staticmethod
    def from_spec(spec: dict) -> "SpaceTimeGrid":
        spec = dict(spec)
        name = spec.pop("factory", None)
        if name not in GRID_FACTORIES:
            # factories register on import of their modules
            from . import deviation_field, pde_solver, she_simulator  # noqa: F401
        if name not in GRID_FACTORIES:
            raise ConfigurationError(f"unknown grid factory {name!r}")
        return GRID_FACTORIES[name](**spec)

    def same_as(self, other: "SpaceTimeGrid") -> bool:
        if self is other:
            return True
        return (self.shape == other.shape and np.array_equal(self.t, other.t)
                and np.array_equal(self.xi, other.xi) and np.array_equal(self.scale, other.scale))


@register_grid_factory("uniform")
def uniform_grid(n_t: int, n_x: int, L: float, t_end: float = 2.0) -> SpaceTimeGrid:
    """Uniform nodes on [0, t_end] x [-L, L] with trapezoid weights."""
    n_t, n_x = int(n_t), int(n_x)
    if n_t < 2 or n_x < 3:
        raise ConfigurationError("uniform grid needs n_t >= 2 and n_x >= 3")
    if not (L > 0 and t_end > 0):
        raise ConfigurationError("L and t_end must be positive")
    t = np.linspace(0.0, t_end, n_t)
    x = np.linspace(-L, L, n_x)
    return SpaceTimeGrid(
        t, trapezoid_weights(n_t, t[1] - t[0]), x, trapezoid_weights(n_x, x[1] - x[0]),
        np.ones(n_t), {"factory": "uniform", "n_t": n_t, "n_x": n_x, "L": float(L), "t_end": float(t_end)},
    )


def _interp_uniform(xi_nodes: np.ndarray, values: np.ndarray, rows: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Linear interpolation of values[rows, :] at reference points q, zero outside."""
    h = xi_nodes[1] - xi_nodes[0]
    pos = (q - xi_nodes[0]) / h
    n = xi_nodes.size
    inside = (pos >= 0) & (pos <= n - 1)
    j = np.clip(np.floor(pos).astype(np.int64), 0, n - 2)
    frac = pos - j
    out = (1.0 - frac) * values[rows, j] + frac * values[rows, j + 1]
    return np.where(inside, out, 0.0)


class ScalarField:
    """Real values on a :class:`SpaceTimeGrid`, indexed (time, space).

    Fields are immutable; arithmetic returns new fields on the same grid.
    Calling a field evaluates it at arbitrary points by linear
    interpolation in time and in the reference coordinate, with zero
    outside the spatial range and constant extension in time.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: SpaceTimeGrid, values):
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise ConfigurationError(f"values shape {values.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(values)):
            raise DomainError("field values must be finite")
        values.setflags(write=False)
        self.grid = grid
        self.values = values

    def __repr__(self):
        return f"ScalarField(shape={self.grid.shape}, factory={self.grid.spec.get('factory')!r})"

    def __call__(self, t, x):
        t, x = np.broadcast_arrays(np.asarray(t, float), np.asarray(x, float))
        g = self.grid
        if g.xi.size > 2 and not np.allclose(np.diff(g.xi), g.xi[1] - g.xi[0], rtol=1e-9, atol=0):
            raise ConfigurationError("interpolation needs a uniform reference coordinate")
        tf, xf = t.ravel(), x.ravel()
        if g.n_t == 1:
            i0 = np.zeros(tf.size, dtype=np.int64)
            i1, w = i0, np.zeros(tf.size)
        else:
            i1 = np.clip(np.searchsorted(g.t, tf), 1, g.n_t - 1)
            i0 = i1 - 1
            w = np.clip((tf - g.t[i0]) / (g.t[i1] - g.t[i0]), 0.0, 1.0)
        v0 = _interp_uniform(g.xi, self.values, i0, xf / g.scale[i0])
        v1 = _interp_uniform(g.xi, self.values, i1, xf / g.scale[i1])
        out = (1.0 - w) * v0 + w * v1
        return out.reshape(t.shape) if t.ndim else float(out[0])

    # arithmetic -------------------------------------------------------
    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if not self.grid.same_as(other.grid):
                raise ConfigurationError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def dot(self, other: "ScalarField") -> float:
        """L2 inner product using the grid quadrature."""
        return float(np.sum(self.grid.weights * self.values * self._coerce(other)))

    def norm(self) -> float:
        return float(np.sqrt(max(self.dot(self), 0.0)))

    def resample(self, grid: SpaceTimeGrid) -> "ScalarField":
        if grid.same_as(self.grid):
            return self
        return ScalarField(grid, self(grid.tt, grid.x))

    # serialisation ----------------------------------------------------
    def to_csv(self, path) -> None:
        g = self.grid
        rows = np.column_stack([g.tt.ravel(), g.x.ravel(), self.values.ravel()])
        header = f"# {FIELD_SCHEMA} {json.dumps(g.spec, sort_keys=True)}\nt,x,value"
        np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "ScalarField":
        path = Path(path)
        with path.open() as fh:
            first = fh.readline().strip()
            columns = fh.readline().strip()
        if not first.startswith(f"# {FIELD_SCHEMA}") or columns != "t,x,value":
            raise ConfigurationError(f"{path} is not a scalar-field CSV")
        spec = json.loads(first[len(f"# {FIELD_SCHEMA}"):].strip())
        grid = SpaceTimeGrid.from_spec(spec)
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        if data.shape != (grid.n_t * grid.n_x, 3):
            raise ConfigurationError("CSV row count does not match the declared grid")
        return cls(grid, data[:, 2].reshape(grid.shape))

    def to_binary(self, path) -> None:
        g = self.grid
        if not g.is_uniform or g.spec.get("t_end", 2.0) != 2.0:
            raise ConfigurationError("binary format stores uniform grids on [0, 2] only")
        header = _HEADER.pack(BINARY_MAGIC, g.n_t, g.n_x, 0, g.spec["L"])
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(self.values.astype("<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "ScalarField":
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.size:
            raise ConfigurationError("truncated field file")
        magic, n_t, n_x, _, L = _HEADER.unpack_from(raw)
        if magic != BINARY_MAGIC:
            raise ConfigurationError("bad magic in field file")
        values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
        if values.size != n_t * n_x:
            raise ConfigurationError("field file length does not match its header")
        return cls(uniform_grid(n_t, n_x, L), values.reshape(n_t, n_x))


def as_sampler(rho) -> Callable:
    """Turn a ScalarField, a callable or a constant into a vectorised f(t, x)."""
    if isinstance(rho, ScalarField):
        return rho
    if callable(rho):
        return rho
    c = float(rho)
    return lambda t, x: np.full(np.broadcast(np.asarray(t), np.asarray(x)).shape, c)


def sample_on(rho, grid: SpaceTimeGrid) -> np.ndarray:
    """Values of ``rho`` at the nodes of ``grid``."""
    if isinstance(rho, ScalarField):
        return rho.resample(grid).values
    f = as_sampler(rho)
    return np.asarray(f(grid.tt, grid.x), dtype=float) * np.ones(grid.shape)
