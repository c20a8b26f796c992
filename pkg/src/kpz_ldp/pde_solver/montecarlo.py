"""Feynman-Kac Monte Carlo over Brownian bridges."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from ..errors import DomainError
from ..fields import as_sampler
from ..parallel import block_rng, block_sizes, map_blocks

BLOCK = 4096


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    seed: int

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr


def combine_moments(parts) -> tuple[float, float, int]:
    """Mean and standard error from per-block (sum, sum of squares, count)."""
    s = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    n = sum(p[2] for p in parts)
    mean = s / n
    var = max(s2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    return mean, math.sqrt(var / n), n


def bridge_times(t: float, n_steps: int, grading: str = "uniform") -> np.ndarray:
    u = np.linspace(0.0, 1.0, n_steps + 1)
    if grading == "uniform":
        return t * u
    if grading == "graded":
        # cubic clustering at both ends, for potentials singular there
        return t * special.betainc(3.0, 3.0, u)
    raise DomainError("grading must be 'uniform' or 'graded'")


def feynman_kac_mc(rho, t: float = 2.0, x: float = 0.0, n_paths: int = 100_000, n_steps: int = 200,
                   seed: int = 0, grading: str = "uniform", workers: int | None = None) -> McEstimate:
    """Estimate E[exp(int_0^t rho(s, b(s)) ds)] over bridges b from (0, 0) to (t, x).

    This is Z(rho; t, x) / p(t, x). The time integral is the trapezoid rule
    on the bridge nodes. Paths are generated in fixed blocks, each seeded
    from (seed, block index), so the estimate is the same for any number of
    workers.
    """
    if n_paths < 1 or n_steps < 2:
        raise DomainError("need n_paths >= 1 and n_steps >= 2")
    if not t > 0:
        raise DomainError("t must be positive")
    f = as_sampler(rho)
    s = bridge_times(t, n_steps, grading)
    ds = np.diff(s)
    frac = s / t
    sizes = block_sizes(n_paths, BLOCK)

    def run(b):
        m = sizes[b]
        rng = block_rng(seed, b)
        w = np.zeros((m, s.size))
        w[:, 1:] = np.cumsum(rng.standard_normal((m, ds.size)) * np.sqrt(ds), axis=1)
        path = w - frac[None, :] * (w[:, -1:] - x)
        vals = np.asarray(f(np.broadcast_to(s, path.shape), path), dtype=float)
        integral = 0.5 * ((vals[:, 1:] + vals[:, :-1]) * ds).sum(axis=1)
        e = np.exp(integral)
        return float(e.sum()), float((e * e).sum()), m

    mean, se, n = combine_moments(map_blocks(run, len(sizes), workers))
    if se < 1e-15 * abs(mean):
        se = 0.0
    return McEstimate(mean, se, n, seed)
