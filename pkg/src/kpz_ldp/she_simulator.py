"""Small-noise stochastic heat equation Z_t = Z_xx / 2 + sqrt(eps) xi Z with
narrow-wedge data, and importance-sampled one-point tail probabilities.

Scheme: the delta is replaced by p(t0, .) and each step of length dt is an
exact heat step (FFT on a periodic box, wide enough that wrap-around is
negligible) followed by the noise factor 1 + sqrt(eps) dW / dx, where the
cell increments dW are N(0, dt dx). The factor has mean one, so the scheme
keeps E[Z] equal to the heat flow of p(t0).

Under a tilt phi the increments are drawn as dW = dW' + phi dt dx / sqrt(eps)
with dW' centred, and every sample carries the likelihood ratio

    log w = -sum phi dW' / sqrt(eps) - sum phi^2 dt dx / (2 eps),

so weighted averages are unbiased for the untilted law. A sample whose
noise factor is ever nonpositive is marked invalid and excluded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .deviation_field import rho_star
from .errors import DomainError
from .fields import ScalarField, SpaceTimeGrid, as_sampler, register_grid_factory
from .heat_kernel import eval_kernel
from .parallel import block_rng, block_sizes, map_blocks
from .pde_solver.montecarlo import McEstimate
from .rate_function import phi_exact
from .tables import read_table, write_table
from .variational_optimizer import near_center_field

SQRT_4PI = math.sqrt(4.0 * math.pi)
MAX_EPSILON = 0.2
MIN_ESS = 30.0
TAIL_COLUMNS = ["epsilon", "lambda", "tail", "n", "prob", "stderr", "log_rate", "ess", "flags"]


@dataclass(frozen=True)
class SheConfig:
    L: float = 6.0
    dx: float = 1.0 / 16.0
    dt: float = 1.0 / 256.0
    t0: float = 1.0 / 64.0
    t_end: float = 2.0
    block: int = 1024

    def __post_init__(self):
        if min(self.L, self.dx, self.dt, self.t0) <= 0 or self.block < 1:
            raise DomainError("SHE grid parameters must be positive")
        if self.dt > 4.0 * self.dx ** 2:
            raise DomainError("dt must stay of order dx^2 for the explicit noise step")
        if not 0 < self.t0 < self.t_end:
            raise DomainError("need 0 < t0 < t_end")

    @property
    def x(self) -> np.ndarray:
        n = int(round(2.0 * self.L / self.dx))
        return -self.L + self.dx * np.arange(n)

    @property
    def n_steps(self) -> int:
        return int(round((self.t_end - self.t0) / self.dt))

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def halved(self) -> "SheConfig":
        return SheConfig(self.L, self.dx, 0.5 * self.dt, self.t0, self.t_end, self.block)


def _check_eps(eps: float):
    if not 0 < eps <= MAX_EPSILON:
        raise DomainError(f"epsilon must lie in (0, {MAX_EPSILON}]")


def _tilt_table(tilt, cfg: SheConfig) -> np.ndarray | None:
    """Tilt sampled at the step midpoints and grid nodes, shape (n_steps, n_x)."""
    if tilt is None:
        return None
    f = as_sampler(tilt)
    t_mid = cfg.times[:-1] + 0.5 * cfg.dt
    tt, xx = np.meshgrid(t_mid, cfg.x, indexing="ij")
    return np.asarray(f(tt, xx), float) * np.ones(tt.shape)


@dataclass
class _Block:
    z_end: np.ndarray      # Z(t_end, .) per sample
    log_weight: np.ndarray
    valid: np.ndarray
    history: np.ndarray | None = None


def _run_block(eps: float, phi: np.ndarray | None, cfg: SheConfig, rng: np.random.Generator, m: int,
               keep_history: bool = False) -> _Block:
    x = cfg.x
    k = 2.0 * np.pi * np.fft.rfftfreq(x.size, cfg.dx)
    heat = np.exp(-0.5 * k * k * cfg.dt)
    z = np.tile(eval_kernel(cfg.t0, x), (m, 1))
    logw = np.zeros(m)
    valid = np.ones(m, bool)
    sd = math.sqrt(cfg.dt * cfg.dx)
    root = math.sqrt(eps)
    hist = np.empty((cfg.n_steps + 1, x.size)) if keep_history else None
    if keep_history:
        hist[0] = z[0]
    for n in range(cfg.n_steps):
        z = np.fft.irfft(np.fft.rfft(z, axis=1) * heat, n=x.size, axis=1)
        dw = sd * rng.standard_normal(z.shape)
        factor = 1.0 + root * dw / cfg.dx
        if phi is not None:
            row = phi[n]
            factor += row * cfg.dt
            logw -= (dw @ row) / root + (row @ row) * cfg.dt * cfg.dx / (2.0 * eps)
        valid &= np.all(factor > 0, axis=1)
        z *= factor
        if keep_history:
            hist[n + 1] = z[0]
    centre = int(np.argmin(np.abs(x)))
    valid &= z[:, centre] > 0
    return _Block(z, logw, valid, hist)


@dataclass
class SheSample:
    """One realisation on the solver grid: Z from t0 to t_end and its log-weight."""

    field: ScalarField
    log_weight: float
    valid: bool

    @property
    def z_end(self) -> float:
        return float(self.field(self.field.grid.t[-1], 0.0))


@register_grid_factory("she")
def she_grid(L: float = 6.0, dx: float = 1.0 / 16.0, dt: float = 1.0 / 256.0, t0: float = 1.0 / 64.0,
             t_end: float = 2.0) -> SpaceTimeGrid:
    """Nodes of the simulator: periodic x grid, times t0, t0 + dt, ..., t_end."""
    cfg = SheConfig(L, dx, dt, t0, t_end)
    t = cfg.times
    wt = np.full(t.size, cfg.dt)
    wt[[0, -1]] *= 0.5
    return SpaceTimeGrid(t, wt, cfg.x, np.full(cfg.x.size, cfg.dx), np.ones(t.size),
                         {"factory": "she", "L": cfg.L, "dx": cfg.dx, "dt": cfg.dt, "t0": cfg.t0, "t_end": cfg.t_end})


def simulate_she(eps: float, tilt=None, seed: int = 0, config: SheConfig | None = None) -> SheSample:
    """A single sample path of Z_eps, optionally under a tilted noise."""
    _check_eps(eps)
    cfg = config or SheConfig()
    blk = _run_block(eps, _tilt_table(tilt, cfg), cfg, block_rng(seed, 0), 1, keep_history=True)
    grid = she_grid(cfg.L, cfg.dx, cfg.dt, cfg.t0, cfg.t_end)
    return SheSample(ScalarField(grid, blk.history), float(blk.log_weight[0]), bool(blk.valid[0]))


@dataclass
class EnsembleResult:
    """Weighted samples of Z(t_end, .) pooled over blocks."""

    x: np.ndarray
    z_end: np.ndarray
    weights: np.ndarray
    n_invalid: int
    seed: int

    @property
    def n(self) -> int:
        return int(self.weights.size)

    def estimate(self, functional) -> McEstimate:
        """Weighted mean of functional(z_end rows) with its standard error."""
        vals = np.asarray(functional(self.z_end), float) * self.weights
        n = vals.size
        se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return McEstimate(float(math.fsum(vals) / n), se, n, self.seed)

    @property
    def centre(self) -> np.ndarray:
        return self.z_end[:, int(np.argmin(np.abs(self.x)))]


def run_ensemble(eps: float, n_samples: int, tilt=None, seed: int = 0, config: SheConfig | None = None,
                 workers: int | None = None) -> EnsembleResult:
    """Independent samples in fixed blocks seeded by (seed, block index)."""
    _check_eps(eps)
    if n_samples < 2:
        raise DomainError("need at least two samples")
    cfg = config or SheConfig()
    phi = _tilt_table(tilt, cfg)
    sizes = block_sizes(n_samples, cfg.block)
    blocks = map_blocks(lambda b: _run_block(eps, phi, cfg, block_rng(seed, b), sizes[b]), len(sizes), workers)
    valid = np.concatenate([b.valid for b in blocks])
    z = np.concatenate([b.z_end for b in blocks])[valid]
    logw = np.concatenate([b.log_weight for b in blocks])[valid]
    return EnsembleResult(cfg.x, z, np.exp(logw), int(np.count_nonzero(~valid)), seed)


def _run_pair_block(eps: float, cfg: SheConfig, rng: np.random.Generator, m: int):
    """Untilted samples on cfg and on cfg.halved() driven by the same noise."""
    x = cfg.x
    k = 2.0 * np.pi * np.fft.rfftfreq(x.size, cfg.dx)
    heat_c = np.exp(-0.5 * k * k * cfg.dt)
    heat_f = np.exp(-0.25 * k * k * cfg.dt)
    z_c = np.tile(eval_kernel(cfg.t0, x), (m, 1))
    z_f = z_c.copy()
    valid = np.ones(m, bool)
    sd = math.sqrt(0.5 * cfg.dt * cfg.dx)
    gain = math.sqrt(eps) / cfg.dx

    def heat(z, mult):
        return np.fft.irfft(np.fft.rfft(z, axis=1) * mult, n=x.size, axis=1)

    for _ in range(cfg.n_steps):
        dw = sd * rng.standard_normal((2, m, x.size))
        for half in dw:
            factor = 1.0 + gain * half
            valid &= np.all(factor > 0, axis=1)
            z_f = heat(z_f, heat_f) * factor
        factor = 1.0 + gain * (dw[0] + dw[1])
        valid &= np.all(factor > 0, axis=1)
        z_c = heat(z_c, heat_c) * factor
    return z_c[valid], z_f[valid], int(np.count_nonzero(~valid))


def halving_pair(eps: float, n_samples: int, seed: int = 0, config: SheConfig | None = None,
                 workers: int | None = None) -> tuple[EnsembleResult, EnsembleResult]:
    """Untilted ensembles at dt and dt / 2 sharing their Brownian increments.

    The coarse increment of each cell is the sum of the two fine ones, so the
    difference of the two estimates isolates the time-stepping error.
    """
    _check_eps(eps)
    if n_samples < 2:
        raise DomainError("need at least two samples")
    cfg = config or SheConfig()
    sizes = block_sizes(n_samples, cfg.block)
    blocks = map_blocks(lambda b: _run_pair_block(eps, cfg, block_rng(seed, b), sizes[b]), len(sizes), workers)
    bad = sum(b[2] for b in blocks)
    out = []
    for i in (0, 1):
        z = np.concatenate([b[i] for b in blocks])
        out.append(EnsembleResult(cfg.x, z, np.ones(z.shape[0]), bad, seed))
    return out[0], out[1]


def tail_tilt(lam: float, tail: str = "lower"):
    """Regime-matched tilt for the event h(2, 0) <= -lam (or >= lam).

    Near-center product kernel for lam < 2, the rescaled instanton
    lam rho*(s, x / sqrt(lam)) for deeper lower tails.
    """
    if tail not in ("lower", "upper"):
        raise DomainError("tail must be 'lower' or 'upper'")
    if lam == 0:
        return None
    if lam < 2.0 or tail == "upper":
        base = near_center_field(lam)
        sign = -1.0 if tail == "lower" else 1.0
        return lambda t, x: sign * base(t, x)
    root = math.sqrt(lam)
    return lambda t, x: lam * rho_star(t, np.asarray(x) / root)


@dataclass
class TailEstimate:
    epsilon: float
    lam: float
    tail: str
    probability: McEstimate
    log_rate: float
    ess: float
    n_invalid: int
    tilted: bool
    reference: float = math.nan
    flags: list = field(default_factory=list)

    @property
    def low_confidence(self) -> bool:
        return "low-ess" in self.flags

    def record(self) -> dict:
        return {"epsilon": self.epsilon, "lambda": self.lam, "tail": self.tail, "n": self.probability.n,
                "prob": self.probability.mean, "stderr": self.probability.stderr, "log_rate": self.log_rate,
                "ess": self.ess, "flags": ";".join(self.flags)}


def estimate_tail(eps: float, lam: float, n_samples: int = 10_000, tilt: str = "instanton", tail: str = "lower",
                  seed: int = 0, config: SheConfig | None = None, workers: int | None = None) -> TailEstimate:
    """P[sqrt(4 pi) Z_eps(2, 0) <= e^-lam] (or >= e^lam for the upper tail).

    ``tilt`` is "instanton" (regime-matched field from ``tail_tilt``) or
    "none". The effective sample size is Kish's formula over the weighted
    indicator terms.
    """
    if n_samples < 1000:
        raise DomainError("n_samples must be at least 1000")
    if lam < 0:
        raise DomainError("lam must be nonnegative; choose the side with tail")
    if tilt not in ("instanton", "none"):
        raise DomainError("tilt must be 'instanton' or 'none'")
    cfg = config or SheConfig()
    field_ = tail_tilt(lam, tail) if tilt == "instanton" else None
    ens = run_ensemble(eps, n_samples, field_, seed, cfg, workers)
    level = math.exp(-lam if tail == "lower" else lam)

    def indicator(z):
        c = SQRT_4PI * z[:, int(np.argmin(np.abs(ens.x)))]
        return (c <= level) if tail == "lower" else (c >= level)

    prob = ens.estimate(indicator)
    terms = indicator(ens.z_end) * ens.weights
    total = float(terms.sum())
    ess = total * total / float((terms * terms).sum()) if total > 0 else 0.0
    flags = []
    if ess < MIN_ESS:
        flags.append("low-ess")
    if ens.n_invalid:
        flags.append(f"invalid={ens.n_invalid}")
    log_rate = -eps * math.log(prob.mean) if prob.mean > 0 else math.inf
    ref = phi_exact(-lam if tail == "lower" else lam).value if lam > 0 else 0.0
    return TailEstimate(eps, lam, tail, prob, log_rate, ess, ens.n_invalid, field_ is not None, ref, flags)


def write_tail_csv(path, estimates) -> None:
    write_table(path, "she-tail", TAIL_COLUMNS, [e.record() for e in estimates])


def read_tail_csv(path) -> list[dict]:
    schema, rows = read_table(path)
    if schema != "she-tail":
        raise ValueError(f"unexpected schema {schema!r}")
    return rows
