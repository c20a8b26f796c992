"""End-to-end acceptance checks shared by the test suite and ``kpz-ldp selftest``.

Each criterion returns a report made of individual checks with pinned
tolerances. Soft checks are diagnostics: they are reported as WARN and do
not make the criterion fail.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import geodesics, rate_function
from .deviation_field import ell, instanton_grid, integral_r, l2_norm_sq, rho_star, rho_star_field
from .errors import KpzLdpError
from .fields import ScalarField
from .heat_kernel import OVERLAP_EXACT, kernel_overlap_integral
from .pde_solver import BridgeFrame, SchemeParams, chaos_sum, feynman_kac_mc, gradient_h, solve_forward
from .she_simulator import SQRT_4PI, estimate_tail, run_ensemble, tail_tilt
from .variational_optimizer import certificate, deep_tail_scaled_value, minimize_rate

QUADRATIC_CONSTANT = 1.0 / math.sqrt(2.0 * math.pi)
FIVE_HALVES_CONSTANT = 4.0 / (15.0 * math.pi)
THREE_HALVES_CONSTANT = 4.0 / 3.0


@dataclass
class Check:
    label: str
    measured: float
    target: float
    tolerance: float
    passed: bool
    soft: bool = False

    def describe(self) -> str:
        state = "ok" if self.passed else ("warn" if self.soft else "FAIL")
        return f"{self.label}={self.measured:.6g} (target {self.target:.6g}, tol {self.tolerance:.3g}) {state}"


def _abs(label, measured, target, tol, soft=False) -> Check:
    return Check(label, float(measured), float(target), tol, bool(abs(measured - target) <= tol), soft)


def _rel(label, measured, target, tol, soft=False) -> Check:
    return Check(label, float(measured), float(target), tol, bool(abs(measured / target - 1.0) <= tol), soft)


def _bound(label, measured, limit, soft=False) -> Check:
    """measured <= limit."""
    return Check(label, float(measured), float(limit), 0.0, bool(measured <= limit), soft)


@dataclass
class CriterionReport:
    number: int
    title: str
    checks: list = field(default_factory=list)
    seconds: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks if not c.soft)

    @property
    def warned(self) -> bool:
        return any(c.soft and not c.passed for c in self.checks)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.passed and self.warned:
            status = "PASS (WARN)"
        body = self.error or "; ".join(c.describe() for c in self.checks)
        return f"criterion {self.number:2d} {status}: {self.title} [{self.seconds:.0f}s] {body}"


# 1 -------------------------------------------------------------------------
def instanton_integrals() -> list[Check]:
    energy = 0.5 * l2_norm_sq(rho_star_field(instanton_grid()))
    return [_abs("int r", integral_r(0.0, 2.0), 2.0 * math.pi, 1e-5),
            _abs("half |rho*|^2", energy, FIVE_HALVES_CONSTANT, 1e-4)]


# 2 -------------------------------------------------------------------------
def kernel_identity() -> list[Check]:
    return [_abs("overlap", kernel_overlap_integral(), OVERLAP_EXACT, 1e-6)]


# 3 -------------------------------------------------------------------------
def geodesic_energies() -> list[Check]:
    s = geodesics.path_times(2.0, 2001)
    checks = []
    for a in (0.0, 0.5, -0.5, 1.0, -1.0):
        path = geodesics.DiscretePath(s, a * ell(s))
        checks.append(_abs(f"E({a:+.1f} l)", geodesics.path_energy(path), 1.0, 1e-3))
    res = geodesics.direct_minimize(2.0, 0.0, seed=1)
    _, dist = geodesics.family_distance(res.path)
    checks.append(_abs("descent E(2,0)", res.energy, 1.0, 1e-3))
    checks.append(_bound("family distance", dist, 2e-2))
    x = 0.5 * float(ell(1.0))
    res = geodesics.direct_minimize(1.0, x, seed=3)
    gap = float(np.max(np.abs(res.path.positions - 0.5 * ell(res.path.times))))
    checks.append(_bound("distance to l/2", gap, 1e-2))
    return checks


# 4 -------------------------------------------------------------------------
def _bump(amp, t0, x0, wt, wx):
    return lambda t, x: amp * np.exp(-(np.asarray(t) - t0) ** 2 / wt - (np.asarray(x) - x0) ** 2 / wx)


def triangle_deviations() -> dict:
    """Three smooth test deviations, each with L2 norm below 0.2."""
    return {
        "centred bump": _bump(0.35, 1.0, 0.0, 0.1, 0.3),
        "negative offset bump": _bump(-0.3, 0.6, 0.3, 0.08, 0.4),
        "tilted wave": lambda t, x: 0.12 * np.sin(0.5 * np.pi * np.asarray(t)) * np.exp(-np.asarray(x) ** 2 / 2)
        * (1.0 + 0.5 * np.asarray(x)),
    }


def l2_norm_on_box(f, n_t: int = 401, n_x: int = 801, L: float = 8.0) -> float:
    t = np.linspace(0.0, 2.0, n_t)
    x = np.linspace(-L, L, n_x)
    vals = np.asarray(f(t[:, None], x[None, :]), float) ** 2
    return math.sqrt(np.trapezoid(np.trapezoid(vals, x, axis=1), t))


def oracle_triangle(n_paths: int = 100_000) -> list[Check]:
    checks = []
    for name, f in triangle_deviations().items():
        norm = l2_norm_on_box(f)
        checks.append(_bound(f"{name} norm", norm, 0.2))
        pde = solve_forward(f).ratio
        chaos = chaos_sum(f, 4)
        mc = feynman_kac_mc(f, n_paths=n_paths, seed=7)
        tol = max(1e-3, 3.0 * mc.stderr)
        checks.append(_abs(f"{name} pde-chaos", pde, chaos, tol))
        checks.append(_abs(f"{name} pde-mc", pde, mc.mean, tol))
        checks.append(_abs(f"{name} chaos-mc", chaos, mc.mean, tol))
    return checks


# 5 -------------------------------------------------------------------------
def gradient_check(n_directions: int = 5, seed: int = 11, step: float = 1e-4) -> list[Check]:
    params = SchemeParams(nt=257, nx=401, L=10.0)
    base = triangle_deviations()["centred bump"]
    res = solve_forward(base, params)
    grad = gradient_h(base, params, res)
    grid = grad.grid
    rng = np.random.default_rng(seed)
    base_v = ScalarField(grid, base(grid.tt, grid.x))
    checks = []
    for k in range(n_directions):
        t0, x0 = rng.uniform(0.3, 1.7), rng.uniform(-1.5, 1.5)
        wt, wx = rng.uniform(0.02, 0.2), rng.uniform(0.1, 1.0)
        chi = ScalarField(grid, _bump(1.0, t0, x0, wt, wx)(grid.tt, grid.x))
        plus = solve_forward(base_v + step * chi, params).h
        minus = solve_forward(base_v - step * chi, params).h
        fd = (plus - minus) / (2.0 * step)
        checks.append(_rel(f"direction {k}", grad.dot(chi), fd, 1e-3))
    return checks


# 6 -------------------------------------------------------------------------
def quadratic_law(lams=(0.05, 0.1, 0.2)) -> list[Check]:
    checks = []
    for tail in ("lower", "upper"):
        ratios = [minimize_rate(lam, tail).rate_value / lam ** 2 for lam in lams]
        checks.append(_rel(f"{tail} rate/lam^2 at {lams[0]}", ratios[0], QUADRATIC_CONSTANT, 0.03))
        gaps = [abs(r - QUADRATIC_CONSTANT) for r in ratios]
        monotone = all(a <= b for a, b in zip(gaps, gaps[1:]))
        checks.append(Check(f"{tail} monotone gap", gaps[-1], gaps[0], 0.0, monotone))
    for lam in (-0.025, 0.025):
        checks.append(_rel(f"Phi({lam})/lam^2", rate_function.phi_exact(lam).value / lam ** 2,
                           QUADRATIC_CONSTANT, 0.02))
    return checks


# 7 -------------------------------------------------------------------------
def five_halves_law(lam: float = 40.0) -> list[Check]:
    frame = BridgeFrame(lam, s_min=1e-8)
    out = deep_tail_scaled_value(lam, frame)
    feasibility = frame.solve(ScalarField(frame.grid, rho_star(frame.grid.tt, frame.grid.x))).h
    overlap, norm = certificate(out.rho_opt)
    exact = rate_function.phi_exact(-60.0).value / 60.0 ** 2.5
    return [_rel("deep-tail rate", out.rate_value, FIVE_HALVES_CONSTANT, 0.05),
            _bound("h_lam(rho*)", feasibility, -0.95),
            _bound("certificate", overlap, 0.02 * (1.0 + norm)),
            _rel("Phi(-60)/60^2.5", exact, FIVE_HALVES_CONSTANT, 0.01)]


# 8 -------------------------------------------------------------------------
def three_halves_check() -> list[Check]:
    ratio = rate_function.phi_exact(60.0).value / 60.0 ** 1.5
    return [_rel("Phi(60)/60^1.5", ratio, THREE_HALVES_CONSTANT, 0.01)]


# 9 -------------------------------------------------------------------------
def branch_point(delta: float = 1e-6) -> list[Check]:
    lc = rate_function.LAMBDA_C
    below = rate_function.phi_exact(lc - delta).value
    above = rate_function.phi_exact(lc + delta).value
    at = rate_function.phi_exact(lc).value
    return [_abs("jump at lambda_c", above - below, 0.0, 1e-4),
            _abs("Phi(lambda_c) vs left", at - below, 0.0, 1e-4),
            Check("Phi(0)", rate_function.phi_exact(0.0).value, 0.0, 0.0, rate_function.phi_exact(0.0).value == 0.0)]


# 10 ------------------------------------------------------------------------
def she_diagnostics(n_samples: int = 10_000, tail_samples: int = 4000) -> list[Check]:
    from .heat_kernel import eval_kernel

    eps = 0.1
    plain = run_ensemble(eps, n_samples, seed=101)
    tilted = run_ensemble(eps, n_samples, tail_tilt(0.5), seed=202)
    mean = plain.estimate(lambda z: z[:, _centre(plain.x)])
    checks = [_abs("E Z(2,0)", mean.mean, float(eval_kernel(2.0, 0.0)), 3.0 * mean.stderr)]
    for name, fn in she_functionals(plain.x).items():
        a, b = plain.estimate(fn), tilted.estimate(fn)
        checks.append(_abs(f"girsanov {name}", b.mean, a.mean, 3.0 * math.hypot(a.stderr, b.stderr)))
    one = tilted.estimate(lambda z: np.ones(z.shape[0]))
    checks.append(_abs("girsanov weight mean", one.mean, 1.0, 3.0 * one.stderr))
    est = estimate_tail(0.05, 0.5, tail_samples, seed=303)
    checks.append(_rel("-eps log P", est.log_rate, est.reference, 0.15, soft=True))
    return checks


def _centre(x) -> int:
    return int(np.argmin(np.abs(x)))


def she_functionals(x) -> dict:
    """Three fixed bounded-moment functionals of Z(2, .)."""
    c = _centre(x)
    near = np.abs(x) <= 1.0
    dx = x[1] - x[0]
    return {
        "h-proxy": lambda z: SQRT_4PI * z[:, c],
        "indicator": lambda z: (SQRT_4PI * z[:, c] <= 1.0).astype(float),
        "window mass": lambda z: z[:, near].sum(axis=1) * dx,
    }


CRITERIA = {
    1: ("instanton integrals", instanton_integrals),
    2: ("kernel identity", kernel_identity),
    3: ("geodesic energies", geodesic_energies),
    4: ("oracle triangle", oracle_triangle),
    5: ("gradient vs finite differences", gradient_check),
    6: ("quadratic law", quadratic_law),
    7: ("five-halves law", five_halves_law),
    8: ("upper-tail three-halves", three_halves_check),
    9: ("branch point", branch_point),
    10: ("SHE diagnostics", she_diagnostics),
}


def run_criterion(number: int) -> CriterionReport:
    title, fn = CRITERIA[number]
    start = time.perf_counter()
    report = CriterionReport(number, title)
    try:
        report.checks = fn()
    except KpzLdpError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
    report.seconds = time.perf_counter() - start
    return report


def run_all(numbers=None, echo=None) -> list[CriterionReport]:
    reports = []
    for n in numbers or sorted(CRITERIA):
        rep = run_criterion(n)
        if echo:
            echo(rep.line())
        reports.append(rep)
    return reports
