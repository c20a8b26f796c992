"""Minimal-energy deviations for one-point tail events.

Problem: minimise (1/2)||rho||^2 subject to h(rho; 2, 0) = target, with
target = -lam for the lower tail and +lam for the upper tail (the scaled
deep-tail problem uses h_lam and target -1). At an optimum rho = mu G(rho)
where G is the functional gradient of h, which is positive, so lower-tail
minimisers are nonpositive.

The search runs over directions. For a unit direction u the amplitude
a(u) > 0 with h(sign * a u) = target is found by safeguarded Newton (h is
monotone along such rays), so every iterate is feasible and its energy
a^2/2 is a valid upper bound. The direction is then pulled toward the
normalised gradient, u <- normalise((1 - beta) u + beta sign G/|G|),
accepting only steps that lower a; beta is halved on rejection and
regrown after success. A fixed point is exactly the stationarity condition
rho = mu G. The first iterate is the rescaled closed-form candidate, so the
result never exceeds the candidate bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .deviation_field import rho_star
from .errors import DomainError, NumericalError
from .fields import ScalarField
from .heat_kernel import eval_kernel
from .pde_solver.frame import BridgeFrame

STATIONARITY_TOL = 1e-3
CONSTRAINT_TOL = 1e-3
TAILS = ("lower", "upper")


@dataclass
class OptimizationOutcome:
    rho_opt: ScalarField
    rate_value: float
    constraint_value: float
    target: float
    multiplier: float
    iterations: int
    converged: bool
    stationarity: float
    candidate_rate: float
    tail: str
    lam: float
    method: str
    history: list = field(default_factory=list, repr=False)

    @property
    def norm(self) -> float:
        return math.sqrt(2.0 * self.rate_value)


def _sign(tail: str) -> float:
    if tail not in TAILS:
        raise DomainError(f"tail must be one of {TAILS}")
    return -1.0 if tail == "lower" else 1.0


def near_center_field(lam: float, kappa: float = 1.0):
    """The product-kernel candidate lam kappa 2^(3/2) p(2 - s, y) p(s, y) as a callable."""
    scale = lam * kappa * 2.0 ** 1.5

    def f(s, y):
        s = np.asarray(s, float)
        inside = (s > 0) & (s < 2)
        ss = np.where(inside, s, 1.0)
        return np.where(inside, scale * eval_kernel(2.0 - ss, y) * eval_kernel(ss, y), 0.0)

    return f


@dataclass(frozen=True)
class CandidateReport:
    field: ScalarField
    rate_bound: float
    h_value: float
    satisfied: bool


def near_center_candidate(lam: float, kappa: float, frame: BridgeFrame | None = None,
                          check: bool = True) -> CandidateReport:
    """Explicit near-center deviation and its exact rate kappa^2 lam^2 / sqrt(2 pi).

    With ``check`` the upper-tail constraint sqrt(4 pi) Z(2, 0) >= e^lam is
    evaluated; failure is reported, not raised, since the candidate is only
    asymptotically feasible.
    """
    if not 0 < lam <= 0.3:
        raise DomainError("the near-center candidate is meant for 0 < lam <= 0.3")
    if not kappa > 1:
        raise DomainError("kappa must exceed 1")
    frame = frame or BridgeFrame(1.0, reach=0.0)
    fld = ScalarField(frame.grid, near_center_field(lam, kappa)(frame.grid.tt, frame.grid.x))
    rate = kappa ** 2 * lam ** 2 / math.sqrt(2.0 * math.pi)
    h = frame.solve(fld).h if check else float("nan")
    return CandidateReport(fld, rate, h, bool(h >= lam) if check else False)


def _solve_amplitude(frame, u, sign, target, a0, tol):
    """Newton for h(sign a u) = target; returns (a, solve with gradient)."""
    a = max(a0, 1e-12)
    lo, hi = 0.0, math.inf  # bracket on a: h - target changes sign across it
    f0 = -target  # h(0) = 0 on the discrete frame
    for _ in range(60):
        sol = frame.solve(ScalarField(frame.grid, sign * a * u), gradient=True)
        f = sol.h - target
        slope = sign * sol.gradient.dot(ScalarField(frame.grid, u))
        if abs(f) <= tol:
            return a, sol
        # f(a) has the sign of f0 below the root
        if f * f0 > 0:
            lo = a
        else:
            hi = a
        step = a - f / slope if slope != 0 else math.nan
        if not (lo < step < hi) or not math.isfinite(step):
            step = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * a
        a = step
    raise NumericalError("amplitude search did not converge")


def optimize_on_frame(frame: BridgeFrame, init: np.ndarray, target: float, tail: str, *,
                      max_iter: int = 200, tol: float = STATIONARITY_TOL, beta0: float = 1.0,
                      lam_label: float | None = None, method: str = "frame") -> OptimizationOutcome:
    sign = _sign(tail)
    w = frame.grid.weights

    def normalise(v):
        return v / math.sqrt(np.sum(w * v * v))

    u = normalise(sign * np.asarray(init, float))
    h_tol = 1e-10 * max(1.0, abs(target))
    guess = math.sqrt(abs(target)) if target else 1.0
    a, sol = _solve_amplitude(frame, u, sign, target, guess, h_tol)
    candidate = 0.5 * a * a
    beta = beta0
    history = [(0, 0.5 * a * a, math.nan)]
    converged = False
    it = 0
    resid = math.inf
    mu = math.nan
    for it in range(1, max_iter + 1):
        g = sol.gradient.values
        rho = sign * a * u
        mu = float(np.sum(w * rho * g) / np.sum(w * g * g))
        resid = math.sqrt(np.sum(w * (rho - mu * g) ** 2)) / a
        history[-1] = (history[-1][0], history[-1][1], resid)
        if resid < tol:
            converged = True
            break
        ghat = normalise(g)
        while True:
            trial = normalise((1.0 - beta) * u + beta * ghat)
            try:
                a_new, sol_new = _solve_amplitude(frame, trial, sign, target, a, h_tol)
            except NumericalError:
                a_new = math.inf
            if a_new < a:
                u, a, sol = trial, a_new, sol_new
                beta = min(1.0, 1.5 * beta)
                break
            beta *= 0.5
            if beta < 1e-6:
                break
        history.append((it, 0.5 * a * a, math.nan))
        if beta < 1e-6:
            break
    rho_field = ScalarField(frame.grid, sign * a * u)
    return OptimizationOutcome(rho_field, 0.5 * a * a, sol.h, target, mu, it, converged, resid,
                               candidate, tail, lam_label if lam_label is not None else abs(target),
                               method, history)


def minimize_rate(lam: float, tail: str = "lower", frame: BridgeFrame | None = None, **kw) -> OptimizationOutcome:
    """Rate Phi(+-lam) from the unscaled problem h(rho; 2, 0) = -+lam.

    Warm start: the near-center product kernel for lam < 2, the rescaled
    deep-tail deviation lam rho*(s, x / sqrt(lam)) otherwise.
    """
    lam = float(lam)
    if not lam > 0:
        raise DomainError("lam must be positive (use the tail argument for the sign)")
    sign = _sign(tail)
    frame = frame or BridgeFrame(1.0, reach=lam if lam >= 2 else 0.0, s_min=1e-8)
    g = frame.grid
    if lam < 2.0 or tail == "upper":
        init = near_center_field(lam)(g.tt, g.x)
    else:
        init = -lam * rho_star(g.tt, g.x / math.sqrt(lam))
    return optimize_on_frame(frame, sign * np.abs(init), sign * lam, tail, lam_label=lam, method="unscaled", **kw)


def deep_tail_scaled_value(lam: float, frame: BridgeFrame | None = None, **kw) -> OptimizationOutcome:
    """inf (1/2)||rho||^2 subject to h_lam(rho; 2, 0) = -1, warm-started at rho*.

    lam^(5/2) times the returned rate is the lower-tail rate Phi(-lam).
    """
    if not lam >= 1:
        raise DomainError("the scaled problem needs lam >= 1")
    frame = frame or BridgeFrame(lam, s_min=1e-8)
    g = frame.grid
    init = rho_star(g.tt, g.x)
    return optimize_on_frame(frame, init, -1.0, "lower", lam_label=lam, method="scaled", **kw)


def certificate(rho_opt: ScalarField) -> tuple[float, float]:
    """(<rho*, rho* - rho_opt>, ||rho_opt||) on the optimiser grid."""
    star = ScalarField(rho_opt.grid, rho_star(rho_opt.grid.tt, rho_opt.grid.x))
    return star.dot(star - rho_opt), rho_opt.norm()
