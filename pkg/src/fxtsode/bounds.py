"""Settling-time calculus for fixed-time stable Lyapunov inequalities.

The relaxed condition is

    dV/dt <= -a1 V^(1 + 1/mu) - a2 V^(1 - 1/mu) + delta,

whose trajectories cannot descend below the balance level v^mu, where v is
the positive root of a1 v^(mu+1) + a2 v^(mu-1) = delta.  ``bound_I`` gives the
closed-form upper bounds on the time needed to travel from V0 down to
V_bar = (gamma v)^mu; ``quadrature_I`` computes the same elapsed time
numerically and serves as the independent check.

Sign convention: the time integral is written from V0 down to V_bar over a
negative denominator, so it is positive.  Every function here returns that
positive elapsed time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

REGIMES = ("mu<2", "2<=mu<3", "mu>=3")


class QuadratureError(RuntimeError):
    pass


class BoundDomainError(ValueError):
    """A query violates a precondition of the closed-form bounds."""


def regime(mu: float) -> str:
    if mu < 2:
        return REGIMES[0]
    if mu < 3:
        return REGIMES[1]
    return REGIMES[2]


def _check_positive(**kw) -> None:
    for name, value in kw.items():
        if not (value > 0 and math.isfinite(value)):
            raise BoundDomainError(f"{name} must be positive and finite, got {value!r}")


def solve_v(alpha1: float, alpha2: float, mu: float, delta: float, iters: int = 200) -> float:
    """Positive root of a1 v^(mu+1) + a2 v^(mu-1) = delta by bisection."""
    _check_positive(alpha1=alpha1, alpha2=alpha2, delta=delta)
    if not mu > 1:
        raise BoundDomainError(f"mu must exceed 1, got {mu!r}")

    def g(v):
        return alpha1 * v ** (mu + 1) + alpha2 * v ** (mu - 1) - delta

    hi = max(1.0, (delta / alpha1) ** (1 / (mu + 1)), (delta / alpha2) ** (1 / (mu - 1)))
    # halve down to a bracket [lo, 2 lo] first so tiny roots keep full relative precision
    lo = 0.5 * hi
    while lo > 0 and g(lo) > 0:
        hi, lo = lo, 0.5 * lo
    if lo == 0:
        raise BoundDomainError(f"balance root underflows float64 (alpha2={alpha2!r}, mu={mu!r}, delta={delta!r})")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if g(mid) > 0:
            hi = mid
        else:
            lo = mid
    return lo if abs(g(lo)) <= abs(g(hi)) else hi


def settling_time_max(alpha1: float, alpha2: float, mu: float) -> float:
    """Fixed-time bound mu pi / (2 sqrt(a1 a2)) for the unperturbed inequality."""
    _check_positive(alpha1=alpha1, alpha2=alpha2)
    if not mu > 1:
        raise BoundDomainError(f"mu must exceed 1, got {mu!r}")
    return mu * math.pi / (2.0 * math.sqrt(alpha1 * alpha2))


@dataclass(frozen=True)
class BoundQuery:
    V0: float
    alpha1: float
    alpha2: float
    delta: float
    mu: float
    gamma: float

    def validate(self) -> None:
        _check_positive(V0=self.V0, alpha1=self.alpha1, alpha2=self.alpha2, delta=self.delta)
        if not self.mu > 1:
            raise BoundDomainError(f"mu must exceed 1, got {self.mu!r}")
        if not self.gamma > 1:
            raise BoundDomainError(f"gamma must exceed 1, got {self.gamma!r}")


@dataclass(frozen=True)
class BoundResult:
    v: float
    V_bar: float
    I_bound: float
    regime: str


def balance(q: BoundQuery) -> tuple[float, float]:
    """(v, V_bar) for a query."""
    q.validate()
    v = solve_v(q.alpha1, q.alpha2, q.mu, q.delta)
    return v, (q.gamma * v) ** q.mu


def bound_I(q: BoundQuery) -> BoundResult:
    """Closed-form upper bound on the time to go from V0 down to V_bar."""
    v, v_bar = balance(q)
    if q.V0 < v_bar:
        raise BoundDomainError(f"V0={q.V0!r} is below V_bar={v_bar!r}")
    a1, a2, mu, g = q.alpha1, q.alpha2, q.mu, q.gamma
    z0 = q.V0 ** (1.0 / mu)
    r = a2 / a1
    reg = regime(mu)
    if reg == REGIMES[0]:
        value = mu / (2 * a1 * v) * (math.log((1 + g) / (g - 1)) + math.log(abs((z0 - v) / (z0 + v))))
    elif reg == REGIMES[1]:
        s = math.sqrt(3 * v * v + 4 * r)
        k1 = mu * v / (6 * a1 * v * v + 2 * a2)
        k2 = (6 * v + 4 * a2 / (a1 * v)) / s
        value = k1 * (
            math.log(abs(((g * g + g + 1) * v * v + r) / ((g - 1) * v) ** 2))
            + math.log(abs((z0 - v) ** 2 / (z0 * z0 + v * z0 + v * v + r)))
            + k2 * (math.atan((2 * z0 + v) / s) - math.atan((2 * g + 1) * v / s))
        )
    else:
        k3 = mu / (2 * a1 * v * v + a2)
        k4 = math.sqrt(v * v + r)
        value = k3 * (
            v / 2 * (math.log(abs((1 + g) / (1 - g))) + math.log(abs((z0 - v) / (z0 + v))))
            + k4 * (math.atan(z0 / k4) - math.atan(g * v / k4))
        )
    return BoundResult(v=v, V_bar=v_bar, I_bound=value, regime=reg)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
                     max_depth: int = 60, max_evals: int = 1_000_000) -> float:
    """Adaptive Simpson quadrature with Richardson correction on each accepted panel."""
    if a == b:
        return 0.0
    evals = 0

    def fe(x):
        nonlocal evals
        evals += 1
        if evals > max_evals:
            raise QuadratureError(f"tolerance {tol} not reached within {max_evals} evaluations")
        return f(x)

    fa, fb = fe(a), fe(b)
    m = 0.5 * (a + b)
    fm = fe(m)
    whole = (b - a) / 6 * (fa + 4 * fm + fb)
    total = 0.0
    # explicit stack keeps the left-to-right summation order fixed
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        lo, hi, flo, fmid, fhi, s, eps, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = fe(lm), fe(rm)
        left = (mid - lo) / 6 * (flo + 4 * flm + fmid)
        right = (hi - mid) / 6 * (fmid + 4 * frm + fhi)
        err = left + right - s
        if depth >= max_depth or abs(err) <= 15 * eps:
            if depth >= max_depth and abs(err) > 15 * eps:
                raise QuadratureError(f"max depth {max_depth} reached on [{lo}, {hi}]")
            total += left + right + err / 15
        else:
            stack.append((mid, hi, fmid, frm, fhi, right, eps / 2, depth + 1))
            stack.append((lo, mid, flo, flm, fmid, left, eps / 2, depth + 1))
    return total


def relaxed_rate(V: float, alpha1: float, alpha2: float, delta: float, mu: float) -> float:
    """Right-hand side -a1 V^g1 - a2 V^g2 + delta (negative V treated as 0)."""
    V = max(V, 0.0)
    return -alpha1 * V ** (1 + 1 / mu) - alpha2 * V ** (1 - 1 / mu) + delta


def elapsed_time(V_from: float, V_to: float, alpha1: float, alpha2: float, delta: float, mu: float,
                 tol: float = 1e-10) -> float:
    """Time for dV/dt = relaxed_rate to descend from V_from to V_to, by quadrature in log V."""
    if V_from < V_to:
        raise BoundDomainError("V_from must be >= V_to")
    if V_from == V_to:
        return 0.0

    def integrand(s):
        V = math.exp(s)
        return -V / relaxed_rate(V, alpha1, alpha2, delta, mu)

    return adaptive_simpson(integrand, math.log(V_to), math.log(V_from), tol=tol)


def quadrature_I(q: BoundQuery, tol: float = 1e-10) -> float:
    """Numerical value of the elapsed time from V0 down to V_bar."""
    v, v_bar = balance(q)
    if q.V0 < v_bar:
        raise BoundDomainError(f"V0={q.V0!r} is below V_bar={v_bar!r}")
    return elapsed_time(q.V0, v_bar, q.alpha1, q.alpha2, q.delta, q.mu, tol=tol)


@dataclass(frozen=True)
class RobustnessQuery:
    rho: float
    L: float
    gamma: float
    alpha1: float
    alpha2: float
    mu: float
    L_psi: float


@dataclass(frozen=True)
class RobustnessResult:
    v: float
    T: float
    output_radius: float
    regime: str


def robustness_time(r: RobustnessQuery) -> RobustnessResult:
    """Time after which a perturbed trajectory stays within (gamma v)^mu of h*.

    v solves the balance equation with delta = L * rho.  T is the V0 -> infinity
    limit of the matching ``bound_I`` case, so it holds for every start level.
    """
    _check_positive(rho=r.rho, L=r.L, alpha1=r.alpha1, alpha2=r.alpha2, L_psi=r.L_psi)
    if not r.gamma > 1:
        raise BoundDomainError(f"gamma must exceed 1, got {r.gamma!r}")
    a1, a2, mu, g = r.alpha1, r.alpha2, r.mu, r.gamma
    v = solve_v(a1, a2, mu, r.L * r.rho)
    ratio = a2 / a1
    reg = regime(mu)
    if reg == REGIMES[0]:
        T = mu / (2 * a1 * v) * math.log((1 + g) / (g - 1))
    elif reg == REGIMES[1]:
        s = math.sqrt(3 * v * v + 4 * ratio)
        T = mu * v / (6 * a1 * v * v + 2 * a2) * (
            math.log(abs(((g * g + g + 1) * v * v + ratio) / ((g - 1) * v) ** 2))
            + (6 * v + 4 * a2 / (a1 * v)) / s * (math.pi / 2 - math.atan((2 * g + 1) * v / s))
        )
    else:
        k5 = math.sqrt(v * v + ratio)
        T = mu / (2 * a1 * v * v + a2) * (
            v / 2 * math.log(abs((1 + g) / (1 - g))) + k5 * (math.pi / 2 - math.atan(g * v / k5))
        )
    return RobustnessResult(v=v, T=T, output_radius=(g * v) ** mu * r.L_psi, regime=reg)


@dataclass(frozen=True)
class RelaxedRun:
    converged: bool
    crossing_time: float | None
    final_V: float
    t_end: float


def simulate_relaxed(V0: float, alpha1: float, alpha2: float, delta: float, mu: float, stop_level: float,
                     dt: float = 1e-4, horizon: float | None = None) -> RelaxedRun:
    """Integrate dV/dt = -a1 V^g1 - a2 V^g2 + delta with RK4 until V <= stop_level.

    The crossing time is linearly interpolated between steps.  Without a crossing
    before ``horizon`` (default 10 * settling_time_max) the run reports
    ``converged=False`` together with the last value reached.
    """
    if not V0 > stop_level:
        raise BoundDomainError("V0 must exceed stop_level")
    if delta < 0:
        raise BoundDomainError("delta must be >= 0")
    if horizon is None:
        horizon = 10 * settling_time_max(alpha1, alpha2, mu)
    g1, g2 = 1 + 1 / mu, 1 - 1 / mu

    def rate(V):
        V = V if V > 0 else 0.0
        return -alpha1 * V ** g1 - alpha2 * V ** g2 + delta

    n = int(math.ceil(horizon / dt))
    V = float(V0)
    half = 0.5 * dt
    for k in range(n):
        k1 = rate(V)
        k2 = rate(V + half * k1)
        k3 = rate(V + half * k2)
        k4 = rate(V + dt * k3)
        V_next = V + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if V_next <= stop_level:
            t = k * dt + dt * (V - stop_level) / (V - V_next)
            return RelaxedRun(True, t, V_next, (k + 1) * dt)
        V = V_next
    return RelaxedRun(False, None, V, n * dt)


SCALE_COLUMNS = ("V", "error_free", "prior_V_scale", "ours_k1", "ours_k2", "ours_k3")


def scale_curves(mu: float, alpha1: float, alpha2: float, delta: float, V_grid) -> np.ndarray:
    """Multipliers applied to delta by each scaling of the relaxed inequality.

    Columns follow ``SCALE_COLUMNS``: delta, delta V, and delta v^(k-mu) V^(1-k/mu)
    for k = 1, 2, 3.
    """
    V = np.asarray(V_grid, dtype=np.float64)
    if np.any(V <= 0):
        raise BoundDomainError("V grid must be positive")
    v = solve_v(alpha1, alpha2, mu, delta)
    cols = [V, np.full_like(V, delta), delta * V]
    cols += [delta * v ** (k - mu) * V ** (1 - k / mu) for k in (1, 2, 3)]
    return np.column_stack(cols)


def regime_k(mu: float) -> int:
    """Exponent index k of the scaling used by the closed form for this mu."""
    return REGIMES.index(regime(mu)) + 1
