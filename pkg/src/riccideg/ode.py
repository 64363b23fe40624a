"""Fixed-step RK4 for the univariate profile ODEs, with exact derivative recursion.

The metric families are built from solutions of small autonomous ODEs.
Values and first derivatives come from the integrated state (Hermite dense
output between nodes: quintic when the system says which profile derivative
each state component is, cubic otherwise); higher derivatives are *never*
obtained by differentiating the interpolant, but from the ODE itself through
each system's ``deriv_recursion``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

DEFAULT_STEP = 1e-3
BISECT_TOL = 1e-10


class IntegrationError(RuntimeError):
    def __init__(self, message: str, last_t: float):
        super().__init__(f"{message} (last valid t = {last_t:.17g})")
        self.last_t = last_t


class OdeDomainError(ValueError):
    pass


class GuardError(ValueError):
    """A domain guard is already violated at the base point."""

    def __init__(self, message: str, guard: str = ""):
        super().__init__(message)
        self.guard = guard


# (t, state) -> [u, u', u'', u''', ...]; state has shape (dim, *batch)
Recursion = Callable[[np.ndarray, np.ndarray], Sequence[np.ndarray]]


@dataclass(frozen=True)
class OdeSystem:
    """An autonomous-or-not first-order system y' = rhs(t, y).

    ``deriv_recursion`` maps a profile name to a function returning the
    profile's derivatives computed from the state by the ODE itself. The
    first entry is the default profile.
    """

    name: str
    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    deriv_recursion: Mapping[str, Recursion] = field(default_factory=dict)
    first_integrals: Sequence[Callable[[np.ndarray, np.ndarray], np.ndarray]] = ()
    # required value of each first integral; None means "whatever it is at t0"
    integral_targets: Sequence[float | None] = ()
    # (profile, derivative order) for each state component; enables quintic dense output
    state_profiles: Sequence[tuple[str, int]] = ()

    def state_second_derivative(self, t, y) -> np.ndarray:
        """y'' at states ``y`` (shape (dim, *batch)) from the derivative recursion."""
        cache = {}
        out = []
        for name, order in self.state_profiles:
            if name not in cache:
                cache[name] = self.deriv_recursion[name](t, y)
            out.append(np.broadcast_to(cache[name][order + 2], np.shape(y)[1:]))
        return np.array(out)

    @property
    def default_profile(self) -> str:
        return next(iter(self.deriv_recursion))


@dataclass(frozen=True)
class Constraint:
    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    margin: float

    def slack(self, state) -> np.ndarray:
        return self.fn(state) - self.margin


@dataclass(frozen=True, eq=False)
class OdeSolution:
    system: OdeSystem
    t: np.ndarray  # ascending
    y: np.ndarray  # (n, dim)
    dy: np.ndarray  # (n, dim), rhs at nodes
    t0: float
    y0: np.ndarray
    drift: float
    reason: str = ""
    richardson: float = 0.0
    flagged: bool = False
    ddy: np.ndarray | None = None  # (n, dim), second derivative at nodes

    @property
    def interval(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def state(self, t) -> np.ndarray:
        """Dense output (quintic or cubic Hermite), shape (dim, *t.shape)."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.interval
        span = max(hi - lo, 1.0)
        if np.any(t < lo - 1e-12 * span) or np.any(t > hi + 1e-12 * span):
            bad = t[(t < lo - 1e-12 * span) | (t > hi + 1e-12 * span)].ravel()[0]
            raise OdeDomainError(
                f"{self.system.name}: t={bad:.17g} outside valid interval [{lo:.17g}, {hi:.17g}]"
            )
        if len(self.t) == 1:
            return np.broadcast_to(self.y[0].reshape((-1,) + (1,) * t.ndim), (self.y.shape[1],) + t.shape).copy()
        k = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        ta, tb = self.t[k], self.t[k + 1]
        h = tb - ta
        s = (t - ta) / h
        ya, yb, da, db = self.y[k], self.y[k + 1], self.dy[k], self.dy[k + 1]
        if self.ddy is None:
            basis = [(1 + 2 * s) * (1 - s) ** 2, s * (1 - s) ** 2 * h, s * s * (3 - 2 * s), s * s * (s - 1) * h]
            terms = [ya, da, yb, db]
        else:
            s3 = s**3
            basis = [
                1 - s3 * (10 - 15 * s + 6 * s * s),
                (s - s3 * (6 - 8 * s + 3 * s * s)) * h,
                0.5 * s * s * (1 - s) ** 3 * h * h,
                10 * s3 - 15 * s3 * s + 6 * s3 * s * s,
                s3 * (-4 + 7 * s - 3 * s * s) * h,
                0.5 * s3 * (1 - s) ** 2 * h * h,
            ]
            terms = [ya, da, self.ddy[k], yb, db, self.ddy[k + 1]]
        out = sum(w[..., None] * v for w, v in zip(basis, terms))
        return np.moveaxis(out, -1, 0)


def _rk4_run(system: OdeSystem, y0, t0, t1, step, constraints=()):
    n = max(1, int(math.ceil(abs(t1 - t0) / step - 1e-9)))
    h = (t1 - t0) / n
    ts = [t0]
    ys = [np.array(y0, dtype=float)]
    reason = ""
    f = system.rhs
    y = ys[0]
    for i in range(n):
        t = t0 + i * h
        k1 = f(t, y)
        k2 = f(t + h / 2, y + h / 2 * k1)
        k3 = f(t + h / 2, y + h / 2 * k2)
        k4 = f(t + h, y + h * k3)
        y_new = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y_new)):
            raise IntegrationError(f"{system.name}: state became non-finite", ts[-1])
        y = y_new
        ts.append(t0 + (i + 1) * h)
        ys.append(y)
        hit = [c.name for c in constraints if np.any(c.slack(y) < 0)]
        if hit:
            reason = f"guard: {', '.join(hit)}"
            break
    return np.array(ts), np.array(ys), reason


def _drift(system: OdeSystem, t, y, t0, y0) -> float:
    worst = 0.0
    targets = list(system.integral_targets) + [None] * len(system.first_integrals)
    for integral, target in zip(system.first_integrals, targets):
        ref = integral(np.asarray(t0), np.asarray(y0)) if target is None else target
        vals = integral(t, y.T)
        worst = max(worst, float(np.max(np.abs(vals - ref))))
    return worst


def _solution(system, ts, ys, t0, y0, reason, richardson=0.0, flagged=False):
    order = np.argsort(ts, kind="stable")
    ts, ys = ts[order], ys[order]
    dy = np.array([system.rhs(t, y) for t, y in zip(ts, ys)])
    ddy = system.state_second_derivative(ts, ys.T).T if system.state_profiles else None
    return OdeSolution(
        system=system, t=ts, y=ys, dy=dy, t0=float(t0), y0=np.array(y0, dtype=float),
        drift=_drift(system, ts, ys, t0, y0), reason=reason, richardson=richardson, flagged=flagged, ddy=ddy,
    )


def integrate(system: OdeSystem, y0, t0: float, t1: float, step: float = DEFAULT_STEP,
              constraints: Sequence[Constraint] = (), check_halving: bool = True) -> OdeSolution:
    """Classical RK4 with fixed step from ``t0`` to ``t1`` (either direction).

    If a constraint drops below its margin the run stops after that node and
    the solution carries the reason. With ``check_halving`` the run is
    repeated at ``step/2`` and the end-point discrepancy is recorded; the
    result is flagged if it exceeds ``16 * step**4 * (1 + |y|)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if t1 == t0:
        raise ValueError("t1 must differ from t0")
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        # overflow is reported as IntegrationError, not as a warning
        ts, ys, reason = _rk4_run(system, y0, t0, t1, step, constraints)
    richardson, flagged = 0.0, False
    if check_halving and len(ts) > 1:
        _, ys_half, _ = _rk4_run(system, y0, t0, ts[-1], step / 2)
        diff = float(np.max(np.abs(ys[-1] - ys_half[-1])))
        richardson = diff * 16 / 15
        flagged = diff > 16 * step**4 * (1 + float(np.max(np.abs(ys[-1]))))
    return _solution(system, ts, ys, t0, y0, reason, richardson, flagged)


def integrate_interval(system: OdeSystem, y0, t0: float, lo: float, hi: float,
                       step: float = DEFAULT_STEP, constraints: Sequence[Constraint] = ()) -> OdeSolution:
    """Integrate outward from ``t0`` to both ends of ``[lo, hi]`` and join."""
    if not lo <= t0 <= hi:
        raise ValueError(f"base point {t0} outside [{lo}, {hi}]")
    for c in constraints:
        if np.any(c.slack(np.asarray(y0, dtype=float)) < 0):
            raise GuardError(f"{system.name}: guard {c.name} violated at t0={t0:.17g}", c.name)
    parts, reasons, rich, flag = [], [], 0.0, False
    for end in (lo, hi):
        if end == t0:
            continue
        sol = integrate(system, y0, t0, end, step, constraints)
        parts.append(sol)
        if sol.reason:
            reasons.append(f"{sol.reason} near t={sol.t[0] if end < t0 else sol.t[-1]:.6g}")
        rich = max(rich, sol.richardson)
        flag = flag or sol.flagged
    if not parts:
        raise ValueError("empty integration interval")
    ts = np.concatenate([p.t for p in parts])
    ys = np.concatenate([p.y for p in parts])
    ts, keep = np.unique(ts, return_index=True)
    ys = ys[keep]
    return _solution(system, ts, ys, t0, y0, "; ".join(reasons), rich, flag)


def restore_solution(system: OdeSystem, t, y, t0, y0, reason="", richardson=0.0, flagged=False) -> OdeSolution:
    """Rebuild a solution from stored nodes without re-integrating."""
    return _solution(system, np.asarray(t, dtype=float), np.asarray(y, dtype=float).reshape(len(t), -1),
                     t0, y0, reason, richardson, flagged)


def eval_with_derivatives(solution: OdeSolution, t, profile: str | None = None, order: int = 3) -> np.ndarray:
    """Profile derivatives ``[u, u', ..., u^(order)]`` at ``t`` (shape (order+1, *t.shape))."""
    profile = profile or solution.system.default_profile
    recursion = solution.system.deriv_recursion[profile]
    t = np.asarray(t, dtype=float)
    derivs = recursion(t, solution.state(t))
    if len(derivs) < order + 1:
        raise ValueError(f"{solution.system.name}.{profile}: recursion supplies only {len(derivs) - 1} derivatives")
    return np.array([np.broadcast_to(d, t.shape) for d in derivs[: order + 1]])


def first_integral_drift(solution: OdeSolution) -> float:
    return solution.drift


def domain_guard(solution: OdeSolution, constraints: Sequence[Constraint],
                 t0: float | None = None) -> tuple[float, float, list[str]]:
    """Largest sub-interval around ``t0`` on which every constraint holds.

    Crossings between nodes are refined by bisection on the dense output.
    Returns ``(lo, hi, notes)``.
    """
    t0 = solution.t0 if t0 is None else t0
    ts = solution.t
    ok = np.ones(len(ts), dtype=bool)
    for c in constraints:
        ok &= c.slack(solution.y.T) >= 0
    i0 = int(np.argmin(np.abs(ts - t0)))
    state0 = solution.state(np.asarray(t0))
    for c in constraints:
        if np.any(c.slack(state0) < 0):
            raise GuardError(f"{solution.system.name}: guard {c.name} violated at t0={t0:.17g}", c.name)
    notes = []

    def slack(t):
        st = solution.state(np.asarray(t))
        return min(float(c.slack(st)) for c in constraints)

    def which(t):
        st = solution.state(np.asarray(t))
        return ", ".join(c.name for c in constraints if float(c.slack(st)) < 0)

    def refine(good, bad):
        label = which(bad)
        while abs(bad - good) > BISECT_TOL:
            mid = 0.5 * (good + bad)
            if slack(mid) >= 0:
                good = mid
            else:
                bad = mid
        return good, label

    hi = ts[-1]
    for i in range(i0, len(ts)):
        if ts[i] < t0:
            continue
        if not ok[i]:
            prev = ts[i - 1] if i > 0 and ts[i - 1] >= t0 else t0
            hi, label = refine(prev, ts[i])
            notes.append(f"guard: {label} (upper end {hi:.10g})")
            break
    lo = ts[0]
    for i in range(i0, -1, -1):
        if ts[i] > t0:
            continue
        if not ok[i]:
            prev = ts[i + 1] if i + 1 < len(ts) and ts[i + 1] <= t0 else t0
            lo, label = refine(prev, ts[i])
            notes.append(f"guard: {label} (lower end {lo:.10g})")
            break
    return float(lo), float(hi), notes


def observed_order(system: OdeSystem, y0, t0: float, t1: float, step: float) -> float:
    """Empirical convergence order from runs at h, h/2, h/4."""
    ends = [_rk4_run(system, y0, t0, t1, step / 2**j)[1][-1] for j in range(3)]
    d1 = float(np.max(np.abs(ends[0] - ends[1])))
    d2 = float(np.max(np.abs(ends[1] - ends[2])))
    if d2 == 0.0:
        return math.inf
    return math.log2(d1 / d2)
