"""Explicit (g, f) pairs for the Ricci-degenerate families.

Each family is described by a small frozen spec dataclass; :func:`build`
integrates the profile ODEs, applies domain guards and returns an immutable
:class:`MetricInstance`. Metric and potential fields are assembled from the
stored ODE solutions, so an instance restored from JSON evaluates exactly as
the one that was saved.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, dataclass, field, fields, replace
from functools import cached_property
from typing import Any, ClassVar, Union

import numpy as np
from scipy import integrate as sci_integrate

from . import jets as J
from .jets import Box, Jet, ScalarField
from .ode import (
    Constraint,
    GuardError,
    OdeSolution,
    OdeSystem,
    domain_guard,
    eval_with_derivatives,
    integrate_interval,
    restore_solution,
)
from .tensors import MetricField

DRIFT_LIMIT = 1e-8
CHART_MARGIN = 0.05
QB_SUM_MARGIN = 0.05
SLOPE_MARGIN = 1e-3
PSI_MARGIN = 1e-6
PROFILE_CAP = 1e4


class FamilyError(ValueError):
    """Invalid family parameters."""


class UnverifiableInstance(ValueError):
    pass


# ---------------------------------------------------------------------------
# equations


def _horner(coeffs, x):
    out = 0.0 * x
    for c in reversed(coeffs):
        out = out * x + c
    return out


@dataclass(frozen=True)
class EquationSpec:
    """Which form of  nabla df = psi(f) Rc + phi(f) g  is in force.

    psi and phi are polynomials in f (ascending coefficients). The named
    constructors fix them for solitons, V-static spaces and critical point
    metrics; ``R`` is the constant scalar curvature those two require.
    """

    kind: str
    lam: float = 0.0
    kappa: float = 0.0
    R: float = 0.0
    psi_coeffs: tuple[float, ...] = ()
    phi_coeffs: tuple[float, ...] = ()

    KINDS: ClassVar = ("generic", "soliton", "vstatic", "critical")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise FamilyError(f"unknown equation kind {self.kind!r}")

    @classmethod
    def soliton(cls, lam: float) -> EquationSpec:
        return cls("soliton", lam=lam)

    @classmethod
    def vstatic(cls, kappa: float, R: float) -> EquationSpec:
        return cls("vstatic", kappa=kappa, R=R)

    @classmethod
    def critical(cls, R: float) -> EquationSpec:
        return cls("critical", R=R)

    @classmethod
    def generic(cls, psi, phi) -> EquationSpec:
        return cls("generic", psi_coeffs=tuple(map(float, psi)), phi_coeffs=tuple(map(float, phi)))

    @property
    def a1(self) -> float:
        return {"vstatic": 0.0, "critical": 1.0}[self.kind]

    @property
    def a2(self) -> float:
        return {"vstatic": -self.kappa / 2, "critical": -self.R / 3}[self.kind]

    @property
    def y(self) -> float:
        """Inhomogeneity of the c-equation  b''c = b'c' + y."""
        return self.a2 + self.a1 * self.R / 2

    @property
    def constant_scalar(self) -> bool:
        return self.kind in ("vstatic", "critical")

    @property
    def psi_poly(self) -> tuple[float, ...]:
        if self.kind == "soliton":
            return (-1.0,)
        if self.kind == "generic":
            return self.psi_coeffs
        return (self.a1, 1.0)

    @property
    def phi_poly(self) -> tuple[float, ...]:
        if self.kind == "soliton":
            return (float(self.lam),)
        if self.kind == "generic":
            return self.phi_coeffs
        return (self.a2, -self.R / 2)

    def psi(self, f):
        return _horner(self.psi_poly, f)

    def phi(self, f):
        return _horner(self.phi_poly, f)

    def dpsi(self, f):
        p = self.psi_poly
        return _horner(tuple(k * c for k, c in enumerate(p))[1:] or (0.0,), f)

    def dphi(self, f):
        p = self.phi_poly
        return _horner(tuple(k * c for k, c in enumerate(p))[1:] or (0.0,), f)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> EquationSpec:
        d = dict(d)
        for k in ("psi_coeffs", "phi_coeffs"):
            d[k] = tuple(d.get(k, ()))
        return cls(**d)


def equation_spec_eval(spec: EquationSpec, f_jet: Jet) -> tuple[Jet, Jet]:
    """psi and phi as jets, propagated through f."""
    psi = spec.psi(f_jet)
    phi = spec.phi(f_jet)
    if not isinstance(psi, Jet):
        psi = Jet.const(np.broadcast_to(psi, f_jet.batch_shape), f_jet.order, f_jet.point)
    if not isinstance(phi, Jet):
        phi = Jet.const(np.broadcast_to(phi, f_jet.batch_shape), f_jet.order, f_jet.point)
    return psi, phi


# ---------------------------------------------------------------------------
# family specs


def _interval(v) -> tuple[float, float]:
    lo, hi = (float(x) for x in v)
    if not lo < hi:
        raise FamilyError(f"interval [{lo}, {hi}] is empty")
    return lo, hi


@dataclass(frozen=True)
class SolitonCylinder:
    """g = dx1^2 + k'(x3)^2 dx2^2 + dx3^2,  f = lam/2 x1^2 + k(x3)."""

    family: ClassVar[str] = "soliton-cylinder"
    lam: float
    C: float
    k0: float
    k0p: float
    x3_base: float = 1.0
    x3_interval: tuple[float, float] = (0.3, 2.0)
    x1_interval: tuple[float, float] = (-1.0, 1.0)
    x2_interval: tuple[float, float] = (0.0, 1.0)
    step: float = 1e-3

    @classmethod
    def cigar(cls, x3_interval=(0.3, 2.0), x3_base=1.0, **kw) -> SolitonCylinder:
        """Seed with k = -2 log cosh x3, which solves the ODE with lam=0, C=-2."""
        return cls(lam=0.0, C=-2.0, k0=-2 * math.log(math.cosh(x3_base)), k0p=-2 * math.tanh(x3_base),
                   x3_base=x3_base, x3_interval=x3_interval, **kw)


@dataclass(frozen=True)
class QBFamily:
    """g = (q(x3)+b(x1))^-2 (dx1^2 + q'^2 dx2^2 + dx3^2),  f = c(x1)/(q+b) - a1."""

    family: ClassVar[str] = "qb"
    kind: str  # "vstatic" | "critical"
    m: float
    l: float
    alpha: float
    k_const: float
    R: float
    q0: float
    b0: float
    c0: float
    kappa: float = 0.0
    q0_sign: int = 1
    b0_sign: int = 1
    x1_base: float = 0.0
    x3_base: float = 0.0
    x1_interval: tuple[float, float] = (-0.3, 0.3)
    x3_interval: tuple[float, float] = (-0.3, 0.3)
    x2_interval: tuple[float, float] = (0.0, 1.0)
    step: float = 1e-3

    def equation(self) -> EquationSpec:
        if self.kind == "vstatic":
            return EquationSpec.vstatic(self.kappa, self.R)
        if self.kind == "critical":
            return EquationSpec.critical(self.R)
        raise FamilyError(f"QB kind must be 'vstatic' or 'critical', got {self.kind!r}")

    def q_slope_sq(self, q: float) -> float:
        return 2 * self.m * q**3 + self.l * q**2 - self.alpha * q - self.k_const

    def b_slope_sq(self, b: float) -> float:
        return 2 * self.m * b**3 - self.l * b**2 - self.alpha * b - self.R / 6 + self.k_const


@dataclass(frozen=True)
class PFamily:
    """g = p(x3)^2 dx1^2 + p'^2 dx2^2 + dx3^2,  f = c1(x1) p - 1, critical with R = 0."""

    family: ClassVar[str] = "p"
    beta: float
    gamma: float
    p0: float
    c10: float
    c10p: float
    p0_sign: int = 1
    x1_base: float = 0.0
    x3_base: float = 0.0
    x1_interval: tuple[float, float] = (-1.0, 1.0)
    x3_interval: tuple[float, float] = (-0.5, 0.5)
    x2_interval: tuple[float, float] = (0.0, 1.0)
    step: float = 1e-3


@dataclass(frozen=True)
class WarpedConstCurv:
    """g = ds^2 + h(s)^2 g~ with g~ of constant curvature k_fiber, f = f(s).

    The fiber is charted as dx2^2 + S(x2)^2 dx3^2 with S = sin, identity or
    sinh scaled to curvature ``k_fiber`` (S = 1 for a flat fiber).
    """

    family: ClassVar[str] = "warped"
    eq: EquationSpec
    k_fiber: float
    h0: float
    h0p: float
    f0: float
    f0p: float
    s_base: float = 1.0
    s_interval: tuple[float, float] = (0.5, 1.5)
    x2_interval: tuple[float, float] = (0.4, 2.7)
    x3_interval: tuple[float, float] = (0.0, 1.0)
    step: float = 1e-3


FamilySpec = Union[SolitonCylinder, QBFamily, PFamily, WarpedConstCurv]
SPEC_TYPES = {cls.family: cls for cls in (SolitonCylinder, QBFamily, PFamily, WarpedConstCurv)}


def spec_to_dict(spec: FamilySpec) -> dict:
    out: dict[str, Any] = {"family": spec.family}
    for f_ in fields(spec):
        v = getattr(spec, f_.name)
        if isinstance(v, EquationSpec):
            v = v.to_dict()
        elif isinstance(v, tuple):
            v = list(v)
        out[f_.name] = v
    return out


def spec_from_dict(d: dict) -> FamilySpec:
    d = dict(d)
    tag = d.pop("family")
    try:
        cls = SPEC_TYPES[tag]
    except KeyError:
        raise FamilyError(f"unknown family {tag!r}") from None
    names = {f_.name for f_ in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise FamilyError(f"unknown field(s) for {tag}: {', '.join(sorted(unknown))}")
    kw = {}
    for k, v in d.items():
        try:
            if k == "eq":
                v = EquationSpec.from_dict(v)
            elif k.endswith("_interval"):
                v = _interval(v)
            elif k.endswith("_sign"):
                v = int(v)
            elif k == "kind":
                v = str(v)
            else:
                v = float(v)
        except (TypeError, ValueError) as exc:
            raise FamilyError(f"{tag}: field {k!r}: {exc}") from None
        kw[k] = v
    missing = [f_.name for f_ in fields(cls)
               if f_.name not in kw and f_.default is MISSING and f_.default_factory is MISSING]
    if missing:
        raise FamilyError(f"{tag}: missing field(s) {', '.join(missing)}")
    return cls(**kw)


# ---------------------------------------------------------------------------
# profile ODE systems


def cylinder_system(lam: float, C: float) -> OdeSystem:
    def rhs(t, y):
        return np.array([y[1], 0.5 * y[1] ** 2 - lam * y[0] + C])

    def k_derivs(t, s):
        k, kp = s[0], s[1]
        k2 = 0.5 * kp**2 - lam * k + C
        k3 = kp * k2 - lam * kp
        k4 = k2**2 + kp * k3 - lam * k2
        return [k, kp, k2, k3, k4]

    def energy(t, s):
        return np.exp(-s[0]) * (s[1] ** 2 - 2 * lam * s[0] + 2 * C - 2 * lam)

    return OdeSystem("k", 2, rhs, {"k": k_derivs}, (energy,), state_profiles=(("k", 0), ("k", 1)))


def q_system(m: float, l: float, alpha: float, k: float) -> OdeSystem:
    def rhs(t, y):
        return np.array([y[1], 3 * m * y[0] ** 2 + l * y[0] - alpha / 2])

    def q_derivs(t, s):
        q, qp = s[0], s[1]
        q2 = 3 * m * q**2 + l * q - alpha / 2
        q3 = (6 * m * q + l) * qp
        q4 = 6 * m * qp**2 + (6 * m * q + l) * q2
        return [q, qp, q2, q3, q4]

    def conserved(t, s):
        q, qp = s[0], s[1]
        return qp**2 - 2 * m * q**3 - l * q**2 + alpha * q + k

    return OdeSystem("q", 2, rhs, {"q": q_derivs}, (conserved,), (0.0,), (("q", 0), ("q", 1)))


def bc_system(m: float, l: float, alpha: float, k: float, R: float, y: float) -> OdeSystem:
    def b_derivs(t, s):
        b, bp = s[0], s[1]
        b2 = 3 * m * b**2 - l * b - alpha / 2
        b3 = (6 * m * b - l) * bp
        b4 = 6 * m * bp**2 + (6 * m * b - l) * b2
        return [b, bp, b2, b3, b4]

    def c_derivs(t, s):
        _, bp, b2, b3, b4 = b_derivs(t, s)
        c = s[2]
        cp = (b2 * c - y) / bp
        c2 = b3 * c / bp
        c3 = (b4 * c + b3 * cp) / bp - b3 * c * b2 / bp**2
        return [c, cp, c2, c3]

    def rhs(t, s):
        b, bp, c = s[0], s[1], s[2]
        b2 = 3 * m * b**2 - l * b - alpha / 2
        return np.array([bp, b2, (b2 * c - y) / bp])

    def conserved(t, s):
        b, bp = s[0], s[1]
        return bp**2 - 2 * m * b**3 + l * b**2 + alpha * b + R / 6 - k

    return OdeSystem("bc", 3, rhs, {"b": b_derivs, "c": c_derivs}, (conserved,), (0.0,),
                     (("b", 0), ("b", 1), ("c", 0)))


def p_system(beta: float, gamma: float) -> OdeSystem:
    def rhs(t, y):
        return np.array([y[1], -beta / (2 * y[0] ** 2)])

    def p_derivs(t, s):
        p, pp = s[0], s[1]
        p2 = -beta / (2 * p**2)
        p3 = beta * pp / p**3
        p4 = beta * (p2 / p**3 - 3 * pp**2 / p**4)
        return [p, pp, p2, p3, p4]

    def conserved(t, s):
        return s[1] ** 2 - beta / s[0] - gamma

    return OdeSystem("p", 2, rhs, {"p": p_derivs}, (conserved,), (0.0,), (("p", 0), ("p", 1)))


def c1_system(gamma: float) -> OdeSystem:
    def rhs(t, y):
        return np.array([y[1], -gamma * y[0]])

    def derivs(t, s):
        return [s[0], s[1], -gamma * s[0], -gamma * s[1]]

    def energy(t, s):
        return s[1] ** 2 + gamma * s[0] ** 2

    return OdeSystem("c1", 2, rhs, {"c1": derivs}, (energy,), state_profiles=(("c1", 0), ("c1", 1)))


def _warped_accel(eq: EquationSpec, k_fiber: float, h, hp, f, fp):
    psi, phi = eq.psi(f), eq.phi(f)
    h2 = (h / psi) * (psi * (k_fiber - hp * hp) / (h * h) + phi - (hp / h) * fp)
    f2 = psi * (-2.0 * h2 / h) + phi
    return h2, f2


def _taylor_mode(accel, state, order: int = 3):
    """Exact Taylor coefficients of a second-order system's solution by Picard iteration on jets.

    ``state`` = (u1, u1', u2, u2', ...) with shape (dim, *batch); returns the
    derivatives of every position component through ``order``.
    """
    state = np.asarray(state, dtype=float)
    pure = [J._index(order)[(n, 0, 0)] for n in range(order + 1)]

    def integrate_jet(jet: Jet, c0) -> Jet:
        out = np.zeros_like(jet.coeffs)
        out[0] = c0
        for n in range(order):
            out[pure[n + 1]] = jet.coeffs[pure[n]] / (n + 1)
        return Jet(out, order)

    Y = [Jet.const(state[i], order) for i in range(state.shape[0])]
    for _ in range(order + 1):
        acc = accel(*Y)
        new = []
        for i in range(0, len(Y), 2):
            vel = integrate_jet(acc[i // 2], state[i + 1])
            new += [integrate_jet(Y[i + 1], state[i]), vel]
        Y = new
    return [[Y[i].coeffs[pure[n]] * math.factorial(n) for n in range(order + 1)] for i in range(0, len(Y), 2)]


def warped_system(eq: EquationSpec, k_fiber: float) -> OdeSystem:
    def rhs(t, y):
        h2, f2 = _warped_accel(eq, k_fiber, y[0], y[1], y[2], y[3])
        return np.array([y[1], h2, y[3], f2])

    def accel(h, hp, f, fp):
        return _warped_accel(eq, k_fiber, h, hp, f, fp)

    def h_derivs(t, s):
        return _taylor_mode(accel, s)[0]

    def f_derivs(t, s):
        return _taylor_mode(accel, s)[1]

    def scalar(s):
        h, hp, f, fp = s[0], s[1], s[2], s[3]
        h2, _ = _warped_accel(eq, k_fiber, h, hp, f, fp)
        return -2 * h2 / h + 2 * ((k_fiber - hp**2) / h**2 - h2 / h)

    integrals, targets = (), ()
    if eq.kind == "soliton":
        integrals = (lambda t, s: scalar(s) + s[3] ** 2 - 2 * eq.lam * s[2],)
        targets = (None,)
    elif eq.constant_scalar:
        # the scalar curvature is pinned to its target, so this must vanish
        integrals = (lambda t, s: (eq.a1 + s[2]) ** 2 * (scalar(s) - eq.R),)
        targets = (0.0,)
    return OdeSystem("warped", 4, rhs, {"h": h_derivs, "f": f_derivs}, integrals, targets,
                     (("h", 0), ("h", 1), ("f", 0), ("f", 1)))


def system_for(spec: FamilySpec, name: str) -> OdeSystem:
    if isinstance(spec, SolitonCylinder):
        return cylinder_system(spec.lam, spec.C)
    if isinstance(spec, QBFamily):
        if name == "q":
            return q_system(spec.m, spec.l, spec.alpha, spec.k_const)
        return bc_system(spec.m, spec.l, spec.alpha, spec.k_const, spec.R, spec.equation().y)
    if isinstance(spec, PFamily):
        return p_system(spec.beta, spec.gamma) if name == "p" else c1_system(spec.gamma)
    if isinstance(spec, WarpedConstCurv):
        return warped_system(spec.eq, spec.k_fiber)
    raise FamilyError(f"unsupported spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# instances


def _profile(sol: OdeSolution, name: str, coord: Jet, shift: int = 0) -> Jet:
    """Jet of the ``shift``-th derivative of a profile, composed with a coordinate jet."""
    d = eval_with_derivatives(sol, coord.value, name, order=coord.order + shift)
    return J.compose_univariate(d[shift:], coord)


def _fiber_warp(k: float, x: Jet) -> Jet:
    if k > 0:
        r = math.sqrt(k)
        return J.sin(x * r) / r
    if k < 0:
        r = math.sqrt(-k)
        return J.sinh(x * r) / r
    return x * 0.0 + 1.0


@dataclass(frozen=True, eq=False)
class MetricInstance:
    spec: FamilySpec
    equation: EquationSpec
    solutions: dict[str, OdeSolution]
    chart: Box
    guard_notes: tuple[str, ...] = ()
    potential_scale: float = 1.0
    explicit: tuple[MetricField, ScalarField] | None = field(default=None, repr=False)

    @classmethod
    def analytic(cls, metric: MetricField, potential: ScalarField, equation: EquationSpec,
                 chart: Box) -> MetricInstance:
        """Wrap closed-form fields (no ODE provenance) so they can be verified."""
        return cls(None, equation, {}, chart, explicit=(metric, potential))

    @property
    def family(self) -> str:
        return "analytic" if self.spec is None else self.spec.family

    @property
    def max_drift(self) -> float:
        return max((s.drift for s in self.solutions.values()), default=0.0)

    @property
    def verifiable(self) -> bool:
        return self.max_drift <= DRIFT_LIMIT

    @property
    def tag(self) -> str:
        if self.spec is None:
            return "analytic"
        if isinstance(self.spec, QBFamily):
            return f"qb-{'vstatic' if self.spec.kind == 'vstatic' else 'cpm'}"
        if isinstance(self.spec, PFamily):
            return "p-cpm"
        return self.spec.family

    def perturbed(self, *, potential_scale: float | None = None, equation: EquationSpec | None = None):
        return replace(
            self,
            potential_scale=self.potential_scale if potential_scale is None else potential_scale,
            equation=self.equation if equation is None else equation,
        )

    @cached_property
    def fields(self) -> tuple[MetricField, ScalarField]:
        if self.explicit is not None:
            metric, pot = self.explicit
            if self.potential_scale == 1.0:
                return metric, pot
            s = self.potential_scale
            return metric, ScalarField(lambda x1, x2, x3: pot.fn(x1, x2, x3) * s, pot.domain, pot.name)
        return _assemble(self)

    @property
    def metric(self) -> MetricField:
        return self.fields[0]

    @property
    def potential(self) -> ScalarField:
        return self.fields[1]


def _assemble(inst: MetricInstance) -> tuple[MetricField, ScalarField]:
    spec, sols, scale, box = inst.spec, inst.solutions, inst.potential_scale, inst.chart

    def sf(fn, name):
        return ScalarField(fn, box, name)

    one = sf(lambda x1, x2, x3: x1 * 0.0 + 1.0, "1")
    if isinstance(spec, SolitonCylinder):
        sol = sols["k"]
        g22 = sf(lambda x1, x2, x3: _profile(sol, "k", x3, 1) ** 2, "k'^2")
        pot = sf(lambda x1, x2, x3: (x1 * x1 * (spec.lam / 2) + _profile(sol, "k", x3)) * scale, "f")
        return MetricField(one, g22, one, box), pot
    if isinstance(spec, QBFamily):
        qs, bs = sols["q"], sols["bc"]
        a1 = spec.equation().a1

        def inv_s2(x1, x3):
            s = _profile(qs, "q", x3) + _profile(bs, "b", x1)
            return 1.0 / (s * s)

        g11 = sf(lambda x1, x2, x3: inv_s2(x1, x3), "(q+b)^-2")
        g22 = sf(lambda x1, x2, x3: _profile(qs, "q", x3, 1) ** 2 * inv_s2(x1, x3), "q'^2 (q+b)^-2")
        pot = sf(
            lambda x1, x2, x3: (_profile(bs, "c", x1) / (_profile(qs, "q", x3) + _profile(bs, "b", x1)) - a1)
            * scale,
            "f",
        )
        return MetricField(g11, g22, g11, box), pot
    if isinstance(spec, PFamily):
        ps, cs = sols["p"], sols["c1"]
        g11 = sf(lambda x1, x2, x3: _profile(ps, "p", x3) ** 2, "p^2")
        g22 = sf(lambda x1, x2, x3: _profile(ps, "p", x3, 1) ** 2, "p'^2")
        pot = sf(lambda x1, x2, x3: (_profile(cs, "c1", x1) * _profile(ps, "p", x3) - 1.0) * scale, "f")
        return MetricField(g11, g22, one, box), pot
    if isinstance(spec, WarpedConstCurv):
        ws = sols["warped"]
        g22 = sf(lambda x1, x2, x3: _profile(ws, "h", x1) ** 2, "h^2")
        g33 = sf(lambda x1, x2, x3: (_profile(ws, "h", x1) * _fiber_warp(spec.k_fiber, x2)) ** 2, "h^2 S^2")
        pot = sf(lambda x1, x2, x3: _profile(ws, "f", x1) * scale, "f")
        return MetricField(one, g22, g33, box), pot
    raise FamilyError(f"unsupported spec {type(spec).__name__}")


def _chart(i1, i2, i3) -> Box:
    lo = (i1[0], i2[0], i3[0])
    hi = (i1[1], i2[1], i3[1])
    margin = tuple(CHART_MARGIN * (h - l) for l, h in zip(lo, hi))
    return Box(lo, hi, margin)


def _slope(sq: float, sign: int, what: str) -> float:
    if sq < 0:
        raise FamilyError(f"{what}: first integral gives negative squared slope {sq:.6g}")
    if sign not in (1, -1):
        raise FamilyError(f"{what}: sign must be +1 or -1")
    return sign * math.sqrt(sq)


def _nonvanishing(name: str, fn, margin: float, sign: float) -> Constraint:
    """|fn| >= margin, oriented by the sign at the base point.

    A signed guard catches a zero crossing that falls between nodes, which
    an absolute-value guard can step over.
    """
    s = 1.0 if sign >= 0 else -1.0
    return Constraint(name, lambda st: s * fn(st), margin)


def _run(system, y0, t0, interval, step, constraints):
    sol = integrate_interval(system, y0, t0, interval[0], interval[1], step, constraints)
    lo, hi, notes = domain_guard(sol, constraints, t0)
    if not hi > lo:
        raise GuardError(f"{system.name}: empty guarded interval", constraints[0].name if constraints else "")
    return sol, (lo, hi), notes


def build_soliton_cylinder(spec: SolitonCylinder) -> MetricInstance:
    if spec.k0p == 0:
        raise FamilyError("k0' must be nonzero")
    guards = [_nonvanishing("k'", lambda s: s[1], SLOPE_MARGIN, spec.k0p)]
    sol, i3, notes = _run(cylinder_system(spec.lam, spec.C), [spec.k0, spec.k0p], spec.x3_base,
                          _interval(spec.x3_interval), spec.step, guards)
    chart = _chart(_interval(spec.x1_interval), _interval(spec.x2_interval), i3)
    return MetricInstance(spec, EquationSpec.soliton(spec.lam), {"k": sol}, chart, tuple(notes))


def build_qb(spec: QBFamily) -> MetricInstance:
    eq = spec.equation()
    if spec.m == 0:
        raise FamilyError("m must be nonzero")
    q0p = _slope(spec.q_slope_sq(spec.q0), spec.q0_sign, "q")
    b0p = _slope(spec.b_slope_sq(spec.b0), spec.b0_sign, "b")
    total = spec.q0 + spec.b0
    if total < QB_SUM_MARGIN:
        raise GuardError(f"guard: q+b = {total:.6g} below {QB_SUM_MARGIN} at the base point", "q+b")
    # split the q+b slack evenly so the whole rectangle stays above the margin
    half = 0.5 * (total - QB_SUM_MARGIN)
    q_guards = [
        _nonvanishing("q'", lambda s: s[1], SLOPE_MARGIN, q0p),
        Constraint("q+b", lambda s: s[0] - (spec.q0 - half), 0.0),
        Constraint("|q| cap", lambda s: PROFILE_CAP - np.abs(s[0]), 0.0),
    ]
    b_guards = [
        _nonvanishing("b'", lambda s: s[1], SLOPE_MARGIN, b0p),
        Constraint("q+b", lambda s: s[0] - (spec.b0 - half), 0.0),
        Constraint("|b| cap", lambda s: PROFILE_CAP - np.abs(s[0]), 0.0),
    ]
    qs, i3, n3 = _run(q_system(spec.m, spec.l, spec.alpha, spec.k_const), [spec.q0, q0p], spec.x3_base,
                      _interval(spec.x3_interval), spec.step, q_guards)
    bs, i1, n1 = _run(bc_system(spec.m, spec.l, spec.alpha, spec.k_const, spec.R, eq.y), [spec.b0, b0p, spec.c0],
                      spec.x1_base, _interval(spec.x1_interval), spec.step, b_guards)
    chart = _chart(i1, _interval(spec.x2_interval), i3)
    return MetricInstance(spec, eq, {"q": qs, "bc": bs}, chart, tuple(n1 + n3))


def build_p(spec: PFamily) -> MetricInstance:
    if not spec.beta < 0:
        raise FamilyError("beta must be negative")
    if not spec.gamma > 0:
        raise FamilyError("gamma must be positive")
    sq = spec.beta / spec.p0 + spec.gamma
    if spec.p0 <= 0 or sq <= 0:
        raise FamilyError(f"p0 must exceed -beta/gamma = {-spec.beta / spec.gamma:.6g}")
    p0p = _slope(sq, spec.p0_sign, "p")
    p_guards = [
        _nonvanishing("p'", lambda s: s[1], SLOPE_MARGIN, p0p),
        Constraint("p", lambda s: s[0], SLOPE_MARGIN),
    ]
    ps, i3, n3 = _run(p_system(spec.beta, spec.gamma), [spec.p0, p0p], spec.x3_base,
                      _interval(spec.x3_interval), spec.step, p_guards)
    cs, i1, n1 = _run(c1_system(spec.gamma), [spec.c10, spec.c10p], spec.x1_base,
                      _interval(spec.x1_interval), spec.step, [])
    chart = _chart(i1, _interval(spec.x2_interval), i3)
    return MetricInstance(spec, EquationSpec.critical(0.0), {"p": ps, "c1": cs}, chart, tuple(n1 + n3))


def build_warped(spec: WarpedConstCurv) -> MetricInstance:
    if not spec.h0 > 0:
        raise FamilyError("h0 must be positive")
    eq = spec.eq
    guards = [
        _nonvanishing("psi(f)", lambda s: eq.psi(s[2]), PSI_MARGIN, eq.psi(spec.f0)),
        Constraint("h", lambda s: s[0], PSI_MARGIN),
    ]
    ws, i1, notes = _run(warped_system(eq, spec.k_fiber), [spec.h0, spec.h0p, spec.f0, spec.f0p], spec.s_base,
                         _interval(spec.s_interval), spec.step, guards)
    x2 = _interval(spec.x2_interval)
    if spec.k_fiber > 0:
        r = math.sqrt(spec.k_fiber)
        if x2[0] * r <= 0 or x2[1] * r >= math.pi:
            raise FamilyError("x2_interval must lie strictly inside (0, pi/sqrt(k_fiber))")
    elif spec.k_fiber < 0 and x2[0] <= 0:
        raise FamilyError("x2_interval must be positive for a hyperbolic fiber")
    chart = _chart(i1, x2, _interval(spec.x3_interval))
    return MetricInstance(spec, eq, {"warped": ws}, chart, tuple(notes))


def build(spec: FamilySpec) -> MetricInstance:
    if isinstance(spec, SolitonCylinder):
        return build_soliton_cylinder(spec)
    if isinstance(spec, QBFamily):
        return build_qb(spec)
    if isinstance(spec, PFamily):
        return build_p(spec)
    if isinstance(spec, WarpedConstCurv):
        return build_warped(spec)
    raise FamilyError(f"unsupported spec {type(spec).__name__}")


# ---------------------------------------------------------------------------
# closed forms


def closed_form_reference(instance: MetricInstance, points) -> dict | None:
    """Closed-form Ricci eigenvalues and profile values at ``points`` (shape (3, ...))."""
    pts = np.asarray(points, dtype=float)
    spec, sols = instance.spec, instance.solutions
    if isinstance(spec, QBFamily):
        q = eval_with_derivatives(sols["q"], pts[2], "q", 1)
        b = eval_with_derivatives(sols["bc"], pts[0], "b", 1)
        c = eval_with_derivatives(sols["bc"], pts[0], "c", 0)
        s3 = (q[0] + b[0]) ** 3
        return {"lam1": 2 * spec.m * s3 + spec.R / 3, "lam2": -spec.m * s3 + spec.R / 3,
                "q": q[0], "q'": q[1], "b": b[0], "b'": b[1], "c": c[0]}
    if isinstance(spec, SolitonCylinder):
        k = eval_with_derivatives(sols["k"], pts[2], "k", 3)
        return {"lam1": np.zeros_like(k[0]), "lam2": -k[3] / k[1], "k": k[0], "k'": k[1]}
    if isinstance(spec, PFamily):
        p = eval_with_derivatives(sols["p"], pts[2], "p", 3)
        return {"lam1": -2 * p[2] / p[0], "lam2": -p[2] / p[0] - p[3] / p[1], "p": p[0], "p'": p[1]}
    return None


def qb_conserved_residuals(instance: MetricInstance) -> tuple[float, float]:
    """Max |first integral| of the q and b profiles over their nodes."""
    spec = instance.spec
    qs, bs = instance.solutions["q"], instance.solutions["bc"]
    q, qp = qs.y[:, 0], qs.y[:, 1]
    b, bp = bs.y[:, 0], bs.y[:, 1]
    rq = qp**2 - 2 * spec.m * q**3 - spec.l * q**2 + spec.alpha * q + spec.k_const
    rb = bp**2 - 2 * spec.m * b**3 + spec.l * b**2 + spec.alpha * b + spec.R / 6 - spec.k_const
    return float(np.max(np.abs(rq))), float(np.max(np.abs(rb)))


def c_equation_residual(instance: MetricInstance, n: int = 41) -> float:
    """Deviation of c from the quadrature representation c = b' (A - y * int b'^-2).

    The integral is evaluated by adaptive quadrature on the dense b' profile,
    independent of how c was integrated.
    """
    bs = instance.solutions["bc"]
    y = instance.equation.y
    lo, hi = instance.chart.lo[0], instance.chart.hi[0]
    t0 = bs.t0
    A = bs.y0[2] / bs.y0[1]

    def inv_bp2(t):
        return 1.0 / float(bs.state(np.asarray(t))[1]) ** 2

    worst = 0.0
    for t in np.linspace(lo, hi, n):
        integral, _ = sci_integrate.quad(inv_bp2, t0, t, epsabs=1e-14, epsrel=1e-13, limit=200)
        st = bs.state(np.asarray(t))
        worst = max(worst, abs(float(st[2]) - float(st[1]) * (A - y * integral)))
    return worst


# ---------------------------------------------------------------------------
# serialization


def instance_to_dict(instance: MetricInstance) -> dict:
    if instance.spec is None:
        raise FamilyError("analytic instances carry code, not data, and cannot be serialized")
    return {
        "format": "riccideg-instance/1",
        "family": instance.tag,
        "spec": spec_to_dict(instance.spec),
        "equation": instance.equation.to_dict(),
        "potential_scale": instance.potential_scale,
        "chart": {"lo": list(instance.chart.lo), "hi": list(instance.chart.hi),
                  "margin": list(instance.chart.margin)},
        "guards": list(instance.guard_notes),
        "drift": {k: s.drift for k, s in instance.solutions.items()},
        "solutions": {
            k: {
                "t0": s.t0,
                "y0": s.y0.tolist(),
                "t": s.t.tolist(),
                "y": s.y.tolist(),
                "reason": s.reason,
                "richardson": s.richardson,
                "flagged": s.flagged,
            }
            for k, s in instance.solutions.items()
        },
    }


def instance_from_dict(d: dict) -> MetricInstance:
    spec = spec_from_dict(d["spec"])
    sols = {}
    for name, s in d["solutions"].items():
        sols[name] = restore_solution(system_for(spec, name), s["t"], s["y"], s["t0"], s["y0"],
                                      s.get("reason", ""), s.get("richardson", 0.0), s.get("flagged", False))
    ch = d["chart"]
    chart = Box(tuple(ch["lo"]), tuple(ch["hi"]), tuple(ch["margin"]))
    return MetricInstance(spec, EquationSpec.from_dict(d["equation"]), sols, chart, tuple(d.get("guards", ())),
                          float(d.get("potential_scale", 1.0)))


def dumps_instance(instance: MetricInstance) -> str:
    return json.dumps(instance_to_dict(instance), indent=1, sort_keys=True)


def loads_instance(text: str) -> MetricInstance:
    return instance_from_dict(json.loads(text))
