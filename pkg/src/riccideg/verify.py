"""Residual checks of the structure equations on a lattice over an instance chart.

Every residual is reported in the relative-plus-absolute form
``|residual| / (1 + |reference|)`` so that a check passes exactly when its
``max_residual`` is at most its ``tolerance``. Tensor magnitudes are g-norms.
The Cotton non-flatness witness is a lower bound and carries ``kind="lower"``;
the degeneracy check bundles its gap and orthogonality clauses in ``details``.
"""

from __future__ import annotations

import json
import math
import weakref
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import jets as J
from .families import (
    DRIFT_LIMIT,
    PFamily,
    QBFamily,
    SolitonCylinder,
    WarpedConstCurv,
    closed_form_reference,
)
from .jets import Jet, ScalarField
from .tensors import (
    covariant_derivative_sym2,
    cotton,
    curvature,
    frame_normal_term,
    generalized_eigen,
    hessian_and_gradient,
    oneform_norm,
    rank3_norm,
    sym2_norm,
)

TOL = 1e-7
PSI_SKIP = 1e-6
GRAD_SKIP = 1e-3
SKIP_LIMIT = 0.2
DEGENERACY_TOL = 1e-8
GAP_MIN = 1e-4
ORTHOGONALITY_TOL = 1e-6
COTTON_WITNESS = 1e-6
STRUCT_A_TOL = 1e-9
STRUCT_B_TOL = 1e-8


class UsageError(ValueError):
    """A check was requested for an instance it does not apply to."""


@dataclass(frozen=True)
class SampleGrid:
    """Deterministic lattice; by default inset by the instance chart margins."""

    counts: tuple[int, int, int] = (7, 7, 7)
    margin: tuple[float, float, float] | None = None

    def __post_init__(self):
        if len(self.counts) != 3 or min(self.counts) < 3:
            raise ValueError(f"grid counts must be at least 3 per axis, got {self.counts}")

    @classmethod
    def parse(cls, text: str) -> SampleGrid:
        try:
            counts = tuple(int(c) for c in text.lower().split("x"))
        except ValueError:
            raise ValueError(f"grid must look like 7x7x7, got {text!r}") from None
        if len(counts) != 3:
            raise ValueError(f"grid must have three counts, got {text!r}")
        return cls(counts)

    def points(self, chart) -> np.ndarray:
        margin = chart.margin if self.margin is None else self.margin
        axes = [np.linspace(lo + m, hi - m, n) for lo, hi, m, n in zip(chart.lo, chart.hi, margin, self.counts)]
        return np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1)


@dataclass
class CheckResult:
    name: str
    max_residual: float
    mean_residual: float
    worst_point: list[float] | None
    tolerance: float
    passed: bool
    kind: str = "upper"
    mandatory: bool = True
    status: str = ""
    skipped: int = 0
    total: int = 0
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _result(name, residual, points, tol, *, mask=None, kind="upper", mandatory=True, details=None) -> CheckResult:
    """Summarize a per-point residual array; ``mask`` marks points that were evaluated."""
    r = np.asarray(residual, dtype=float).reshape(-1)
    total = r.size
    mask = np.ones(total, bool) if mask is None else np.asarray(mask, bool).reshape(-1)
    skipped = int(total - mask.sum())
    details = dict(details or {})
    if not mask.any():
        return CheckResult(name, float("nan"), float("nan"), None, tol, False, kind, mandatory,
                           "inconclusive", skipped, total, details)
    used = r[mask]
    if kind == "upper":
        idx = int(np.flatnonzero(mask)[np.argmax(used)])
        value = float(np.max(used))
        passed = bool(value <= tol)
    else:
        idx = int(np.flatnonzero(mask)[np.argmin(used)])
        value = float(np.min(used))
        passed = bool(value >= tol)
    status = "pass" if passed else "fail"
    if skipped > SKIP_LIMIT * total:
        status, passed = "inconclusive", False
    return CheckResult(name, value, float(np.mean(used)), points[:, idx].tolist(), tol, passed, kind,
                       mandatory, status, skipped, total, details)


def _not_applicable(name, why) -> CheckResult:
    return CheckResult(name, float("nan"), float("nan"), None, float("nan"), True, mandatory=False,
                       status="n/a", details={"reason": why})


# ---------------------------------------------------------------------------
# sampled geometry, shared by all checks on one (instance, grid)


class _Sample:
    def __init__(self, instance, grid: SampleGrid):
        self.instance = instance
        self.grid = grid
        self.points = grid.points(instance.chart)
        eq = instance.equation
        self.cp = curvature(instance.metric, self.points)
        self.f = instance.potential(self.points)
        self.hess, self.grad2, self.df = hessian_and_gradient(instance.metric, self.f, self.points, self.cp)
        self.psi = eq.psi(self.f)
        self.phi = eq.phi(self.f)
        if not isinstance(self.psi, Jet):
            self.psi = self.f * 0.0 + self.psi
        if not isinstance(self.phi, Jet):
            self.phi = self.f * 0.0 + self.phi
        self.ginv = self.cp.ginv
        self._spectrum = None

    @property
    def spectrum(self):
        if self._spectrum is None:
            self._spectrum = generalized_eigen(self.cp.ricci, self.cp.metric_at_point)
        return self._spectrum

    def ric_apply(self, w):
        """The 1-form Ric(w^#, .) for a 1-form w of shape (3, N)."""
        return np.einsum("il...,l...,l...->i...", self.cp.ricci, self.ginv, w)


_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def sample(instance, grid: SampleGrid | None = None) -> _Sample:
    grid = grid or SampleGrid()
    per = _CACHE.setdefault(instance, {})
    if grid not in per:
        per[grid] = _Sample(instance, grid)
    return per[grid]


def _family(instance):
    return instance.spec


# ---------------------------------------------------------------------------
# checks


def equation_residual(instance, grid: SampleGrid | None = None, tol: float = TOL) -> CheckResult:
    s = sample(instance, grid)
    E = s.hess - s.psi.value * s.cp.ricci - s.phi.value * s.cp.metric_at_point
    raw = sym2_norm(E, s.ginv)
    ref = sym2_norm(s.hess, s.ginv)
    return _result("equation_residual", raw / (1 + ref), s.points, tol,
                   details={"raw_max": float(np.max(raw)), "max_grad_f": float(np.sqrt(np.max(s.grad2)))})


def degeneracy_check(instance, grid: SampleGrid | None = None) -> CheckResult:
    """2+1 Ricci spectrum: |l2 - l3| small, l1 separated, l1-eigenvector orthogonal to d2."""
    s = sample(instance, grid)
    sp = s.spectrum
    split = np.abs(sp.lam2 - sp.lam3)
    gap = np.abs(sp.lam1 - sp.lam2)
    g22 = s.cp.metric_at_point[1, 1]
    ortho = np.sqrt(g22) * np.abs(sp.vectors[..., 1, 0])
    bad_gap = gap < GAP_MIN
    res = _result("degeneracy", split, s.points, DEGENERACY_TOL, mandatory=not isinstance(_family(instance), WarpedConstCurv))
    res.details.update(
        min_gap=float(np.min(gap)),
        gap_tolerance=GAP_MIN,
        max_orthogonality=float(np.max(ortho)),
        orthogonality_tolerance=ORTHOGONALITY_TOL,
        isotropic_points=int(np.sum(sp.isotropic)),
    )
    if np.any(bad_gap) or np.max(ortho) > ORTHOGONALITY_TOL:
        res.passed = False
        res.status = "fail"
    if np.any(sp.isotropic):
        res.status = "isotropic"
        k = int(np.argmax(sp.isotropic))
        res.details["isotropic_point"] = s.points[:, k].tolist()
    return res


@dataclass(frozen=True)
class SolitonT:
    """e^-f (Rc - R/2 g)."""


@dataclass(frozen=True)
class VStaticD:
    """(a1+f)^2 Rc + (|grad f|^2/2 - (a2 + a1 R) f - R f^2/4) g."""


@dataclass(frozen=True)
class Custom:
    a: ScalarField
    b: ScalarField


def _codazzi_ab(instance, choice, s: _Sample) -> tuple[Jet, Jet]:
    eq = instance.equation
    f = s.f
    if isinstance(choice, SolitonT):
        if eq.kind != "soliton":
            raise UsageError("SolitonT requires a soliton instance")
        a = J.exp(-f)
        return a, -(a.truncate(1) * s.cp.scalar_jet) * 0.5
    if isinstance(choice, VStaticD):
        if not eq.constant_scalar:
            raise UsageError("VStaticD requires a V-static or critical point instance")
        g = s.cp.g_jets
        grad2 = None
        for i in range(3):
            term = f.d(i) * f.d(i) / g[i].truncate(2)
            grad2 = term if grad2 is None else grad2 + term
        a = (f + eq.a1) ** 2
        b = grad2 * 0.5 - f * (eq.a2 + eq.a1 * eq.R) - f * f * (eq.R / 4)
        return a, b
    if isinstance(choice, Custom):
        return choice.a(s.points), choice.b(s.points)
    raise UsageError(f"unknown Codazzi choice {choice!r}")


def default_codazzi(instance):
    kind = instance.equation.kind
    if kind == "soliton":
        return SolitonT()
    if kind in ("vstatic", "critical"):
        return VStaticD()
    return None


def codazzi_residual(instance, choice=None, grid: SampleGrid | None = None, tol: float = TOL) -> CheckResult:
    """Antisymmetrized covariant derivative of C = a Rc + b g."""
    s = sample(instance, grid)
    choice = choice or default_codazzi(instance)
    if choice is None:
        raise UsageError("no Codazzi tensor is known for a generic equation; pass Custom(a, b)")
    a, b = _codazzi_ab(instance, choice, s)
    a1, b1 = a.truncate(1), b.truncate(1)
    g = s.cp.g_jets
    C = [[a1 * s.cp.ricci_jets[j][k] + (b1 * g[j].truncate(1) if j == k else 0.0) for k in range(3)]
         for j in range(3)]
    dC = covariant_derivative_sym2(C, s.cp.christoffel)
    raw = rank3_norm(dC - np.swapaxes(dC, 0, 1), s.ginv)
    ref = rank3_norm(dC, s.ginv)
    cval = np.array([[np.broadcast_to(C[j][k].value, s.points.shape[1:]) for k in range(3)] for j in range(3)])
    mu = generalized_eigen(cval, s.cp.metric_at_point)
    res = _result(f"codazzi_residual[{type(choice).__name__}]", raw / (1 + ref), s.points, tol)
    res.details.update(
        raw_max=float(np.max(raw)),
        mu1=mu.lam1.tolist(),
        mu2=(0.5 * (mu.lam2 + mu.lam3)).tolist(),
        mu2_range=[float(np.min(mu.lam2)), float(np.max(mu.lam2))],
    )
    return res


def codazzi_coefficients(instance, choice=None, grid: SampleGrid | None = None, tol: float = TOL) -> CheckResult:
    """Conditions on (a, b) for a Rc + b g to be Codazzi, given the structure equation.

    da / a = (dpsi + df) / psi   and
    db / a = (Ric(dpsi + df) / 2 - R (dpsi + df) / 2 - psi dR / 4) / psi.
    """
    s = sample(instance, grid)
    choice = choice or default_codazzi(instance)
    if choice is None:
        raise UsageError("no Codazzi tensor is known for a generic equation; pass Custom(a, b)")
    a, b = _codazzi_ab(instance, choice, s)
    psi = s.psi.value
    mask = np.abs(psi) >= PSI_SKIP
    safe = np.where(mask, psi, 1.0)
    w = s.psi.grad() + s.df
    dR = s.cp.scalar_grad
    R = s.cp.scalar
    mask &= np.abs(a.value) > 0
    av = np.where(mask, a.value, 1.0)
    lhs1 = a.grad() / av
    rhs1 = w / safe
    lhs2 = b.grad() / av
    rhs2 = (0.5 * s.ric_apply(w) - 0.5 * R * w - 0.25 * safe * dR) / safe
    r1 = oneform_norm(lhs1 - rhs1, s.ginv) / (1 + oneform_norm(rhs1, s.ginv))
    r2 = oneform_norm(lhs2 - rhs2, s.ginv) / (1 + oneform_norm(rhs2, s.ginv))
    res = _result(f"codazzi_coefficients[{type(choice).__name__}]", np.maximum(r1, r2), s.points, tol, mask=mask)
    res.details.update(log_a_condition=float(np.max(r1[mask], initial=0.0)),
                       b_condition=float(np.max(r2[mask], initial=0.0)))
    return res


def pointwise_identities(instance, grid: SampleGrid | None = None, tol: float = TOL) -> tuple[CheckResult, CheckResult]:
    """(i) 2 R dpsi + psi dR + 4 dphi = 2 Ric(grad psi - grad f);  (ii) A_ijk = A_jik."""
    s = sample(instance, grid)
    psi, dpsi, dphi, df = s.psi.value, s.psi.grad(), s.phi.grad(), s.df
    R, dR, ric, g = s.cp.scalar, s.cp.scalar_grad, s.cp.ricci, s.cp.metric_at_point
    lhs_terms = [2 * dpsi * R, psi * dR, 4 * dphi]
    rhs = 2 * s.ric_apply(dpsi - df)
    raw1 = oneform_norm(sum(lhs_terms) - rhs, s.ginv)
    ref1 = sum(oneform_norm(t, s.ginv) for t in lhs_terms) + oneform_norm(rhs, s.ginv)
    first = _result("pointwise_identity_i", raw1 / (1 + ref1), s.points, tol)

    w = dpsi + df
    schouten_like = ric - 0.5 * R * g
    A = (
        np.einsum("jk...,i...->ijk...", schouten_like, w)
        + 0.5 * np.einsum("i...,jk...->ijk...", s.ric_apply(w), g)
        + psi * (s.cp.nabla_ricci - 0.25 * np.einsum("i...,jk...->ijk...", dR, g))
    )
    raw2 = rank3_norm(A - np.swapaxes(A, 0, 1), s.ginv)
    ref2 = rank3_norm(A, s.ginv)
    second = _result("pointwise_identity_ii", raw2 / (1 + ref2), s.points, tol)
    return first, second


def soliton_identities(instance, grid: SampleGrid | None = None, tol: float = TOL) -> tuple[CheckResult, CheckResult]:
    """(i) dR / 2 = Ric(grad f);  (ii) R + |grad f|^2 - 2 lam f is constant."""
    eq = instance.equation
    if eq.kind != "soliton":
        raise UsageError("soliton identities apply to soliton instances only")
    s = sample(instance, grid)
    half = 0.5 * s.cp.scalar_grad
    rf = s.ric_apply(s.df)
    raw = oneform_norm(half - rf, s.ginv)
    ref = oneform_norm(half, s.ginv) + oneform_norm(rf, s.ginv)
    first = _result("soliton_identity_i", raw / (1 + ref), s.points, tol)

    q = s.cp.scalar + s.grad2 - 2 * eq.lam * s.f.value
    mean = float(np.mean(q))
    std = float(np.std(q))
    dev = np.abs(q - mean)
    scaled = std / (1 + abs(mean))
    second = _result("soliton_identity_ii", np.full(q.shape, scaled), s.points, tol,
                     details={"constant": mean, "stddev": std})
    second.worst_point = s.points[:, int(np.argmax(dev))].tolist()
    return first, second


def scalar_constancy(instance, grid: SampleGrid | None = None, tol: float = TOL) -> CheckResult:
    eq = instance.equation
    if not eq.constant_scalar:
        raise UsageError("scalar curvature constancy applies to V-static and critical point instances only")
    s = sample(instance, grid)
    dev = np.abs(s.cp.scalar - eq.R)
    return _result("scalar_constancy", dev / (1 + abs(eq.R)), s.points, tol,
                   details={"target": eq.R, "raw_max": float(np.max(dev))})


def cotton_norm(instance, grid: SampleGrid | None = None, tol: float = TOL) -> CheckResult:
    """Conformal flatness for warped instances; a non-flatness witness for QB instances."""
    s = sample(instance, grid)
    norm = rank3_norm(cotton(instance.metric, s.points, s.cp), s.ginv)
    spec = _family(instance)
    details = {"max_cotton": float(np.max(norm))}
    if isinstance(spec, WarpedConstCurv):
        return _result("cotton_norm", norm, s.points, tol, details=details)
    if isinstance(spec, QBFamily):
        witness = np.full(norm.shape, np.max(norm))
        res = _result("cotton_norm", witness, s.points, COTTON_WITNESS, kind="lower", details=details)
        res.worst_point = s.points[:, int(np.argmax(norm))].tolist()
        return res
    res = _result("cotton_norm", norm, s.points, float("inf"), mandatory=False, details=details)
    res.status = "report"
    return res


def _e3h_residual(s: _Sample, n2: Jet) -> np.ndarray:
    g33 = s.cp.metric_at_point[2, 2]
    return np.abs(n2.partial((0, 0, 1))) / np.sqrt(g33) / (1 + np.abs(n2.value))


def structural_checks(instance, grid: SampleGrid | None = None) -> list[CheckResult]:
    """Chart-level consequences of the 2+1 structure.

    (a) g22/g33 depends on x3 only and d2 f = 0.
    (b) <nabla_E2 E2, E1> = <nabla_E3 E3, E1> (umbilic leaves) and E3 of it vanishes.
    (c) QB: d3 f / (g33 sqrt(g22/g33)) depends on x1 only.
    (d) warped: <nabla_Ei Ei, E1> = -(psi lam_i + phi)/|grad f| with E1 = grad f/|grad f|.
    """
    s = sample(instance, grid)
    spec = _family(instance)
    g = s.cp.g_jets
    out = []
    if isinstance(spec, (QBFamily, SolitonCylinder, PFamily)):
        ratio = g[1] / g[2]
        cross = np.maximum(np.abs(ratio.partial((1, 0, 0))), np.abs(ratio.partial((0, 1, 0)))) / (1 + np.abs(ratio.value))
        d2f = np.abs(s.df[1]) / (1 + np.sqrt(s.grad2))
        out.append(_result("structural_a", np.maximum(cross, d2f), s.points, STRUCT_A_TOL,
                           details={"ratio_cross_variation": float(np.max(cross)), "d2f": float(np.max(d2f))}))
        n2 = frame_normal_term(g, 1, 0)
        n3 = frame_normal_term(g, 2, 0)
        umb = np.abs(n2.value - n3.value) / (1 + np.abs(n2.value))
        e3h = _e3h_residual(s, n2)
        out.append(_result("structural_b", np.maximum(umb, e3h), s.points, STRUCT_B_TOL,
                           details={"umbilic": float(np.max(umb)), "E3H": float(np.max(e3h)),
                                    "H_over_2_range": [float(np.min(-n2.value)), float(np.max(-n2.value))]}))
    if isinstance(spec, QBFamily):
        v = (g[1] / g[2]).truncate(2)
        c = s.f.d(2) / (g[2].truncate(2) * J.sqrt(v))
        var = np.maximum(np.abs(c.partial((0, 1, 0))), np.abs(c.partial((0, 0, 1)))) / (1 + np.abs(c.value))
        out.append(_result("structural_c", var, s.points, TOL))
    if isinstance(spec, WarpedConstCurv):
        gradn = np.sqrt(s.grad2)
        mask = gradn >= GRAD_SKIP
        sign = np.sign(s.df[0])
        worst = np.zeros(s.points.shape[1])
        for i in (1, 2):
            term = sign * frame_normal_term(g, i, 0).value
            lam_i = s.cp.ricci[i, i] / s.cp.metric_at_point[i, i]
            pred = -(s.psi.value * lam_i + s.phi.value) / np.where(mask, gradn, 1.0)
            worst = np.maximum(worst, np.abs(term - pred) / (1 + np.abs(pred)))
        out.append(_result("structural_d", worst, s.points, TOL, mask=mask))
    if not out:
        out.append(_not_applicable("structural", "no chart-level structure is known for this instance"))
    return out


def crosscheck_eigen(instance, grid: SampleGrid | None = None, tol: float = TOL) -> CheckResult:
    s = sample(instance, grid)
    if instance.spec is None or isinstance(instance.spec, WarpedConstCurv):
        return _not_applicable("crosscheck_eigen", "no closed-form eigenvalues for this family")
    ref = closed_form_reference(instance, s.points)
    sp = s.spectrum
    d1 = np.abs(sp.lam1 - ref["lam1"])
    d2 = np.maximum(np.abs(sp.lam2 - ref["lam2"]), np.abs(sp.lam3 - ref["lam2"]))
    r = np.maximum(d1 / (1 + np.abs(ref["lam1"])), d2 / (1 + np.abs(ref["lam2"])))
    return _result("crosscheck_eigen", r, s.points, tol,
                   details={"lam1_abs_max": float(np.max(d1)), "lam2_abs_max": float(np.max(d2)),
                            "max_abs_lam1": float(np.max(np.abs(sp.lam1)))})


# ---------------------------------------------------------------------------
# suites and reports


CHECK_NAMES = (
    "equation_residual",
    "degeneracy",
    "codazzi_residual",
    "codazzi_coefficients",
    "pointwise_identities",
    "soliton_identities",
    "scalar_constancy",
    "cotton_norm",
    "structural_checks",
    "crosscheck_eigen",
)


def _provenance(instance) -> dict:
    from .families import spec_to_dict

    out = {"family": instance.tag, "equation": instance.equation.to_dict(),
           "potential_scale": instance.potential_scale,
           "chart": {"lo": list(instance.chart.lo), "hi": list(instance.chart.hi)},
           "guards": list(instance.guard_notes),
           "drift": {k: sol.drift for k, sol in instance.solutions.items()}}
    if instance.spec is not None:
        out["spec"] = spec_to_dict(instance.spec)
    return out


def _run_one(name: str, instance, grid, tol: float = TOL) -> list[CheckResult]:
    eq = instance.equation
    if name == "equation_residual":
        return [equation_residual(instance, grid, tol)]
    if name == "degeneracy":
        return [degeneracy_check(instance, grid)]
    if name in ("codazzi_residual", "codazzi_coefficients"):
        if default_codazzi(instance) is None:
            return [_not_applicable(name, "generic equation")]
        fn = codazzi_residual if name == "codazzi_residual" else codazzi_coefficients
        return [fn(instance, None, grid, tol)]
    if name == "pointwise_identities":
        return list(pointwise_identities(instance, grid, tol))
    if name == "soliton_identities":
        if eq.kind != "soliton":
            return [_not_applicable(name, "not a soliton")]
        return list(soliton_identities(instance, grid, tol))
    if name == "scalar_constancy":
        if not eq.constant_scalar:
            return [_not_applicable(name, "scalar curvature is not forced constant")]
        return [scalar_constancy(instance, grid, tol)]
    if name == "cotton_norm":
        return [cotton_norm(instance, grid, tol)]
    if name == "structural_checks":
        return structural_checks(instance, grid)
    if name == "crosscheck_eigen":
        return [crosscheck_eigen(instance, grid, tol)]
    raise UsageError(f"unknown check {name!r}; valid: {', '.join(CHECK_NAMES)}")


@dataclass
class VerificationReport:
    provenance: dict
    checks: list[CheckResult]
    grid: tuple[int, int, int]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.mandatory)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name or c.name.split("[")[0] == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "provenance": _clean(self.provenance),
            "grid": list(self.grid),
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def run_suite(instance, checks: str | Sequence[str] = "all", grid: SampleGrid | None = None,
              tol: float = TOL) -> VerificationReport:
    grid = grid or SampleGrid()
    names = CHECK_NAMES if checks == "all" else tuple(checks)
    unknown = [n for n in names if n not in CHECK_NAMES]
    if unknown:
        raise UsageError(f"unknown check(s) {', '.join(unknown)}; valid: {', '.join(CHECK_NAMES)}")
    drift = instance.max_drift
    prov = CheckResult("provenance_drift", drift, drift, None, DRIFT_LIMIT, drift <= DRIFT_LIMIT)
    results = [prov]
    if prov.passed:
        for n in names:
            results += _run_one(n, instance, grid, tol)
    else:
        prov.status = "unverifiable"
    return VerificationReport(_provenance(instance), results, grid.counts)
