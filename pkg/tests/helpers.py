"""Shared instances and closed-form fields for the tests."""

import math

import numpy as np

from riccideg import jets as J
from riccideg.families import (
    EquationSpec,
    MetricInstance,
    PFamily,
    QBFamily,
    SolitonCylinder,
    WarpedConstCurv,
    build,
)
from riccideg.jets import Box, ScalarField
from riccideg.tensors import MetricField

QB_VSTATIC = dict(kind="vstatic", m=1.0, l=0.0, alpha=0.0, k_const=-1.0, R=-6.0, kappa=1.0, q0=1.0, b0=1.0, c0=1.0)
QB_CRITICAL = dict(QB_VSTATIC, kind="critical", kappa=0.0)
P_CPM = dict(beta=-1.0, gamma=1.0, p0=2.0, c10=1.0, c10p=0.0)


def qb_vstatic():
    return build(QBFamily(**QB_VSTATIC))


def qb_critical():
    return build(QBFamily(**QB_CRITICAL))


def p_cpm():
    return build(PFamily(**P_CPM))


def cigar():
    return build(SolitonCylinder.cigar())


def sphere_static():
    """Round unit sphere in polar form: h = sin s, f = cos s, V-static with kappa = 0, R = 6."""
    s0 = 1.0
    spec = WarpedConstCurv(EquationSpec.vstatic(0.0, 6.0), 1.0, math.sin(s0), math.cos(s0), math.cos(s0),
                           -math.sin(s0), s_base=s0, s_interval=(0.3, 1.3))
    return build(spec)


def gaussian_warped(lam=1.0):
    """Flat space in polar form, h = s, with the Gaussian soliton potential lam s^2 / 2."""
    s0 = 1.0
    spec = WarpedConstCurv(EquationSpec.soliton(lam), 1.0, s0, 1.0, lam * s0**2 / 2, lam * s0,
                           s_base=s0, s_interval=(0.5, 1.5))
    return build(spec)


def field(fn, box=None, name=""):
    return ScalarField(fn, box, name)


ONE = field(lambda x1, x2, x3: x1 * 0.0 + 1.0)


def flat_metric(box=None):
    return MetricField(ONE, ONE, ONE, box)


def sphere_metric(box=None):
    """Unit 3-sphere: dx1^2 + sin^2 x1 dx2^2 + sin^2 x1 sin^2 x2 dx3^2."""
    return MetricField(
        ONE,
        field(lambda x1, x2, x3: J.sin(x1) ** 2),
        field(lambda x1, x2, x3: (J.sin(x1) * J.sin(x2)) ** 2),
        box,
    )


def hyperbolic_metric(box=None):
    """Upper-half-space style chart dx1^2 + e^{2 x1}(dx2^2 + dx3^2)."""
    e2 = field(lambda x1, x2, x3: J.exp(x1 * 2.0))
    return MetricField(ONE, e2, e2, box)


UNIT_BOX = Box((-1.0, -1.0, -1.0), (1.0, 1.0, 1.0), (0.1, 0.1, 0.1))


def flat_gaussian(lam=1.0, box=UNIT_BOX):
    pot = field(lambda x1, x2, x3: (x1 * x1 + x2 * x2 + x3 * x3) * (lam / 2), box, "f")
    return MetricInstance.analytic(flat_metric(box), pot, EquationSpec.soliton(lam), box)


def all_family_instances():
    return {
        "qb-vstatic": qb_vstatic(),
        "qb-cpm": qb_critical(),
        "p-cpm": p_cpm(),
        "soliton-cylinder": cigar(),
        "warped-sphere": sphere_static(),
        "warped-gaussian": gaussian_warped(),
    }


def grid_points(box, n=4):
    axes = [np.linspace(lo + m, hi - m, n) for lo, hi, m in zip(box.lo, box.hi, box.margin)]
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1)
