"""Levi-Civita connection and curvature of a diagonal 3-metric from jets.

Conventions
-----------
* ``christoffel[k, i, j]`` is Gamma^k_ij.
* ``riemann[i, j, k, l] = <R(d_i, d_j) d_k, d_l>`` with
  ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z``, so
  ``riemann[i, j, j, i]`` is a sectional curvature times area and the unit
  round sphere has Ricci = 2g, R = 6.
* ``ricci[j, k] = R^i_{ijk}``.
* Rank-3 arrays ``T[i, j, k]`` hold ``nabla_i T_jk`` for covariant derivatives.

Every array has trailing batch dimensions matching the sampled points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .jets import Box, Jet, ScalarField, sqrt

POSITIVITY_MARGIN = 1e-10
ISOTROPIC_GAP = 1e-4


class DegenerateMetricError(ValueError):
    pass


@dataclass(frozen=True)
class MetricField:
    """Diagonal metric g11 dx1^2 + g22 dx2^2 + g33 dx3^2."""

    g11: ScalarField
    g22: ScalarField
    g33: ScalarField
    domain: Box | None = None

    def components(self, point) -> list[Jet]:
        point = np.asarray(point, dtype=float)
        comps = [c(point) for c in (self.g11, self.g22, self.g33)]
        for n, c in enumerate(comps, 1):
            bad = c.value <= POSITIVITY_MARGIN
            if np.any(bad):
                where = point if point.ndim == 1 else point[(slice(None),) + tuple(np.argwhere(bad)[0])]
                raise DegenerateMetricError(
                    f"g{n}{n} = {float(np.min(c.value)):.3g} is not positive at {tuple(np.round(where, 6))}"
                )
        return comps


def christoffel_jets(g: Sequence[Jet]) -> list[list[list[Jet | None]]]:
    """Gamma^k_ij as order-2 jets (None where identically zero)."""
    ginv = [1.0 / gi for gi in g]
    dg = [[g[i].d(k) for k in range(3)] for i in range(3)]  # dg[i][k] = d_k g_ii
    gam: list = [[[None] * 3 for _ in range(3)] for _ in range(3)]
    for k in range(3):
        half = ginv[k].truncate(2) * 0.5
        for i in range(3):
            for j in range(3):
                if i == j == k:
                    gam[k][i][j] = half * dg[k][k]
                elif k == i:
                    gam[k][i][j] = half * dg[k][j]
                elif k == j:
                    gam[k][i][j] = half * dg[k][i]
                elif i == j:
                    gam[k][i][j] = -(half * dg[i][k])
    return gam


def christoffel(metric: MetricField, point) -> np.ndarray:
    """Christoffel symbols ``Gamma[k, i, j]`` at ``point``."""
    g = metric.components(point)
    return _gamma_array(christoffel_jets(g), g[0].batch_shape)


def _gamma_array(gam, batch) -> np.ndarray:
    out = np.zeros((3, 3, 3) + batch)
    for k in range(3):
        for i in range(3):
            for j in range(3):
                if gam[k][i][j] is not None:
                    out[k, i, j] = gam[k][i][j].value
    return out


def _gamma_deriv_array(gam, batch) -> np.ndarray:
    """dG[m, k, i, j] = d_m Gamma^k_ij."""
    out = np.zeros((3, 3, 3, 3) + batch)
    for k in range(3):
        for i in range(3):
            for j in range(3):
                if gam[k][i][j] is not None:
                    out[:, k, i, j] = gam[k][i][j].grad()
    return out


def _ricci_jets(gam) -> list[list[Jet]]:
    g1 = [[[x.truncate(1) if x is not None else None for x in row] for row in blk] for blk in gam]
    ric = [[None] * 3 for _ in range(3)]
    for j in range(3):
        for k in range(j, 3):
            acc = None

            def add(term):
                nonlocal acc
                acc = term if acc is None else acc + term

            for i in range(3):
                if gam[i][j][k] is not None:
                    add(gam[i][j][k].d(i))
                if gam[i][i][k] is not None:
                    add(-gam[i][i][k].d(j))
                for m in range(3):
                    if g1[i][i][m] is not None and g1[m][j][k] is not None:
                        add(g1[i][i][m] * g1[m][j][k])
                    if g1[i][j][m] is not None and g1[m][i][k] is not None:
                        add(-(g1[i][j][m] * g1[m][i][k]))
            ric[j][k] = ric[k][j] = acc
    return ric


def covariant_derivative_sym2(T: Sequence[Sequence[Jet]], gamma: np.ndarray) -> np.ndarray:
    """nabla_i T_jk = d_i T_jk - Gamma^l_ij T_lk - Gamma^l_ik T_jl.

    ``T`` is a symmetric 3x3 nested list of jets of order >= 1; ``gamma`` the
    Christoffel values. Returns ``out[i, j, k]``.
    """
    batch = gamma.shape[3:]
    tv = np.array([[np.broadcast_to(T[j][k].value, batch) for k in range(3)] for j in range(3)])
    dT = np.array([[T[j][k].grad() for k in range(3)] for j in range(3)])  # [j, k, i]
    dT = np.broadcast_to(dT, (3, 3, 3) + batch)
    out = np.moveaxis(dT, 2, 0).copy()
    out -= np.einsum("lij...,lk...->ijk...", gamma, tv)
    out -= np.einsum("lik...,jl...->ijk...", gamma, tv)
    return out


@dataclass(frozen=True, eq=False)
class CurvaturePoint:
    """Connection and curvature data at a (batch of) point(s)."""

    point: np.ndarray
    metric_at_point: np.ndarray  # (3, 3, *b)
    christoffel: np.ndarray  # (3, 3, 3, *b)
    riemann: np.ndarray  # (3, 3, 3, 3, *b)
    ricci: np.ndarray  # (3, 3, *b)
    scalar: np.ndarray  # (*b)
    scalar_grad: np.ndarray  # (3, *b)
    nabla_ricci: np.ndarray  # (3, 3, 3, *b)
    g_jets: list = field(repr=False, default_factory=list)
    gamma_jets: list = field(repr=False, default_factory=list)
    ricci_jets: list = field(repr=False, default_factory=list)
    scalar_jet: Jet | None = field(repr=False, default=None)

    @property
    def ginv(self) -> np.ndarray:
        """Diagonal of the inverse metric, shape (3, *b)."""
        return 1.0 / np.array([self.metric_at_point[i, i] for i in range(3)])


def curvature(metric: MetricField, point) -> CurvaturePoint:
    point = np.asarray(point, dtype=float)
    g = metric.components(point)
    batch = g[0].batch_shape
    gam = christoffel_jets(g)
    gamma = _gamma_array(gam, batch)
    dgam = _gamma_deriv_array(gam, batch)
    # R^l_ijk = d_i G^l_jk - d_j G^l_ik + G^l_im G^m_jk - G^l_jm G^m_ik
    rup = (
        np.einsum("iljk...->lijk...", dgam)
        - np.einsum("jlik...->lijk...", dgam)
        + np.einsum("lim...,mjk...->lijk...", gamma, gamma)
        - np.einsum("ljm...,mik...->lijk...", gamma, gamma)
    )
    gdiag = np.array([np.broadcast_to(gi.value, batch) for gi in g])
    riemann = np.einsum("lijk...,l...->ijkl...", rup, gdiag)
    ric_j = _ricci_jets(gam)
    ricci = np.array([[np.broadcast_to(ric_j[a][b].value, batch) for b in range(3)] for a in range(3)])
    scalar_jet = None
    for i in range(3):
        term = ric_j[i][i] / g[i].truncate(1)
        scalar_jet = term if scalar_jet is None else scalar_jet + term
    metric_at_point = np.zeros((3, 3) + batch)
    for i in range(3):
        metric_at_point[i, i] = gdiag[i]
    return CurvaturePoint(
        point=point,
        metric_at_point=metric_at_point,
        christoffel=gamma,
        riemann=riemann,
        ricci=ricci,
        scalar=np.broadcast_to(scalar_jet.value, batch).copy(),
        scalar_grad=scalar_jet.grad(),
        nabla_ricci=covariant_derivative_sym2(ric_j, gamma),
        g_jets=g,
        gamma_jets=gam,
        ricci_jets=ric_j,
        scalar_jet=scalar_jet,
    )


def metric_sym2_jets(cp: CurvaturePoint) -> list[list[Jet]]:
    """The metric itself as a symmetric nested list of jets."""
    g = cp.g_jets
    zero = g[0] * 0.0
    return [[g[i] if i == j else zero for j in range(3)] for i in range(3)]


def cotton(metric: MetricField, point, cp: CurvaturePoint | None = None) -> np.ndarray:
    """C_ijk = nabla_i P_jk - nabla_j P_ik with P = Ric - (R/4) g."""
    cp = cp or curvature(metric, point)
    gj = metric_sym2_jets(cp)
    quarter_r = cp.scalar_jet * 0.25
    P = [[cp.ricci_jets[j][k] - quarter_r * gj[j][k].truncate(1) for k in range(3)] for j in range(3)]
    dP = covariant_derivative_sym2(P, cp.christoffel)
    return dP - np.swapaxes(dP, 0, 1)


def hessian_and_gradient(metric: MetricField, f: ScalarField | Jet, point, cp: CurvaturePoint | None = None):
    """Return (hess[i, j], |grad f|^2, d f) with hess = d_i d_j f - Gamma^k_ij d_k f."""
    cp = cp or curvature(metric, point)
    fj = f if isinstance(f, Jet) else f(np.asarray(point, dtype=float))
    df = fj.grad()
    hess = fj.hessian() - np.einsum("kij...,k...->ij...", cp.christoffel, df)
    norm2 = np.sum(cp.ginv * df**2, axis=0)
    return hess, norm2, df


# ---------------------------------------------------------------------------
# norms


def sym2_norm(T: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("i...,j...,ij...->...", ginv, ginv, T**2))


def rank3_norm(T: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("i...,j...,k...,ijk...->...", ginv, ginv, ginv, T**2))


def oneform_norm(w: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(ginv * w**2, axis=0))


# ---------------------------------------------------------------------------
# eigenvalues relative to g


@dataclass(frozen=True, eq=False)
class RicciSpectrum:
    """Eigen-decomposition of a symmetric 2-tensor relative to g.

    ``lam1`` is the simple eigenvalue of a 2+1 split and ``lam2 <= lam3``
    the remaining pair; ``vectors[..., :, 0]`` is the lam1 eigenvector.
    Eigenvectors are g-orthonormal. ``isotropic`` marks points where every
    pairwise gap is below ``ISOTROPIC_GAP``.
    """

    lam1: np.ndarray
    lam2: np.ndarray
    lam3: np.ndarray
    vectors: np.ndarray  # (*b, 3, 3), columns are eigenvectors
    isotropic: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return np.abs(self.lam1 - 0.5 * (self.lam2 + self.lam3))


def generalized_eigen(sym: np.ndarray, metric_at_point: np.ndarray) -> RicciSpectrum:
    """Solve S v = lam g v by congruence with g^(-1/2) and a symmetric eigensolver."""
    A = np.moveaxis(np.moveaxis(np.asarray(sym, dtype=float), 0, -1), 0, -1)
    G = np.moveaxis(np.moveaxis(np.asarray(metric_at_point, dtype=float), 0, -1), 0, -1)
    gw, gv = np.linalg.eigh(G)
    if np.any(gw <= 0):
        raise DegenerateMetricError("metric is not positive definite")
    s = (gv / np.sqrt(gw)[..., None, :]) @ np.swapaxes(gv, -1, -2)  # g^(-1/2)
    w, v = np.linalg.eigh(s @ A @ s)
    vecs = s @ v
    d01 = w[..., 1] - w[..., 0]
    d12 = w[..., 2] - w[..., 1]
    top_simple = d01 < d12  # pair is (0, 1), simple is 2
    order = np.where(top_simple[..., None], [2, 0, 1], [0, 1, 2])
    lam = np.take_along_axis(w, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    isotropic = np.maximum(d01, d12) < ISOTROPIC_GAP
    return RicciSpectrum(lam[..., 0], lam[..., 1], lam[..., 2], vecs, isotropic)


# ---------------------------------------------------------------------------
# frame quantities for E_i = d_i / sqrt(g_ii)


def frame_normal_term(g: Sequence[Jet], i: int, normal: int = 0) -> Jet:
    """<nabla_{E_i} E_i, E_normal> for i != normal, as a jet of order 2."""
    gi, gn = g[i], g[normal]
    return -(gi.d(normal) / (gi.truncate(2) * sqrt(gn.truncate(2)) * 2.0))
