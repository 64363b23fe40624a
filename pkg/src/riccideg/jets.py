"""Truncated multivariate Taylor jets in three variables.

A :class:`Jet` stores the Taylor coefficients ``c_alpha = d^alpha u / alpha!``
of a scalar field for every monomial of total degree ``<= order`` (at most 3).
Coefficients are kept in graded-lexicographic order::

    1,
    x1, x2, x3,
    x1^2, x1x2, x1x3, x2^2, x2x3, x3^2,
    x1^3, x1^2x2, x1^2x3, x1x2^2, x1x2x3, x1x3^2, x2^3, x2^2x3, x2x3^2, x3^3

Any trailing array dimensions are batch dimensions, so one jet can hold the
expansions at a whole grid of base points at once.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 3
DIV_THRESHOLD = 1e-300


class JetDomainError(ValueError):
    """A function was evaluated outside its real domain."""


def _fmt_point(point) -> str:
    if point is None:
        return "<unknown point>"
    p = np.asarray(point, dtype=float)
    if p.ndim == 1:
        return "(" + ", ".join(f"{v:.6g}" for v in p) + ")"
    return f"<batch of {p[0].size} points>"


def _where(mask, point) -> str:
    if point is None:
        return "<unknown point>"
    p = np.asarray(point, dtype=float)
    if p.ndim == 1:
        return _fmt_point(p)
    idx = np.argwhere(np.broadcast_to(mask, p.shape[1:]))[0]
    return _fmt_point(p[(slice(None),) + tuple(idx)])


@lru_cache(maxsize=None)
def monomials(order: int) -> tuple[tuple[int, int, int], ...]:
    """Exponent tuples of all monomials of degree <= order, graded-lex."""
    out = []
    for deg in range(order + 1):
        block = [e for e in itertools.product(range(deg, -1, -1), repeat=3) if sum(e) == deg]
        block.sort(reverse=True)
        out.extend(block)
    return tuple(out)


def ncoef(order: int) -> int:
    return math.comb(order + 3, 3)


@lru_cache(maxsize=None)
def _index(order: int) -> dict:
    return {m: i for i, m in enumerate(monomials(order))}


@lru_cache(maxsize=None)
def _product_table(order: int):
    """Matrix mapping pairwise coefficient products onto output slots."""
    mons = monomials(order)
    idx = _index(order)
    ia, ib, ic = [], [], []
    for a, ma in enumerate(mons):
        for b, mb in enumerate(mons):
            s = (ma[0] + mb[0], ma[1] + mb[1], ma[2] + mb[2])
            if sum(s) <= order:
                ia.append(a)
                ib.append(b)
                ic.append(idx[s])
    scatter = np.zeros((len(mons), len(ia)))
    scatter[ic, np.arange(len(ia))] = 1.0
    return np.array(ia), np.array(ib), scatter


@lru_cache(maxsize=None)
def _deriv_table(order: int, axis: int):
    """Source indices and multipliers for d/dx_axis: order -> order-1."""
    src_idx = _index(order)
    src, mult = [], []
    for m in monomials(order - 1):
        up = list(m)
        up[axis] += 1
        src.append(src_idx[tuple(up)])
        mult.append(up[axis])
    return np.array(src), np.array(mult, dtype=float)


def _factorial_weight(alpha) -> float:
    return float(math.prod(math.factorial(a) for a in alpha))


class Jet:
    """Truncated Taylor expansion of a scalar field around a base point."""

    __slots__ = ("coeffs", "order", "point")
    __array_ufunc__ = None

    def __init__(self, coeffs, order: int | None = None, point=None):
        coeffs = np.asarray(coeffs, dtype=float)
        if order is None:
            for o in range(MAX_ORDER + 1):
                if ncoef(o) == coeffs.shape[0]:
                    order = o
                    break
            else:
                raise ValueError(f"cannot infer jet order from {coeffs.shape[0]} coefficients")
        if coeffs.shape[0] != ncoef(order):
            raise ValueError(f"order {order} jet needs {ncoef(order)} coefficients, got {coeffs.shape[0]}")
        self.coeffs = coeffs
        self.order = order
        self.point = point

    # construction -------------------------------------------------------

    @classmethod
    def const(cls, value, order: int = MAX_ORDER, point=None) -> Jet:
        value = np.asarray(value, dtype=float)
        c = np.zeros((ncoef(order),) + value.shape)
        c[0] = value
        return cls(c, order, point)

    @classmethod
    def coordinate(cls, axis: int, point, order: int = MAX_ORDER) -> Jet:
        point = np.asarray(point, dtype=float)
        c = np.zeros((ncoef(order),) + point.shape[1:])
        c[0] = point[axis]
        if order >= 1:
            c[1 + axis] = 1.0
        return cls(c, order, point)

    @classmethod
    def coordinates(cls, point, order: int = MAX_ORDER) -> tuple[Jet, Jet, Jet]:
        point = np.asarray(point, dtype=float)
        return tuple(cls.coordinate(i, point, order) for i in range(3))

    # accessors ----------------------------------------------------------

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def coeff(self, alpha) -> np.ndarray:
        return self.coeffs[_index(self.order)[tuple(alpha)]]

    def partial(self, alpha) -> np.ndarray:
        """Partial derivative d^alpha at the base point (|alpha| <= order)."""
        alpha = tuple(alpha)
        if sum(alpha) > self.order:
            raise ValueError(f"derivative {alpha} exceeds jet order {self.order}")
        return self.coeff(alpha) * _factorial_weight(alpha)

    def grad(self) -> np.ndarray:
        """First partials, shape (3, *batch)."""
        return self.coeffs[1:4].copy()

    def hessian(self) -> np.ndarray:
        """Second partials as a full symmetric array, shape (3, 3, *batch)."""
        h = np.empty((3, 3) + self.batch_shape)
        for i in range(3):
            for j in range(3):
                a = [0, 0, 0]
                a[i] += 1
                a[j] += 1
                h[i, j] = self.partial(a)
        return h

    def truncate(self, order: int) -> Jet:
        if order >= self.order:
            return self
        return Jet(self.coeffs[: ncoef(order)], order, self.point)

    def d(self, axis: int) -> Jet:
        """Jet of the partial derivative along ``axis``; loses one order."""
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        src, mult = _deriv_table(self.order, axis)
        shape = (len(mult),) + (1,) * len(self.batch_shape)
        return Jet(self.coeffs[src] * mult.reshape(shape), self.order - 1, self.point)

    # arithmetic ---------------------------------------------------------

    def _coerce(self, other) -> Jet:
        if isinstance(other, Jet):
            if (
                self.point is not None
                and other.point is not None
                and self.point is not other.point
                and not np.array_equal(self.point, other.point)
            ):
                raise ValueError("jet operands have different base points")
            return other
        return Jet.const(np.broadcast_to(other, self.batch_shape), self.order, self.point)

    def _pair(self, other):
        other = self._coerce(other)
        order = min(self.order, other.order)
        return self.truncate(order), other.truncate(order), order

    def __add__(self, other):
        a, b, order = self._pair(other)
        return Jet(a.coeffs + b.coeffs, order, a.point if a.point is not None else b.point)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.coeffs, self.order, self.point)

    def __sub__(self, other):
        a, b, order = self._pair(other)
        return Jet(a.coeffs - b.coeffs, order, a.point if a.point is not None else b.point)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs * np.asarray(other, dtype=float), self.order, self.point)
        a, b, order = self._pair(other)
        ia, ib, scatter = _product_table(order)
        prod = a.coeffs[ia] * b.coeffs[ib]
        out = np.tensordot(scatter, prod, axes=1)
        return Jet(out, order, a.point if a.point is not None else b.point)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.coeffs / np.asarray(other, dtype=float), self.order, self.point)
        return self * reciprocal(self._coerce(other))

    def __rtruediv__(self, other):
        return reciprocal(self) * other

    def __pow__(self, r):
        if isinstance(r, int) and r >= 0:
            out = Jet.const(np.ones(self.batch_shape), self.order, self.point)
            for _ in range(r):
                out = out * self
            return out
        return power(self, r)

    def __repr__(self):
        return f"Jet(order={self.order}, value={self.value!r})"


def lift(kind: str, operands: Sequence = (), *, value=None, axis=None, point=None,
         order: int = MAX_ORDER) -> Jet:
    """Uniform entry point for constants, coordinates and ring operations."""
    if kind == "const":
        return Jet.const(value, order, point)
    if kind == "coordinate":
        return Jet.coordinate(axis, point, order)
    if kind == "neg":
        (a,) = operands
        return -a
    a, b = operands
    if kind == "add":
        return a + b
    if kind == "sub":
        return a - b
    if kind == "mul":
        return a * b
    if kind == "div":
        return a / b
    raise ValueError(f"unknown jet operation {kind!r}")


def compose_univariate(outer_derivs, inner: Jet) -> Jet:
    """Compose a univariate function with a jet (Faa di Bruno through order 3).

    ``outer_derivs`` holds ``[u, u', u'', u''']`` of the outer function,
    evaluated at ``inner.value``.
    """
    outer = [np.asarray(u, dtype=float) for u in outer_derivs]
    if len(outer) < inner.order + 1:
        raise ValueError(f"need {inner.order + 1} outer derivatives, got {len(outer)}")
    delta = Jet(inner.coeffs.copy(), inner.order, inner.point)
    delta.coeffs[0] = 0.0
    result = Jet.const(np.broadcast_to(outer[0], inner.batch_shape), inner.order, inner.point)
    power_ = None
    for n in range(1, inner.order + 1):
        power_ = delta if power_ is None else power_ * delta
        result = result + power_ * (outer[n] / math.factorial(n))
    return result


def reciprocal(x: Jet) -> Jet:
    v = x.value
    bad = np.abs(v) <= DIV_THRESHOLD
    if np.any(bad):
        raise JetDomainError(f"division by a zero-valued jet at {_where(bad, x.point)}")
    inv = 1.0 / v
    return compose_univariate([inv, -inv**2, 2 * inv**3, -6 * inv**4], x)


def exp(x: Jet) -> Jet:
    e = np.exp(x.value)
    return compose_univariate([e, e, e, e], x)


def log(x: Jet) -> Jet:
    v = x.value
    bad = v <= 0
    if np.any(bad):
        raise JetDomainError(f"log of non-positive value at {_where(bad, x.point)}")
    return compose_univariate([np.log(v), 1 / v, -1 / v**2, 2 / v**3], x)


def sin(x: Jet) -> Jet:
    s, c = np.sin(x.value), np.cos(x.value)
    return compose_univariate([s, c, -s, -c], x)


def cos(x: Jet) -> Jet:
    s, c = np.sin(x.value), np.cos(x.value)
    return compose_univariate([c, -s, -c, s], x)


def sinh(x: Jet) -> Jet:
    s, c = np.sinh(x.value), np.cosh(x.value)
    return compose_univariate([s, c, s, c], x)


def cosh(x: Jet) -> Jet:
    s, c = np.sinh(x.value), np.cosh(x.value)
    return compose_univariate([c, s, c, s], x)


def tanh(x: Jet) -> Jet:
    t = np.tanh(x.value)
    s2 = 1 - t**2
    return compose_univariate([t, s2, -2 * t * s2, s2 * (6 * t**2 - 2)], x)


def sqrt(x: Jet) -> Jet:
    v = x.value
    bad = v <= 0
    if np.any(bad):
        raise JetDomainError(f"sqrt of non-positive value at {_where(bad, x.point)}")
    r = np.sqrt(v)
    return compose_univariate([r, 0.5 / r, -0.25 / (r * v), 0.375 / (r * v * v)], x)


def power(x: Jet, r: float) -> Jet:
    """x**r for real r; needs a positive base unless r is a non-negative integer."""
    if float(r).is_integer() and r >= 0:
        return x ** int(r)
    v = x.value
    bad = v <= 0
    if np.any(bad):
        raise JetDomainError(f"pow({r}) of non-positive value at {_where(bad, x.point)}")
    return compose_univariate(
        [v**r, r * v ** (r - 1), r * (r - 1) * v ** (r - 2), r * (r - 1) * (r - 2) * v ** (r - 3)], x
    )


ELEMENTARY: dict[str, Callable[[Jet], Jet]] = {
    "exp": exp, "log": log, "sin": sin, "cos": cos, "sinh": sinh, "cosh": cosh,
    "tanh": tanh, "sqrt": sqrt,
}


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True)
class Box:
    """Axis-aligned coordinate box with per-axis margins."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    margin: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def contains(self, point, pad=0.0) -> bool:
        p = np.asarray(point, dtype=float)
        shape = (3,) + (1,) * (p.ndim - 1)
        lo = np.reshape(self.lo, shape) + pad
        hi = np.reshape(self.hi, shape) - pad
        return bool(np.all(p >= lo) and np.all(p <= hi))

    @property
    def lengths(self) -> tuple[float, float, float]:
        return tuple(h - l for l, h in zip(self.lo, self.hi))


@dataclass(frozen=True)
class ScalarField:
    """A scalar field given as a function of the three coordinate jets."""

    fn: Callable[[Jet, Jet, Jet], Jet]
    domain: Box | None = None
    name: str = ""

    def __call__(self, point, order: int = MAX_ORDER) -> Jet:
        x1, x2, x3 = Jet.coordinates(point, order)
        out = self.fn(x1, x2, x3)
        if not isinstance(out, Jet):
            out = Jet.const(np.broadcast_to(out, x1.batch_shape), order, x1.point)
        out.point = x1.point
        return out

    def value(self, point) -> np.ndarray:
        return self(point, order=0).value


_PAIRS = [(i, j) for i in range(3) for j in range(i, 3)]


def _stencil() -> np.ndarray:
    offs = [np.zeros(3)]
    e = np.eye(3)
    for i in range(3):
        offs += [e[i], -e[i]]
    for i, j in _PAIRS:
        if i != j:
            offs += [e[i] + e[j], e[i] - e[j], -e[i] + e[j], -e[i] - e[j]]
    return np.array(offs)


STENCIL = _stencil()  # (19, 3) unit offsets


def finite_difference_oracle(field: ScalarField, point, step: float):
    """Central-difference first and second partials of ``field``.

    Returns ``(grad, hess)`` where ``grad`` has 3 entries and ``hess`` has
    the 6 entries (11, 12, 13, 22, 23, 33), each with the batch shape of
    ``point``. Only field values are used; the whole stencil is evaluated
    in one batched call.
    """
    p = np.asarray(point, dtype=float)
    if field.domain is not None and not field.domain.contains(p, pad=step):
        raise JetDomainError(f"finite-difference stencil leaves the domain at {_fmt_point(p)}")
    h = step
    offs = (STENCIL * h).T.reshape((3, len(STENCIL)) + (1,) * (p.ndim - 1))
    v = field.value(p[:, None] + offs)
    f0 = v[0]
    grad = np.array([(v[1 + 2 * i] - v[2 + 2 * i]) / (2 * h) for i in range(3)])
    hess = []
    k = 7
    for i, j in _PAIRS:
        if i == j:
            hess.append((v[1 + 2 * i] - 2 * f0 + v[2 + 2 * i]) / h**2)
        else:
            hess.append((v[k] - v[k + 1] - v[k + 2] + v[k + 3]) / (4 * h * h))
            k += 4
    return grad, np.array(hess)


def jet_first_second(field: ScalarField, point):
    """Jet partials in the same layout as :func:`finite_difference_oracle`."""
    j = field(np.asarray(point, dtype=float))
    grad = np.array([j.partial(a) for a in ((1, 0, 0), (0, 1, 0), (0, 0, 1))])
    hess = []
    for i, k in _PAIRS:
        a = [0, 0, 0]
        a[i] += 1
        a[k] += 1
        hess.append(j.partial(a))
    return grad, np.array(hess)
