"""Midsurface charts and pointwise surface geometry.

A chart maps the flat parameter domain into 3-space with closed-form first
and second derivatives.  From those derivatives :func:`frame` evaluates every
geometric coefficient the shell forms need at a point: covariant and
contravariant metric, area factor, curvature tensor (covariant, mixed, and
third fundamental form) and Christoffel symbols.

All functions here are pure and operate on a single point; element and edge
loops call them at quadrature points.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(Exception):
    """Raised when a chart is degenerate at an evaluation point."""


class Chart:
    """Base class for midsurface parameterizations.

    Subclasses provide the map ``point`` and its exact first partials
    ``d1``, ``d2`` and second partials ``d11``, ``d12``, ``d22``, each
    taking parameter coordinates ``(x1, x2)`` and returning a length-3
    array.  Mixed partials are symmetric, so ``d12`` serves for both
    orders.
    """

    kind = "abstract"

    def point(self, x1, x2):
        raise NotImplementedError

    def d1(self, x1, x2):
        raise NotImplementedError

    def d2(self, x1, x2):
        raise NotImplementedError

    def d11(self, x1, x2):
        raise NotImplementedError

    def d12(self, x1, x2):
        raise NotImplementedError

    def d22(self, x1, x2):
        raise NotImplementedError


class FlatPlate(Chart):
    """phi = (x1, x2, 0): identity metric, zero curvature."""

    kind = "flat-plate"

    def point(self, x1, x2):
        return np.array([x1, x2, 0.0])

    def d1(self, x1, x2):
        return np.array([1.0, 0.0, 0.0])

    def d2(self, x1, x2):
        return np.array([0.0, 1.0, 0.0])

    def d11(self, x1, x2):
        return np.zeros(3)

    def d12(self, x1, x2):
        return np.zeros(3)

    def d22(self, x1, x2):
        return np.zeros(3)


class Cylinder(Chart):
    """Arc-length parameterized circular cylinder of given radius.

    phi = (R cos(x1/R), R sin(x1/R), x2).  The metric is the identity and
    the only nonzero curvature component is b_11 = -1/R, so all geometric
    coefficients are constant: the constant-coefficient case for which the
    method is accuracy-uniform in the thickness.
    """

    kind = "cylinder"

    def __init__(self, radius=1.0):
        if radius <= 0:
            raise ValueError("cylinder radius must be positive")
        self.radius = float(radius)

    def point(self, x1, x2):
        r = self.radius
        return np.array([r * np.cos(x1 / r), r * np.sin(x1 / r), x2])

    def d1(self, x1, x2):
        r = self.radius
        return np.array([-np.sin(x1 / r), np.cos(x1 / r), 0.0])

    def d2(self, x1, x2):
        return np.array([0.0, 0.0, 1.0])

    def d11(self, x1, x2):
        r = self.radius
        return np.array([-np.cos(x1 / r) / r, -np.sin(x1 / r) / r, 0.0])

    def d12(self, x1, x2):
        return np.zeros(3)

    def d22(self, x1, x2):
        return np.zeros(3)


class HyperbolicParaboloid(Chart):
    """Graph chart phi = (x1, x2, scale * x1 * x2)."""

    kind = "hyperbolic-paraboloid"

    def __init__(self, scale=1.0):
        self.scale = float(scale)

    def point(self, x1, x2):
        return np.array([x1, x2, self.scale * x1 * x2])

    def d1(self, x1, x2):
        return np.array([1.0, 0.0, self.scale * x2])

    def d2(self, x1, x2):
        return np.array([0.0, 1.0, self.scale * x1])

    def d11(self, x1, x2):
        return np.zeros(3)

    def d12(self, x1, x2):
        return np.array([0.0, 0.0, self.scale])

    def d22(self, x1, x2):
        return np.zeros(3)


class PolynomialGraph(Chart):
    """Graph of a bivariate polynomial, phi = (x1, x2, p(x1, x2)).

    Parameters
    ----------
    coeffs : dict
        Maps exponent pairs ``(i, j)`` to the coefficient of ``x1**i * x2**j``.
    """

    kind = "polynomial-graph"

    def __init__(self, coeffs):
        self.coeffs = {(int(i), int(j)): float(c) for (i, j), c in coeffs.items()}

    def _p(self, x1, x2, di, dj):
        total = 0.0
        for (i, j), c in self.coeffs.items():
            if i < di or j < dj:
                continue
            fac = c
            for m in range(di):
                fac *= i - m
            for m in range(dj):
                fac *= j - m
            total += fac * x1 ** (i - di) * x2 ** (j - dj)
        return total

    def point(self, x1, x2):
        return np.array([x1, x2, self._p(x1, x2, 0, 0)])

    def d1(self, x1, x2):
        return np.array([1.0, 0.0, self._p(x1, x2, 1, 0)])

    def d2(self, x1, x2):
        return np.array([0.0, 1.0, self._p(x1, x2, 0, 1)])

    def d11(self, x1, x2):
        return np.array([0.0, 0.0, self._p(x1, x2, 2, 0)])

    def d12(self, x1, x2):
        return np.array([0.0, 0.0, self._p(x1, x2, 1, 1)])

    def d22(self, x1, x2):
        return np.array([0.0, 0.0, self._p(x1, x2, 0, 2)])


_CHART_KINDS = {
    "flat-plate": FlatPlate,
    "cylinder": Cylinder,
    "hyperbolic-paraboloid": HyperbolicParaboloid,
    "polynomial-graph": PolynomialGraph,
}


def make_chart(kind, **params):
    """Instantiate a chart from the catalog by name plus numeric parameters."""
    try:
        cls = _CHART_KINDS[kind]
    except KeyError:
        raise GeometryError(
            f"unknown chart kind {kind!r}; available: {sorted(_CHART_KINDS)}"
        ) from None
    return cls(**params)


@dataclass(frozen=True)
class GeomFrame:
    """All pointwise geometric coefficients of the midsurface.

    Attributes
    ----------
    a_cov : (2, 2) ndarray
        Covariant metric a_{ab}.
    a_con : (2, 2) ndarray
        Contravariant metric a^{ab} (inverse of ``a_cov``).
    sqrt_a : float
        Area factor sqrt(det a) > 0.
    b_cov : (2, 2) ndarray
        Covariant curvature tensor b_{ab}.
    b_mixed : (2, 2) ndarray
        Mixed curvature ``b_mixed[a, b]`` = b^a_b = a^{ag} b_{gb}.
    c_cov : (2, 2) ndarray
        Third fundamental form c_{ab} = b_a^g b_{gb}.
    christoffel : (2, 2, 2) ndarray
        ``christoffel[g, a, b]`` = Gamma^g_{ab}, symmetric in (a, b).
    basis_cov : (3, 3) ndarray
        Rows a_1, a_2, a_3 (covariant basis, a_3 the unit normal).
    basis_con : (3, 3) ndarray
        Rows a^1, a^2, a^3 (contravariant basis).
    """

    a_cov: np.ndarray
    a_con: np.ndarray
    sqrt_a: float
    b_cov: np.ndarray
    b_mixed: np.ndarray
    c_cov: np.ndarray
    christoffel: np.ndarray
    basis_cov: np.ndarray
    basis_con: np.ndarray


_DEGENERACY_TOL = 1e-12


def frame(chart, x):
    """Evaluate the geometric frame of ``chart`` at parameter point ``x``.

    Raises
    ------
    GeometryError
        If the tangent vectors are (numerically) linearly dependent.
    """
    x1, x2 = float(x[0]), float(x[1])
    a1 = chart.d1(x1, x2)
    a2 = chart.d2(x1, x2)
    cross = np.cross(a1, a2)
    cross_norm = np.linalg.norm(cross)
    scale = np.linalg.norm(a1) * np.linalg.norm(a2)
    if cross_norm <= _DEGENERACY_TOL * max(scale, 1.0):
        raise GeometryError(
            f"degenerate tangent plane at x=({x1}, {x2}): |a1 x a2| = {cross_norm:.3e}"
        )
    a3 = cross / cross_norm

    a_cov = np.array(
        [[a1 @ a1, a1 @ a2], [a1 @ a2, a2 @ a2]]
    )
    det = a_cov[0, 0] * a_cov[1, 1] - a_cov[0, 1] ** 2
    a_con = (
        np.array([[a_cov[1, 1], -a_cov[0, 1]], [-a_cov[0, 1], a_cov[0, 0]]]) / det
    )
    sqrt_a = np.sqrt(det)

    d11 = chart.d11(x1, x2)
    d12 = chart.d12(x1, x2)
    d22 = chart.d22(x1, x2)
    b_cov = np.array(
        [[a3 @ d11, a3 @ d12], [a3 @ d12, a3 @ d22]]
    )
    b_mixed = a_con @ b_cov
    c_cov = b_mixed.T @ b_cov

    # a^g = a^{g1} a_1 + a^{g2} a_2 ; Gamma^g_{ab} = a^g . d_ab
    acon1 = a_con[0, 0] * a1 + a_con[0, 1] * a2
    acon2 = a_con[1, 0] * a1 + a_con[1, 1] * a2
    christoffel = np.empty((2, 2, 2))
    second = ((d11, d12), (d12, d22))
    for a in range(2):
        for b in range(2):
            christoffel[0, a, b] = acon1 @ second[a][b]
            christoffel[1, a, b] = acon2 @ second[a][b]

    basis_cov = np.vstack([a1, a2, a3])
    basis_con = np.vstack([acon1, acon2, a3])
    return GeomFrame(
        a_cov=a_cov,
        a_con=a_con,
        sqrt_a=float(sqrt_a),
        b_cov=b_cov,
        b_mixed=b_mixed,
        c_cov=c_cov,
        christoffel=christoffel,
        basis_cov=basis_cov,
        basis_con=basis_con,
    )


def cov_deriv_covector(frm, u, grad_u):
    """Covariant derivative u_{a|b} of a covariant vector.

    ``grad_u[a, b]`` holds the parameter-space partial d_b u_a.  Returns the
    (2, 2) array u_{a|b} = d_b u_a - Gamma^g_{ab} u_g.
    """
    return grad_u - np.einsum("gab,g->ab", frm.christoffel, u)


def cov_deriv_vector(frm, eta, grad_eta):
    """Covariant derivative eta^a|_b of a contravariant vector.

    ``grad_eta[a, b]`` holds d_b eta^a.  Returns eta^a|_b = d_b eta^a
    + Gamma^a_{bd} eta^d.
    """
    return grad_eta + np.einsum("abd,d->ab", frm.christoffel, eta)


def cov_deriv_tensor(frm, sig, grad_sig):
    """Covariant derivative sigma^{ab}|_g of a contravariant 2-tensor.

    ``grad_sig[a, b, g]`` holds d_g sigma^{ab}.  Returns sigma^{ab}|_g =
    d_g sigma^{ab} + Gamma^a_{gl} sigma^{lb} + Gamma^b_{gt} sigma^{at}.
    """
    return (
        grad_sig
        + np.einsum("agl,lb->abg", frm.christoffel, sig)
        + np.einsum("bgt,at->abg", frm.christoffel, sig)
    )


def edge_weights(frm, tangent):
    """Arc and conormal weights for integrating over a mapped edge.

    Parameters
    ----------
    frm : GeomFrame
        Frame at the edge point.
    tangent : (2,) array
        Unit tangent of the flat edge.

    Returns
    -------
    arc : float
        Length element of the mapped edge per unit flat arc length,
        sqrt(a_{ab} t_a t_b).
    conormal : (2,) ndarray
        The product (covariant conormal) x (mapped arc element) per unit
        flat arc length, which equals sqrt(a) * nbar with nbar the flat
        unit normal (t2, -t1).  Edge terms that are linear in the conormal
        integrate exactly on the flat edge against this weight.
    """
    t = np.asarray(tangent, dtype=float)
    arc = float(np.sqrt(t @ frm.a_cov @ t))
    nbar = np.array([t[1], -t[0]])
    return arc, frm.sqrt_a * nbar
