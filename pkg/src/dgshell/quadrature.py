"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are built by collapsing a tensor-product Gauss rule onto the
reference triangle with vertices (0,0), (1,0), (0,1).  The construction is
exact for any requested polynomial degree, has strictly positive weights,
and keeps all points in the open triangle.  Edge rules are Gauss-Legendre
on [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss


@dataclass(frozen=True)
class TriangleRule:
    """Quadrature on the reference triangle.

    ``points`` are barycentric coordinates (n, 3) with respect to the
    vertices (0,0), (1,0), (0,1); ``weights`` (n,) sum to the reference
    area 1/2.  ``degree`` is the guaranteed polynomial exactness.
    """

    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def ref_coords(self):
        """Reference (x, y) coordinates, shape (n, 2)."""
        return self.points[:, 1:]


@dataclass(frozen=True)
class EdgeRule:
    """Gauss rule on [0, 1]: ``points`` (n,), ``weights`` summing to 1."""

    npoints: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def degree(self):
        return 2 * self.npoints - 1


def triangle_rule(degree):
    """Positive-weight rule exact for polynomials of total degree ``degree``.

    Uses the collapsed map x = u, y = v (1 - u): a degree-d integrand pulls
    back to degree <= d+1 in u and <= d in v, so n = ceil((d + 2) / 2)
    Gauss points per direction suffice.
    """
    if degree < 0:
        raise ValueError("quadrature degree must be nonnegative")
    n = max(1, math.ceil((degree + 2) / 2))
    gp, gw = leggauss(n)
    gp = 0.5 * (gp + 1.0)
    gw = 0.5 * gw
    pts = []
    wts = []
    for iu in range(n):
        u = gp[iu]
        for iv in range(n):
            v = gp[iv]
            x = u
            y = v * (1.0 - u)
            pts.append((1.0 - x - y, x, y))
            wts.append(gw[iu] * gw[iv] * (1.0 - u))
    points = np.array(pts)
    weights = np.array(wts)
    return TriangleRule(degree=degree, points=points, weights=weights)


def edge_rule(npoints):
    """Gauss-Legendre rule with ``npoints`` nodes on [0, 1]."""
    if npoints < 1:
        raise ValueError("edge rule needs at least one point")
    gp, gw = leggauss(npoints)
    return EdgeRule(
        npoints=npoints, points=0.5 * (gp + 1.0), weights=0.5 * gw
    )


def monomial_integral(i, j):
    """Exact integral of x**i y**j over the reference triangle."""
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


def rule_exactness_defect(rule):
    """Worst relative error of ``rule`` on monomials up to its stated degree."""
    worst = 0.0
    xy = rule.ref_coords
    for i in range(rule.degree + 1):
        for j in range(rule.degree + 1 - i):
            approx = float(np.sum(rule.weights * xy[:, 0] ** i * xy[:, 1] ** j))
            exact = monomial_integral(i, j)
            worst = max(worst, abs(approx - exact) / max(abs(exact), 1e-300))
    return worst
