"""Polynomial bases on the reference triangle.

Local shape functions everywhere in the package are stored as coefficient
rows over the graded monomial basis {x^i y^j : i + j <= m} on the reference
triangle with vertices (0,0), (1,0), (0,1).  A graded L2-orthonormal basis
(computed once per degree from the exact monomial Gram matrix) keeps local
systems well conditioned; because it is graded, its first dim P^k functions
span exactly P^k for every k <= m.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .quadrature import monomial_integral


def space_dim(degree):
    """Dimension of P^degree in two variables."""
    return (degree + 1) * (degree + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(degree):
    """Graded list of exponent pairs (i, j), i + j <= degree."""
    exps = []
    for total in range(degree + 1):
        for i in range(total, -1, -1):
            exps.append((i, total - i))
    return tuple(exps)


def monomial_values(degree, pts):
    """Monomial values at reference points: shape (dim, npts)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    exps = monomial_exponents(degree)
    vals = np.empty((len(exps), pts.shape[0]))
    for k, (i, j) in enumerate(exps):
        vals[k] = pts[:, 0] ** i * pts[:, 1] ** j
    return vals


def monomial_gradients(degree, pts):
    """Monomial gradients at reference points: shape (dim, npts, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    exps = monomial_exponents(degree)
    grads = np.zeros((len(exps), pts.shape[0], 2))
    for k, (i, j) in enumerate(exps):
        if i > 0:
            grads[k, :, 0] = i * pts[:, 0] ** (i - 1) * pts[:, 1] ** j
        if j > 0:
            grads[k, :, 1] = j * pts[:, 0] ** i * pts[:, 1] ** (j - 1)
    return grads


def monomial_hessians(degree, pts):
    """Monomial second derivatives: shape (dim, npts, 2, 2)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    exps = monomial_exponents(degree)
    hess = np.zeros((len(exps), pts.shape[0], 2, 2))
    for k, (i, j) in enumerate(exps):
        if i > 1:
            hess[k, :, 0, 0] = i * (i - 1) * pts[:, 0] ** (i - 2) * pts[:, 1] ** j
        if i > 0 and j > 0:
            mixed = i * j * pts[:, 0] ** (i - 1) * pts[:, 1] ** (j - 1)
            hess[k, :, 0, 1] = mixed
            hess[k, :, 1, 0] = mixed
        if j > 1:
            hess[k, :, 1, 1] = j * (j - 1) * pts[:, 0] ** i * pts[:, 1] ** (j - 2)
    return hess


@lru_cache(maxsize=None)
def monomial_gram(degree):
    """Exact L2 Gram matrix of the monomials over the reference triangle."""
    exps = monomial_exponents(degree)
    n = len(exps)
    gram = np.empty((n, n))
    for a, (i, j) in enumerate(exps):
        for b, (p, q) in enumerate(exps):
            gram[a, b] = monomial_integral(i + p, j + q)
    return gram


@lru_cache(maxsize=None)
def orthonormal_coeffs(degree):
    """Graded orthonormal basis as coefficient rows over the monomials.

    Row r of the returned matrix holds the monomial coefficients of the
    r-th orthonormal function; span(rows[: space_dim(k)]) = P^k for any
    k <= degree, because Cholesky respects the graded ordering.
    """
    gram = monomial_gram(degree)
    coeffs = np.linalg.inv(np.linalg.cholesky(gram))
    # one refinement pass cleans up the monomial Gram's poor conditioning
    residual_gram = coeffs @ gram @ coeffs.T
    coeffs = np.linalg.inv(np.linalg.cholesky(residual_gram)) @ coeffs
    return coeffs


def multiply_affine(coeffs, const, cx, cy, degree_in):
    """Coefficients of (const + cx*x + cy*y) * p for p of degree ``degree_in``.

    ``coeffs`` are monomial coefficients of p (graded order); the result is
    over the degree ``degree_in + 1`` monomials.
    """
    exps_in = monomial_exponents(degree_in)
    exps_out = monomial_exponents(degree_in + 1)
    index = {e: k for k, e in enumerate(exps_out)}
    out = np.zeros(len(exps_out))
    for k, (i, j) in enumerate(exps_in):
        c = coeffs[k]
        if c == 0.0:
            continue
        out[index[(i, j)]] += const * c
        out[index[(i + 1, j)]] += cx * c
        out[index[(i, j + 1)]] += cy * c
    return out


def pad_coeffs(coeffs, degree_in, degree_out):
    """Embed monomial coefficients of degree ``degree_in`` into ``degree_out``.

    Works on a single row or a stack of rows; graded ordering makes this a
    zero-padding on the right.
    """
    n_in = space_dim(degree_in)
    n_out = space_dim(degree_out)
    coeffs = np.atleast_2d(coeffs)
    if coeffs.shape[1] != n_in:
        raise ValueError("coefficient width does not match degree_in")
    out = np.zeros((coeffs.shape[0], n_out))
    out[:, :n_in] = coeffs
    return out


@lru_cache(maxsize=None)
def lagrange_nodes(degree):
    """Barycentric coordinates of the standard P^degree Lagrange lattice.

    Ordered as: the 3 vertices; then for each edge (0,1), (1,2), (2,0) the
    ``degree - 1`` interior edge nodes walking from the first vertex to the
    second; then the interior lattice nodes.
    """
    if degree < 1:
        raise ValueError("nodal basis needs degree >= 1")
    verts = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
    nodes = list(verts)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for m in range(1, degree):
            t = m / degree
            lam = [0.0, 0.0, 0.0]
            lam[a] = 1.0 - t
            lam[b] = t
            nodes.append(tuple(lam))
    for i in range(1, degree):
        for j in range(1, degree - i):
            k = degree - i - j
            nodes.append((k / degree, i / degree, j / degree))
    return tuple(nodes)


@lru_cache(maxsize=None)
def lagrange_coeffs(degree):
    """Monomial coefficient rows of the Lagrange basis on the standard lattice."""
    nodes = lagrange_nodes(degree)
    ref = np.array([(lam[1], lam[2]) for lam in nodes])
    # rows C with C @ monomial_values(nodes) = I
    return np.linalg.inv(monomial_values(degree, ref))
