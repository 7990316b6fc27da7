import numpy as np
import pytest

from dgshell import polynomials as poly
from dgshell.quadrature import triangle_rule


def test_orthonormal_basis_is_orthonormal():
    # the achievable defect is cond(monomial Gram) * eps: evaluating the
    # product through monomial coefficients cancels heavily at higher degree
    for degree, tol in ((1, 1e-14), (2, 1e-13), (3, 1e-12), (4, 1e-11)):
        c = poly.orthonormal_coeffs(degree)
        gram = c @ poly.monomial_gram(degree) @ c.T
        assert np.max(np.abs(gram - np.eye(len(c)))) < tol


def test_orthonormal_basis_is_graded():
    # first dim P^2 rows of the degree-3 basis contain no cubic monomials
    c = poly.orthonormal_coeffs(3)
    n2 = poly.space_dim(2)
    assert np.allclose(c[:n2, n2:], 0.0)


def test_multiply_affine_matches_pointwise_product():
    rng = np.random.default_rng(0)
    coeffs = rng.normal(size=poly.space_dim(2))
    const, cx, cy = 0.3, -1.2, 0.7
    out = poly.multiply_affine(coeffs, const, cx, cy, degree_in=2)
    pts = rng.uniform(0, 0.5, size=(20, 2))
    v_in = coeffs @ poly.monomial_values(2, pts)
    v_aff = const + cx * pts[:, 0] + cy * pts[:, 1]
    v_out = out @ poly.monomial_values(3, pts)
    assert np.allclose(v_out, v_in * v_aff, atol=1e-13)


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.1, 0.4, size=(5, 2))
    h = 1e-6
    grads = poly.monomial_gradients(3, pts)
    for d in range(2):
        shift = np.zeros(2)
        shift[d] = h
        fd = (
            poly.monomial_values(3, pts + shift) - poly.monomial_values(3, pts - shift)
        ) / (2 * h)
        assert np.allclose(grads[:, :, d], fd, atol=1e-7)


def test_lagrange_basis_kronecker_property():
    for degree in (1, 2, 3):
        nodes = poly.lagrange_nodes(degree)
        ref = np.array([(lam[1], lam[2]) for lam in nodes])
        vals = poly.lagrange_coeffs(degree) @ poly.monomial_values(degree, ref)
        assert np.allclose(vals, np.eye(len(nodes)), atol=1e-12)


def test_lagrange_partition_of_unity():
    rule = triangle_rule(4)
    for degree in (1, 2):
        vals = poly.lagrange_coeffs(degree) @ poly.monomial_values(
            degree, rule.ref_coords
        )
        assert np.allclose(vals.sum(axis=0), 1.0, atol=1e-12)


def test_pad_coeffs_preserves_values():
    rng = np.random.default_rng(2)
    c = rng.normal(size=poly.space_dim(2))
    padded = poly.pad_coeffs(c, 2, 4)[0]
    pts = rng.uniform(0, 0.5, size=(7, 2))
    assert np.allclose(
        c @ poly.monomial_values(2, pts), padded @ poly.monomial_values(4, pts)
    )
