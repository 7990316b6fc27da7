"""Discrete spaces: discontinuous displacement/rotation and continuous stress.

The displacement/rotation space carries five scalar fields per element
(theta1, theta2, u1, u2, w) with no inter-element coupling.  Rotations use
P^k everywhere.  Displacements and the normal deflection use P^k on
elements away from the free boundary; on elements with one free edge (k=2)
the space is enriched by two cubics that are orthogonal to P^2 in the
sqrt(a)-weighted L2 inner product and linear on the free edge; with two
free edges the full P^{k+1} is used.  For k >= 3 free-edge elements use the
full P^{k+1} space.

The stress space consists of five continuous scalar fields (M11, M12, M22,
xi1, xi2) of degree k-1 with shared vertex/edge nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import polynomials as poly
from .geometry import frame
from .quadrature import triangle_rule

H_FIELDS = ("theta1", "theta2", "u1", "u2", "w")
V_FIELDS = ("M11", "M12", "M22", "xi1", "xi2")

# reference barycentric functions as (const, cx, cy) over (x, y)
_BARY_AFFINE = ((1.0, -1.0, -1.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


class UnsupportedConfigurationError(Exception):
    """Raised for element/space configurations outside the method's scope."""


# The weighted Gram systems defining the enrichment are integrated well
# beyond the assembly rule: the area factor is not polynomial on curved
# charts and the orthogonality must survive independent high-order
# verification.
_ENRICHMENT_RULE_DEGREE = 16


@dataclass(frozen=True)
class EnrichmentBasis:
    """The two enrichment cubics of a one-free-edge element (k=2).

    ``coeffs`` holds two rows of reference-monomial coefficients (degree 3,
    graded order): the functions lam_f * p_a^2 + {1, lam_next}, orthogonal
    to P^2 in the sqrt(a)-weighted element inner product and linear on the
    free edge.  ``free_edge`` is the local edge index (opposite-vertex
    convention).
    """

    element: int
    free_edge: int
    coeffs: np.ndarray

    def eval(self, ref_pts):
        return self.coeffs @ poly.monomial_values(3, ref_pts)


def _element_maps(mesh):
    nt = mesh.n_triangles
    origin = np.empty((nt, 2))
    jac = np.empty((nt, 2, 2))
    jinv = np.empty((nt, 2, 2))
    for it in range(nt):
        p = mesh.element_corners(it)
        origin[it] = p[0]
        j = np.column_stack([p[1] - p[0], p[2] - p[0]])
        jac[it] = j
        jinv[it] = np.linalg.inv(j)
    return origin, jac, jinv


def _solve_enrichment(mesh, chart, it, free_local, k, rule):
    """Solve the two weighted-orthogonality systems on one element.

    Returns the (2, dim P^{k+1} monomials) coefficient rows of the
    enrichment functions.  Only defined for k = 2.
    """
    onb2 = poly.orthonormal_coeffs(2)[: poly.space_dim(2)]
    ref = rule.ref_coords
    vals2 = onb2 @ poly.monomial_values(2, ref)  # (6, nq)

    p = mesh.element_corners(it)
    jac = np.column_stack([p[1] - p[0], p[2] - p[0]])
    detj = abs(np.linalg.det(jac))
    sqrt_a = np.array(
        [frame(chart, p[0] + jac @ xy).sqrt_a for xy in ref]
    )
    w = rule.weights * sqrt_a * detj

    lam_f = np.array(
        [_BARY_AFFINE[free_local][0]
         + _BARY_AFFINE[free_local][1] * xy[0]
         + _BARY_AFFINE[free_local][2] * xy[1] for xy in ref]
    )
    nxt = (free_local + 1) % 3
    lam_n = np.array(
        [_BARY_AFFINE[nxt][0]
         + _BARY_AFFINE[nxt][1] * xy[0]
         + _BARY_AFFINE[nxt][2] * xy[1] for xy in ref]
    )

    gram = (vals2 * (w * lam_f)) @ vals2.T
    rhs1 = -(vals2 @ w)
    rhs2 = -(vals2 @ (w * lam_n))
    try:
        c1 = np.linalg.solve(gram, rhs1)
        c2 = np.linalg.solve(gram, rhs2)
    except np.linalg.LinAlgError as exc:
        raise UnsupportedConfigurationError(
            f"singular enrichment Gram matrix on element {it}"
        ) from exc

    mono2_1 = c1 @ onb2
    mono2_2 = c2 @ onb2
    af = _BARY_AFFINE[free_local]
    row1 = poly.multiply_affine(mono2_1, *af, degree_in=2)
    row1[0] += 1.0
    row2 = poly.multiply_affine(mono2_2, *af, degree_in=2)
    an = _BARY_AFFINE[nxt]
    row2[poly.monomial_exponents(3).index((0, 0))] += an[0]
    row2[poly.monomial_exponents(3).index((1, 0))] += an[1]
    row2[poly.monomial_exponents(3).index((0, 1))] += an[2]
    rows = np.vstack([row1, row2])
    if k != 2:
        raise UnsupportedConfigurationError("minimal enrichment only built for k=2")
    return rows


def enrichment(mesh, chart, it, k=2, rule=None):
    """Enrichment basis of a one-free-edge element (spec'd for k=2 only)."""
    free = mesh.element_free_edges(it)
    if len(free) != 1:
        raise UnsupportedConfigurationError(
            f"element {it} has {len(free)} free edges; enrichment needs exactly 1"
        )
    if rule is None:
        rule = triangle_rule(_ENRICHMENT_RULE_DEGREE)
    rows = _solve_enrichment(mesh, chart, it, free[0], k, rule)
    return EnrichmentBasis(element=it, free_edge=free[0], coeffs=rows)


class SpacePair:
    """Degree-of-freedom layout for the displacement and stress spaces.

    Construct with :func:`build_spaces`.  Displacement/rotation DOFs are
    element-contiguous: per element the order is theta1, theta2 (dim P^k
    each) then u1, u2, w (each of the element's displacement dimension).
    Stress DOFs are field-major over the shared scalar node set.
    """

    def __init__(self, mesh, chart, k=2, allow_three_free_edges=False):
        if k < 2:
            raise UnsupportedConfigurationError("polynomial degree k must be >= 2")
        self.mesh = mesh
        self.chart = chart
        self.k = k
        self.theta_dim = poly.space_dim(k)
        self.mono_degree = k + 1
        self.mono_width = poly.space_dim(k + 1)

        onb_full = poly.orthonormal_coeffs(k + 1)
        self._theta_coeffs = onb_full[: self.theta_dim]
        self._pk_coeffs = onb_full[: poly.space_dim(k)]
        self._pk1_coeffs = onb_full

        rule = triangle_rule(max(_ENRICHMENT_RULE_DEGREE, 2 * k + 4))
        nt = mesh.n_triangles
        self.u_dims = np.empty(nt, dtype=int)
        self._u_coeffs = []
        self.enrichments = {}
        for it in range(nt):
            free = mesh.element_free_edges(it)
            if len(free) == 0:
                self._u_coeffs.append(self._pk_coeffs)
            elif len(free) == 1 and k == 2:
                rows = _solve_enrichment(mesh, chart, it, free[0], k, rule)
                self.enrichments[it] = EnrichmentBasis(
                    element=it, free_edge=free[0], coeffs=rows
                )
                self._u_coeffs.append(np.vstack([self._pk_coeffs, rows]))
            elif len(free) <= 2:
                self._u_coeffs.append(self._pk1_coeffs)
            elif allow_three_free_edges:
                self._u_coeffs.append(self._pk1_coeffs)
            else:
                raise UnsupportedConfigurationError(
                    f"element {it} has 3 free edges (isolated triangle)"
                )
            self.u_dims[it] = self._u_coeffs[it].shape[0]

        dims = 2 * self.theta_dim + 3 * self.u_dims
        self.h_offsets = np.concatenate([[0], np.cumsum(dims)])
        self.n_h = int(self.h_offsets[-1])

        self._origin, self._jac, self._jinv = _element_maps(mesh)
        self._build_v_nodes()

    # -- stress-space node table ----------------------------------------------

    def _build_v_nodes(self):
        mesh = self.mesh
        m = self.k - 1
        self.v_degree = m
        nv = mesh.n_vertices
        n_edge_nodes = m - 1 if m >= 2 else 0
        n_int = (m - 1) * (m - 2) // 2 if m >= 3 else 0
        self.n_v_nodes = (
            nv + n_edge_nodes * len(mesh.edges) + n_int * mesh.n_triangles
        )
        self.n_v = 5 * self.n_v_nodes

        coords = np.zeros((self.n_v_nodes, 2))
        coords[:nv] = mesh.vertices
        edge_base = nv
        for ie, e in enumerate(mesh.edges):
            for t in range(1, m):
                s = t / m
                coords[edge_base + ie * n_edge_nodes + (t - 1)] = (
                    (1 - s) * mesh.vertices[e.v0] + s * mesh.vertices[e.v1]
                )
        int_base = nv + n_edge_nodes * len(mesh.edges)
        lattice = poly.lagrange_nodes(m) if m >= 1 else ()
        n_local = len(lattice)
        elem_nodes = np.empty((mesh.n_triangles, n_local), dtype=int)
        for it, tri in enumerate(mesh.triangles):
            loc = []
            loc.extend(int(v) for v in tri)
            for a, b in ((0, 1), (1, 2), (2, 0)):
                ga, gb = int(tri[a]), int(tri[b])
                e = mesh._edge_index[frozenset((ga, gb))]
                base = edge_base + e * n_edge_nodes
                forward = mesh.edges[e].v0 == ga
                for t in range(1, m):
                    pos = (t - 1) if forward else (m - 1 - t)
                    loc.append(base + pos)
            base = int_base + it * n_int
            for t in range(n_int):
                loc.append(base + t)
            elem_nodes[it] = loc
            # interior node coordinates from the reference lattice
            for t in range(n_int):
                lam = lattice[3 + 3 * n_edge_nodes + t]
                coords[base + t] = (
                    lam[0] * mesh.vertices[tri[0]]
                    + lam[1] * mesh.vertices[tri[1]]
                    + lam[2] * mesh.vertices[tri[2]]
                )
        self.v_elem_nodes = elem_nodes
        self.v_node_coords = coords
        self._v_coeffs = poly.lagrange_coeffs(m)

    # -- DOF maps ----------------------------------------------------------------

    def h_element_dofs(self, it):
        """Global indices of the element's displacement/rotation DOFs."""
        return np.arange(self.h_offsets[it], self.h_offsets[it + 1])

    def h_field_slices(self, it):
        """Local slices of (theta1, theta2, u1, u2, w) in the element block."""
        dk, du = self.theta_dim, int(self.u_dims[it])
        return (
            slice(0, dk),
            slice(dk, 2 * dk),
            slice(2 * dk, 2 * dk + du),
            slice(2 * dk + du, 2 * dk + 2 * du),
            slice(2 * dk + 2 * du, 2 * dk + 3 * du),
        )

    def v_dof(self, field, node):
        """Global stress DOF of ``field`` (index or name) at a scalar node."""
        if isinstance(field, str):
            field = V_FIELDS.index(field)
        return field * self.n_v_nodes + node

    def v_element_dofs(self, it):
        """(5, n_local_nodes) global stress DOFs of the element."""
        nodes = self.v_elem_nodes[it]
        return np.stack([f * self.n_v_nodes + nodes for f in range(5)])

    # -- basis evaluation ---------------------------------------------------------

    def to_reference(self, it, pts):
        pts = np.atleast_2d(np.asarray(pts, float))
        return (pts - self._origin[it]) @ self._jinv[it].T

    def from_reference(self, it, ref_pts):
        ref_pts = np.atleast_2d(np.asarray(ref_pts, float))
        return self._origin[it] + ref_pts @ self._jac[it].T

    def _h_eval(self, it, ref_pts, mono_vals=None, mono_grads=None):
        if mono_vals is None:
            mono_vals = poly.monomial_values(self.mono_degree, ref_pts)
        if mono_grads is None:
            mono_grads = poly.monomial_gradients(self.mono_degree, ref_pts)
        jinv = self._jinv[it]
        ct, cu = self._theta_coeffs, self._u_coeffs[it]
        tv = ct @ mono_vals
        uv = cu @ mono_vals
        tg = np.einsum("cm,mpd,di->cpi", ct, mono_grads, jinv)
        ug = np.einsum("cm,mpd,di->cpi", cu, mono_grads, jinv)
        return tv, tg, uv, ug

    def eval_h_basis(self, it, pts):
        """Shape-function values and gradients at physical points.

        Returns ``(theta_vals, theta_grads, u_vals, u_grads)`` with shapes
        (dim, n) and (dim, n, 2); gradients are with respect to the
        parameter-domain coordinates.
        """
        ref = self.to_reference(it, pts)
        return self._h_eval(it, ref)

    def eval_h_basis_hess(self, it, pts):
        """Second derivatives of the u-space shape functions, (dim, n, 2, 2)."""
        ref = self.to_reference(it, pts)
        mono_h = poly.monomial_hessians(self.mono_degree, ref)
        jinv = self._jinv[it]
        cu = self._u_coeffs[it]
        href = np.einsum("cm,mpab->cpab", cu, mono_h)
        hphys = np.einsum("ai,cpab,bj->cpij", jinv, href, jinv)
        ct = self._theta_coeffs
        tref = np.einsum("cm,mpab->cpab", ct, mono_h)
        tphys = np.einsum("ai,cpab,bj->cpij", jinv, tref, jinv)
        return tphys, hphys

    def eval_v_basis(self, it, pts):
        """Nodal stress-space basis values and gradients at physical points."""
        ref = self.to_reference(it, pts)
        mono_vals = poly.monomial_values(self.v_degree, ref)
        mono_grads = poly.monomial_gradients(self.v_degree, ref)
        jinv = self._jinv[it]
        c = self._v_coeffs
        vals = c @ mono_vals
        grads = np.einsum("cm,mpd,di->cpi", c, mono_grads, jinv)
        return vals, grads

    def dof_counts(self):
        return {"H": self.n_h, "V": self.n_v}


def build_spaces(mesh, chart, k=2, allow_three_free_edges=False):
    """Construct the paired displacement/rotation and stress spaces."""
    return SpacePair(
        mesh, chart, k=k, allow_three_free_edges=allow_three_free_edges
    )
