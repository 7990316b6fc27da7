"""Shared test helpers: turning analytic fields into coefficient vectors."""

import numpy as np

from dgshell.geometry import frame
from dgshell.material import elastic_apply, strains


class PolyFields:
    """Analytic (theta, u, w) fields from plain python callables.

    Gradients are supplied explicitly; this is the pointwise interface the
    assembly sources expect.
    """

    def __init__(self, theta, dtheta, u, du, w, dw):
        self.theta = theta
        self.dtheta = dtheta
        self.u = u
        self.du = du
        self.w = w
        self.dw = dw


ZERO_FIELDS = PolyFields(
    theta=lambda x: np.zeros(2),
    dtheta=lambda x: np.zeros((2, 2)),
    u=lambda x: np.zeros(2),
    du=lambda x: np.zeros((2, 2)),
    w=lambda x: 0.0,
    dw=lambda x: np.zeros(2),
)


def h_coeffs_from_fields(space, fields, sample_seed=0):
    """Least-squares element coefficients for fields inside the FE space.

    Exact (to roundoff) whenever each component lies in the element's local
    polynomial space; used as an independent way to build coefficient
    vectors in tests.
    """
    rng = np.random.default_rng(sample_seed)
    coeffs = np.zeros(space.n_h)
    for it in range(space.mesh.n_triangles):
        ref = rng.uniform(0.03, 0.31, size=(40, 2))
        pts = space.from_reference(it, ref)
        tv, _, uv, _ = space.eval_h_basis(it, pts)
        sl = space.h_field_slices(it)
        dofs = space.h_element_dofs(it)
        targets = [
            np.array([fields.theta(x)[0] for x in pts]),
            np.array([fields.theta(x)[1] for x in pts]),
            np.array([fields.u(x)[0] for x in pts]),
            np.array([fields.u(x)[1] for x in pts]),
            np.array([fields.w(x) for x in pts]),
        ]
        for fi, target in enumerate(targets):
            basis = tv if fi < 2 else uv
            c, *_ = np.linalg.lstsq(basis.T, target, rcond=None)
            coeffs[dofs[sl[fi]]] = c
    return coeffs


def v_coeffs_from_nodal(space, m_func, xi_func):
    """Stress coefficients by nodal interpolation at the shared node set."""
    p = np.zeros(space.n_v)
    for node, x in enumerate(space.v_node_coords):
        m = m_func(x)
        xi = xi_func(x)
        p[space.v_dof("M11", node)] = m[0, 0]
        p[space.v_dof("M12", node)] = m[0, 1]
        p[space.v_dof("M22", node)] = m[1, 1]
        p[space.v_dof("xi1", node)] = xi[0]
        p[space.v_dof("xi2", node)] = xi[1]
    return p


def constitutive_stresses(chart, moduli, fields, epsilon):
    """Exact scaled stresses of analytic fields via the constitutive blocks."""
    inv2 = 1.0 / epsilon**2
    km = moduli.kappa * moduli.mu

    def m_func(x):
        frm = frame(chart, x)
        s = strains(frm, fields.theta(x), fields.dtheta(x), fields.u(x),
                    fields.du(x), fields.w(x), fields.dw(x))
        return inv2 * elastic_apply(frm, moduli, s.gamma)

    def xi_func(x):
        frm = frame(chart, x)
        s = strains(frm, fields.theta(x), fields.dtheta(x), fields.u(x),
                    fields.du(x), fields.w(x), fields.dw(x))
        return inv2 * km * (frm.a_con @ s.tau)

    return m_func, xi_func
