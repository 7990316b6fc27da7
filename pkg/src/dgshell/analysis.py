"""Interpolation onto the discrete spaces, error norms, and diagnostics.

The displacement interpolant is the sqrt(a)-weighted element L2 projection;
on free-edge elements it additionally matches weighted zero and first
moments on each free edge, which is exactly what the enriched spaces were
built to support.  Stress interpolation is nodal.  Error norms evaluate the
exact fields at quadrature points directly and see only the discrete jumps
on interior edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as dla
import scipy.sparse.linalg as spla

from . import polynomials as poly
from .assembly import (
    CallableHSource,
    CallableVSource,
    DifferenceHSource,
    DifferenceVSource,
    FEFunctionHSource,
    FEFunctionVSource,
    _constitutive_stress_callables,
)
from .quadrature import edge_rule, triangle_rule
from .spaces import UnsupportedConfigurationError

DENSE_EIG_GUARD = 2600


class SizeGuardError(Exception):
    """Raised when a dense diagnostic is requested on too large a system."""


@dataclass
class ExactFields:
    """Analytic solution fields with first (and optionally second) derivatives.

    Derivative layout: ``dtheta(x)[a, b]`` = d_b theta_a, ``dw(x)`` = grad w.
    Second derivatives (for interpolation-rate diagnostics) follow
    ``d2theta(x)[a, i, j]`` = d_i d_j theta_a and ``d2w(x)[i, j]``.
    The scaled stresses are derived fields: the constitutive blocks applied
    to the membrane and shear strains, divided by eps^2.
    """

    theta: object
    dtheta: object
    u: object
    du: object
    w: object
    dw: object
    d2theta: object = None
    d2u: object = None
    d2w: object = None
    # optional vectorized evaluator pts -> (theta (2,n), dtheta (2,n,2),
    # u (2,n), du (2,n,2), w (n,), dw (n,2)); assembly uses it when present
    batch: object = None

    def stress_fields(self, chart, moduli, epsilon):
        """Callables (M(x), xi(x)) for the scaled stress tensor and vector."""
        return _constitutive_stress_callables(chart, moduli, self, epsilon)


_PROJECTION_RULE_DEGREE = 16
_EDGE_MOMENT_POINTS = 10


def interpolate(spaces, exact, epsilon=None, moduli=None):
    """Interpolate exact fields into the paired discrete spaces.

    Returns ``(x, p)``.  The stress part needs ``epsilon`` and ``moduli``
    to derive the scaled stresses; pass None to skip it (p comes back as
    zeros).
    """
    mesh = spaces.mesh
    chart = spaces.chart
    rule = triangle_rule(max(_PROJECTION_RULE_DEGREE, 2 * spaces.k + 4))
    erule = edge_rule(_EDGE_MOMENT_POINTS)
    x = np.zeros(spaces.n_h)

    from .geometry import frame

    for it in range(mesh.n_triangles):
        pts = spaces.from_reference(it, rule.ref_coords)
        detj = 2.0 * mesh.area_tri[it]
        sqrt_a = np.array([frame(chart, xq).sqrt_a for xq in pts])
        wq = rule.weights * detj * sqrt_a
        tv, _, uv, _ = spaces.eval_h_basis(it, pts)

        theta_gram = (tv * wq) @ tv.T
        sl = spaces.h_field_slices(it)
        dofs = spaces.h_element_dofs(it)
        tvals = np.array([exact.theta(xq) for xq in pts])
        for a in range(2):
            rhs = tv @ (wq * tvals[:, a])
            x[dofs[sl[a]]] = np.linalg.solve(theta_gram, rhs)

        nfree = len(mesh.element_free_edges(it))
        uvals = np.array([exact.u(xq) for xq in pts])
        wvals = np.array([exact.w(xq) for xq in pts])
        targets = [uvals[:, 0], uvals[:, 1], wvals]
        if nfree == 0:
            u_gram = (uv * wq) @ uv.T
            for fi, vals in enumerate(targets):
                rhs = uv @ (wq * vals)
                x[dofs[sl[2 + fi]]] = np.linalg.solve(u_gram, rhs)
            continue

        # free-edge elements: weighted projection onto P^k plus weighted
        # zero/first moments on each free edge
        du = int(spaces.u_dims[it])
        n_proj = poly.space_dim(spaces.k)
        pk = spaces._pk_coeffs
        proj_test = pk @ poly.monomial_values(spaces.mono_degree, spaces.to_reference(it, pts))
        rows = [(uv * wq) @ proj_test.T]  # (du, n_proj): columns are test funcs
        rhs_rows = [[proj_test @ (wq * vals) for vals in targets]]

        exact_funcs = (lambda xq: exact.u(xq)[0], lambda xq: exact.u(xq)[1], exact.w)
        for le in mesh.element_free_edges(it):
            e = mesh.edges[mesh.tri_edges[it, le]]
            p0, p1 = mesh.vertices[e.v0], mesh.vertices[e.v1]
            epts = p0[None, :] + erule.points[:, None] * (p1 - p0)[None, :]
            esqrt = np.array([frame(chart, xq).sqrt_a for xq in epts])
            ew = erule.weights * e.length * esqrt
            _, _, euv, _ = spaces.eval_h_basis(it, epts)
            smom = [np.ones_like(erule.points)]
            for m in range(1, spaces.k):
                smom.append(erule.points**m)
            rows.append(np.stack([euv @ (ew * s) for s in smom], axis=1))
            rhs_rows.append(
                [
                    np.array(
                        [np.sum(ew * s * np.array([fc(xq) for xq in epts])) for s in smom]
                    )
                    for fc in exact_funcs
                ]
            )

        system = np.concatenate(rows, axis=1).T  # (n_cond, du)
        for fi in range(3):
            rhs = np.concatenate([np.atleast_1d(rr[fi]) for rr in rhs_rows])
            if system.shape[0] == du:
                try:
                    c = np.linalg.solve(system, rhs)
                except np.linalg.LinAlgError as exc:
                    raise UnsupportedConfigurationError(
                        f"singular interpolation system on element {it}"
                    ) from exc
            else:
                c, *_ = np.linalg.lstsq(system, rhs, rcond=None)
            x[dofs[sl[2 + fi]]] = c

    p = np.zeros(spaces.n_v)
    if epsilon is not None and moduli is not None:
        m_func, xi_func = exact.stress_fields(chart, moduli, epsilon)
        for node, xn in enumerate(spaces.v_node_coords):
            m = m_func(xn)
            xi = xi_func(xn)
            p[spaces.v_dof("M11", node)] = m[0, 0]
            p[spaces.v_dof("M12", node)] = m[0, 1]
            p[spaces.v_dof("M22", node)] = m[1, 1]
            p[spaces.v_dof("xi1", node)] = xi[0]
            p[spaces.v_dof("xi2", node)] = xi[1]
    return x, p


def error_norms(assembler, exact, x=None, p=None, which="H_h", epsilon=None):
    """Norm of (exact - discrete) in one of the discrete norms.

    ``which`` is "H_h" (broken H1 + penalties), "a_h" (strains +
    penalties), or "V_h" (stress L2); the latter needs ``p`` and
    ``epsilon``.  Passing ``x=None``/``p=None`` measures the norm of the
    exact fields themselves (discrete part zero).
    """
    spaces = assembler.spaces
    if which in ("H_h", "a_h"):
        h_exact = CallableHSource(exact)
        if x is None:
            x = np.zeros(spaces.n_h)
        diff = DifferenceHSource(h_exact, FEFunctionHSource(spaces, x))
        gram = assembler.gram_h_norm if which == "H_h" else assembler.gram_a_norm
        val = gram(test=diff, trial=diff).toarray()[0, 0]
        return float(np.sqrt(max(val, 0.0)))
    if which == "V_h":
        if epsilon is None:
            raise ValueError("V_h error needs epsilon to derive exact stresses")
        m_func, xi_func = exact.stress_fields(
            assembler.chart, assembler.moduli, epsilon
        )
        v_exact = CallableVSource(m_func, xi_func)
        if p is None:
            p = np.zeros(spaces.n_v)
        diff = DifferenceVSource(v_exact, FEFunctionVSource(spaces, p))
        val = assembler.gram_v_norm(test=diff, trial=diff).toarray()[0, 0]
        return float(np.sqrt(max(val, 0.0)))
    raise ValueError(f"unknown norm {which!r}")


def smallest_generalized_eigenvalue(A, B, size_guard=None, n_smallest=1):
    """Smallest eigenvalues of the pencil A v = lambda B v (B positive definite).

    Dense below :data:`DENSE_EIG_GUARD` unknowns; shift-invert Lanczos
    above (requires A nonsingular there).
    """
    n = A.shape[0]
    guard = DENSE_EIG_GUARD if size_guard is None else size_guard
    if n <= guard:
        evals = dla.eigh(
            np.asarray(A.todense()), np.asarray(B.todense()), eigvals_only=True
        )
        return np.asarray(evals[:n_smallest])
    vals = spla.eigsh(
        A.tocsc(), k=n_smallest, M=B.tocsc(), sigma=0.0, which="LM",
        return_eigenvectors=False,
    )
    return np.sort(vals)


def korn_constant(assembler, size_guard=None):
    """Smallest generalized eigenvalue of (strain Gram, broken-H1 Gram).

    A positive value uniformly in the mesh size is the discrete Korn
    equivalence; with an all-free boundary the value is zero with the
    rigid-motion kernel.
    """
    ga = assembler.gram_a_norm()
    gh = assembler.gram_h_norm()
    lam = smallest_generalized_eigenvalue(ga, gh, size_guard=size_guard)
    return float(lam[0])


def korn_kernel_dimension(assembler, tol=1e-8):
    """Number of strain-seminorm kernel modes (dense computation)."""
    ga = assembler.gram_a_norm()
    gh = assembler.gram_h_norm()
    n = ga.shape[0]
    if n > DENSE_EIG_GUARD:
        raise SizeGuardError(
            f"kernel counting is dense-only ({n} > {DENSE_EIG_GUARD}); "
            "use a coarser mesh"
        )
    evals = dla.eigh(np.asarray(ga.todense()), np.asarray(gh.todense()),
                     eigvals_only=True)
    return int(np.sum(evals < tol))


def weak_seminorm(q, B, gram_h, size_guard=DENSE_EIG_GUARD):
    """Riesz realization of the weak stress seminorm sqrt(q^T B G_H^{-1} B^T q)."""
    if gram_h.shape[0] > size_guard:
        raise SizeGuardError(
            f"weak seminorm is dense-only ({gram_h.shape[0]} > {size_guard})"
        )
    bq = B.T @ q if B.shape[0] == len(q) else B @ q
    gh = np.asarray(gram_h.todense())
    try:
        sol = dla.solve(gh, bq, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise SizeGuardError("broken-H1 Gram is singular") from exc
    return float(np.sqrt(max(bq @ sol, 0.0)))


def interpolation_error_sums(assembler, exact, x):
    """Scaled Sobolev error sums of the displacement interpolant, per level.

    Returns sum over elements of sum_{k=0..2} h^{2k-2} |field - field_I|^2
    in the H^k(element) seminorm, added over the five fields (flat
    measure).  Requires the exact second derivatives.
    """
    if exact.d2theta is None or exact.d2u is None or exact.d2w is None:
        raise ValueError("interpolation rate sums need second derivatives")
    spaces = assembler.spaces
    mesh = spaces.mesh
    rule = assembler.tri_rule
    fe = FEFunctionHSource(spaces, x)
    total = 0.0
    for it in range(mesh.n_triangles):
        data = assembler._elem_data(it)
        pts = data["pts"]
        wd = data["wdet"]
        h2 = mesh.h_tri[it] ** 2
        ev = fe.eval(it, pts)
        t_hess, u_hess = spaces.eval_h_basis_hess(it, pts)
        c = x[spaces.h_element_dofs(it)]
        sl = spaces.h_field_slices(it)
        th_h = np.einsum("l,lnij->nij", c[sl[0]], t_hess), np.einsum(
            "l,lnij->nij", c[sl[1]], t_hess
        )
        u_h = (
            np.einsum("l,lnij->nij", c[sl[2]], u_hess),
            np.einsum("l,lnij->nij", c[sl[3]], u_hess),
            np.einsum("l,lnij->nij", c[sl[4]], u_hess),
        )
        for q, xq in enumerate(pts):
            th = exact.theta(xq) - ev.theta[:, 0, q]
            dth = exact.dtheta(xq) - ev.theta_grad[:, 0, q, :]
            d2th = exact.d2theta(xq) - np.stack([th_h[0][q], th_h[1][q]])
            uu = exact.u(xq) - ev.u[:, 0, q]
            duu = exact.du(xq) - ev.u_grad[:, 0, q, :]
            d2uu = exact.d2u(xq) - np.stack([u_h[0][q], u_h[1][q]])
            ww = exact.w(xq) - ev.w[0, q]
            dww = exact.dw(xq) - ev.w_grad[0, q, :]
            d2ww = exact.d2w(xq) - u_h[2][q]
            l2 = th @ th + uu @ uu + ww**2
            h1 = np.sum(dth**2) + np.sum(duu**2) + dww @ dww
            h2s = np.sum(d2th**2) + np.sum(d2uu**2) + np.sum(d2ww**2)
            total += wd[q] * (l2 / h2 + h1 + h2 * h2s)
    return float(total)


def free_edge_moment_defect(spaces, exact, x):
    """Worst normalized violation of the free-edge moment conditions."""
    from .geometry import frame

    mesh = spaces.mesh
    chart = spaces.chart
    erule = edge_rule(_EDGE_MOMENT_POINTS)
    fe = FEFunctionHSource(spaces, x)
    worst = 0.0
    for it in range(mesh.n_triangles):
        for le in mesh.element_free_edges(it):
            e = mesh.edges[mesh.tri_edges[it, le]]
            p0, p1 = mesh.vertices[e.v0], mesh.vertices[e.v1]
            epts = p0[None, :] + erule.points[:, None] * (p1 - p0)[None, :]
            esqrt = np.array([frame(chart, xq).sqrt_a for xq in epts])
            ew = erule.weights * e.length * esqrt
            ev = fe.eval(it, epts)
            diffs = [
                np.array([exact.u(xq)[0] for xq in epts]) - ev.u[0, 0],
                np.array([exact.u(xq)[1] for xq in epts]) - ev.u[1, 0],
                np.array([exact.w(xq) for xq in epts]) - ev.w[0],
            ]
            for m in range(spaces.k):
                s = erule.points**m
                smom_norm = np.sqrt(np.sum(ew * s * s))
                for d, scale_vals in zip(
                    diffs,
                    (
                        [exact.u(xq)[0] for xq in epts],
                        [exact.u(xq)[1] for xq in epts],
                        [exact.w(xq) for xq in epts],
                    ),
                ):
                    scale = max(
                        np.sqrt(np.sum(ew * np.asarray(scale_vals) ** 2)) * smom_norm,
                        1e-30,
                    )
                    worst = max(worst, abs(np.sum(ew * s * d)) / scale)
    return worst
