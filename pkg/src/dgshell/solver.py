"""Direct solution of the symmetric indefinite saddle-point system.

Small systems go through LAPACK's symmetric-indefinite factorization with
Bunch-Kaufman pivoting; larger ones through sparse LU.  A stability
diagnostic measures the smallest singular value of the block operator in
the epsilon-weighted triple norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

DENSE_THRESHOLD = 5000
RESIDUAL_TOL = 1e-10
STABILITY_SIZE_GUARD = 3000


class SolverError(Exception):
    """Raised when the factorization breaks down or the residual is bad."""


@dataclass
class SaddleSolution:
    """Solution coefficients and solve diagnostics."""

    x: np.ndarray  # displacement/rotation coefficients
    p: np.ndarray  # scaled stress coefficients
    residual_primal: float
    residual_dual: float
    method: str
    n_total: int


def block_matrix(system):
    """The full block operator [[A, B^T], [B, -eps^2 C]] as CSR."""
    eps2 = system.epsilon**2
    return sparse.bmat(
        [[system.A, system.B.T], [system.B, -eps2 * system.C]], format="csr"
    )


def solve(system, tol=RESIDUAL_TOL):
    """Solve the assembled saddle-point system.

    Raises
    ------
    SolverError
        On factorization breakdown (named probable causes: penalty constant
        too small, or no displacement constraints anywhere on the boundary)
        or when the relative residual exceeds ``tol``.
    """
    if system.epsilon <= 0:
        raise SolverError("thickness parameter must be positive")
    K = block_matrix(system)
    rhs = np.concatenate([system.f, system.g])
    n = K.shape[0]
    try:
        if n <= DENSE_THRESHOLD:
            method = "dense-bunch-kaufman"
            sol = dla.solve(K.toarray(), rhs, assume_a="sym")
        else:
            method = "sparse-lu"
            lu = spla.splu(K.tocsc())
            sol = lu.solve(rhs)
    except (dla.LinAlgError, np.linalg.LinAlgError, RuntimeError) as exc:
        raise SolverError(
            "factorization breakdown: the system is singular; probable causes "
            "are a penalty constant too small for coercivity or a boundary "
            "with no D or S portion (pure rigid-body kernel)"
        ) from exc
    if not np.all(np.isfinite(sol)):
        raise SolverError(
            "factorization produced non-finite values; the system is "
            "numerically singular (check the penalty constant and labels)"
        )
    x, p = sol[: system.n_h], sol[system.n_h:]
    res = K @ sol - rhs
    # residual relative to the load: a singular system solved "backward
    # stably" returns a huge vector whose residual is O(norm(rhs)), which a
    # backward-error denominator would hide
    scale = np.linalg.norm(rhs)
    res_p = np.linalg.norm(res[: system.n_h]) / max(scale, 1e-300)
    res_d = np.linalg.norm(res[system.n_h:]) / max(scale, 1e-300)
    rel = np.linalg.norm(res) / max(scale, 1e-300) if scale > 0 else np.linalg.norm(res)
    if rel > tol:
        raise SolverError(
            f"solver residual {rel:.3e} exceeds tolerance {tol:.1e}; the system "
            "is singular or severely ill-conditioned (probable causes: penalty "
            "constant too small, or no D/S boundary anywhere)"
        )
    return SaddleSolution(
        x=x, p=p, residual_primal=res_p, residual_dual=res_d,
        method=method, n_total=n,
    )


def _one_norm(K):
    return float(np.max(np.abs(K).sum(axis=0)))


def stability_constant(system, gram_h, gram_v, size_guard=STABILITY_SIZE_GUARD):
    """Smallest singular value of the block operator in the triple norm.

    The norm on the displacement slot is the broken-H1 Gram; on the stress
    slot it is the quadratic realization of (weak seminorm + eps * stress
    norm): q -> q^T (B G_H^{-1} B^T + eps^2 G_V) q, the weak part being the
    Riesz form of sup b(., q)/|.|_H.  The reported value is

        min_z ||L z||_{T^{-1}} / ||z||_T,   L = [[A, B^T], [-B, eps^2 C]],

    computed densely; systems above ``size_guard`` unknowns are refused.
    """
    n = system.n_h + system.n_v
    if n > size_guard:
        raise SolverError(
            f"stability diagnostic is dense-only: {n} unknowns exceed the "
            f"guard ({size_guard}); use a coarser mesh"
        )
    A = system.A.toarray()
    B = system.B.toarray()
    C = system.C.toarray()
    gh = gram_h.toarray()
    gv = gram_v.toarray()
    eps = system.epsilon
    gh_inv_bt = dla.solve(gh, B.T, assume_a="pos")
    weak = B @ gh_inv_bt
    gq = weak + eps**2 * gv
    gq = 0.5 * (gq + gq.T)
    L = np.block([[A, B.T], [-B, eps**2 * C]])
    T = dla.block_diag(gh, gq)
    T = 0.5 * (T + T.T)
    # T^{-1/2} L T^{-1/2} via Cholesky of T
    R = np.linalg.cholesky(T)
    M = dla.solve_triangular(R, dla.solve_triangular(R, L.T, lower=True).T, lower=True)
    svals = dla.svdvals(M)
    return float(svals[-1])
