"""Strain measures and the elastic/compliance tensor algebra.

The three shell strains (bending, membrane, transverse shear) are evaluated
from raw parameter-space values and gradients of the rotation and
displacement components; covariant derivatives are applied internally so
basis code stays geometry-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import cov_deriv_covector


@dataclass(frozen=True)
class ElasticModuli:
    """Constant Lame coefficients and shear correction factor.

    kappa defaults to 1; the conventional 5/6 is available by configuration.
    """

    lam: float
    mu: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")


@dataclass(frozen=True)
class StrainSet:
    """Pointwise strains: bending rho_{ab}, membrane gamma_{ab}, shear tau_a."""

    rho: np.ndarray
    gamma: np.ndarray
    tau: np.ndarray


def strains(frm, theta, grad_theta, u, grad_u, w, grad_w):
    """Bending, membrane and shear strains at one point.

    Parameters are covariant components and their parameter-space partials:
    ``grad_theta[a, b]`` = d_b theta_a, and likewise for ``grad_u``;
    ``grad_w`` is the gradient of the scalar w.
    """
    theta_cd = cov_deriv_covector(frm, np.asarray(theta, float), np.asarray(grad_theta, float))
    u_cd = cov_deriv_covector(frm, np.asarray(u, float), np.asarray(grad_u, float))
    b_mix = frm.b_mixed  # b_mixed[g, a] = b^g_a
    bu = np.einsum("ga,gb->ab", b_mix, u_cd)  # b_a^g u_{g|b}
    rho = (
        0.5 * (theta_cd + theta_cd.T)
        - 0.5 * (bu + bu.T)
        + frm.c_cov * float(w)
    )
    gamma = 0.5 * (u_cd + u_cd.T) - frm.b_cov * float(w)
    tau = np.asarray(grad_w, float) + b_mix.T @ np.asarray(u, float) + np.asarray(theta, float)
    return StrainSet(rho=rho, gamma=gamma, tau=tau)


def elastic_tensor(frm, moduli):
    """Fourth-order contravariant elastic tensor a^{abgd} as a (2,2,2,2) array."""
    a = frm.a_con
    mu, lam = moduli.mu, moduli.lam
    plane = 2.0 * mu * lam / (2.0 * mu + lam)
    return (
        mu * (np.einsum("ag,bd->abgd", a, a) + np.einsum("bg,ad->abgd", a, a))
        + plane * np.einsum("ab,gd->abgd", a, a)
    )


def compliance_tensor(frm, moduli):
    """Fourth-order covariant compliance tensor a_{abgd} (inverse operator)."""
    a = frm.a_cov
    mu, lam = moduli.mu, moduli.lam
    trace_coef = lam / (2.0 * mu + 3.0 * lam)
    return (1.0 / (2.0 * mu)) * (
        0.5 * (np.einsum("ad,bg->abgd", a, a) + np.einsum("bd,ag->abgd", a, a))
        - trace_coef * np.einsum("ab,gd->abgd", a, a)
    )


def elastic_apply(frm, moduli, gamma):
    """Contravariant stress sigma^{ab} = a^{abgd} gamma_{gd}."""
    return np.einsum("abgd,gd->ab", elastic_tensor(frm, moduli), np.asarray(gamma, float))


def compliance_apply(frm, moduli, sigma):
    """Covariant strain gamma_{ab} = a_{abgd} sigma^{gd}."""
    return np.einsum("abgd,gd->ab", compliance_tensor(frm, moduli), np.asarray(sigma, float))


# Symmetric 2x2 tensors are packed as (t11, t22, t12) in local assembly.
# ``elastic_matrix`` maps packed strain to packed stress; ``elastic_pairing``
# realizes the full double contraction a^{abgd} x_{gd} y_{ab} as y^T M x,
# which needs the off-diagonal double counting.


def _pack_fourth_order(t):
    m = np.empty((3, 3))
    idx = ((0, 0), (1, 1), (0, 1))
    for r, (a, b) in enumerate(idx):
        for c, (g, d) in enumerate(idx):
            m[r, c] = t[a, b, g, d]
    return m


def elastic_matrix(frm, moduli):
    """(3,3) map from packed symmetric strain to packed stress components."""
    m = _pack_fourth_order(elastic_tensor(frm, moduli))
    m[:, 2] *= 2.0  # gamma_12 and gamma_21 both contribute
    return m


def elastic_pairing(frm, moduli):
    """(3,3) matrix of the contraction a^{abgd} x_{gd} y_{ab} on packed tensors."""
    m = elastic_matrix(frm, moduli)
    m[2, :] *= 2.0  # the (a,b)=(1,2) and (2,1) rows coincide
    return m


def compliance_pairing(frm, moduli):
    """(3,3) matrix of a_{abgd} M^{gd} N^{ab} on packed contravariant tensors."""
    m = _pack_fourth_order(compliance_tensor(frm, moduli))
    m[:, 2] *= 2.0
    m[2, :] *= 2.0
    return m
