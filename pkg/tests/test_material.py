import numpy as np
import pytest

from dgshell.geometry import Cylinder, FlatPlate, HyperbolicParaboloid, frame
from dgshell.material import (
    ElasticModuli,
    compliance_apply,
    compliance_pairing,
    elastic_apply,
    elastic_matrix,
    elastic_pairing,
    strains,
)

CHARTS = [FlatPlate(), Cylinder(1.0), HyperbolicParaboloid(1.0)]


def flat_rigid_motion(omega, t, x):
    """In-surface rigid motion of the flat plate in shell variables.

    Midsurface displacement T + omega x position, with the normal-fiber
    rotation that keeps the shear strain zero; all three strains vanish.
    """
    x1, x2 = x
    u = np.array([t[0] - omega[2] * x2, t[1] + omega[2] * x1])
    grad_u = np.array([[0.0, -omega[2]], [omega[2], 0.0]])
    w = t[2] + omega[0] * x2 - omega[1] * x1
    grad_w = np.array([-omega[1], omega[0]])
    theta = np.array([omega[1], -omega[0]])
    grad_theta = np.zeros((2, 2))
    return theta, grad_theta, u, grad_u, w, grad_w


def test_flat_plate_inplane_rotation_is_strain_free():
    f = frame(FlatPlate(), (0.3, 0.4))
    s = strains(
        f,
        theta=np.zeros(2),
        grad_theta=np.zeros((2, 2)),
        u=np.array([0.4, -0.3]),  # u = (x2, -x1) at this point
        grad_u=np.array([[0.0, 1.0], [-1.0, 0.0]]),
        w=0.0,
        grad_w=np.zeros(2),
    )
    assert np.allclose(s.rho, 0) and np.allclose(s.gamma, 0) and np.allclose(s.tau, 0)


def test_flat_plate_normal_translation_is_strain_free():
    f = frame(FlatPlate(), (0.1, 0.9))
    s = strains(
        f, np.zeros(2), np.zeros((2, 2)), np.zeros(2), np.zeros((2, 2)), 1.0, np.zeros(2)
    )
    assert np.allclose(s.rho, 0) and np.allclose(s.gamma, 0) and np.allclose(s.tau, 0)


def test_cylinder_normal_translation_strains():
    # geometry oracle gives b_11 = -1 and c_11 = 1 on the unit cylinder
    f = frame(Cylinder(1.0), (0.7, 0.2))
    s = strains(
        f, np.zeros(2), np.zeros((2, 2)), np.zeros(2), np.zeros((2, 2)), 1.0, np.zeros(2)
    )
    assert s.gamma[0, 0] == pytest.approx(1.0)  # -b_11 * w
    assert np.allclose(s.tau, 0.0)
    assert s.rho[0, 0] == pytest.approx(1.0)  # c_11 * w
    assert abs(s.gamma[0, 1]) < 1e-14 and abs(s.gamma[1, 1]) < 1e-14


def test_rigid_body_motions_of_flat_plate_are_strain_free():
    rng = np.random.default_rng(5)
    f_at = lambda x: frame(FlatPlate(), x)
    for _ in range(6):
        omega = rng.normal(size=3)
        t = rng.normal(size=3)
        x = rng.uniform(-1, 1, 2)
        s = strains(f_at(x), *flat_rigid_motion(omega, t, x))
        assert np.allclose(s.rho, 0, atol=1e-14)
        assert np.allclose(s.gamma, 0, atol=1e-14)
        assert np.allclose(s.tau, 0, atol=1e-14)


def test_flat_symmetric_gradient_equals_membrane_strain():
    f = frame(FlatPlate(), (0.2, 0.8))
    rng = np.random.default_rng(9)
    u = rng.normal(size=2)
    grad_u = rng.normal(size=(2, 2))
    s = strains(f, np.zeros(2), np.zeros((2, 2)), u, grad_u, 0.0, np.zeros(2))
    assert np.allclose(s.gamma, 0.5 * (grad_u + grad_u.T), atol=1e-14)


def test_elastic_apply_pure_shear_modulus():
    f = frame(FlatPlate(), (0.0, 0.0))
    sigma = elastic_apply(f, ElasticModuli(lam=0.0, mu=1.0), np.eye(2))
    assert np.allclose(sigma, 2.0 * np.eye(2), atol=1e-14)


def test_elastic_apply_with_plane_stress_trace_term():
    # closed form with identity metric: sigma = 2 mu gamma + (2 mu lam /
    # (2 mu + lam)) tr(gamma) I; for lam = mu = 1, gamma = I this is (10/3) I
    f = frame(FlatPlate(), (0.0, 0.0))
    sigma = elastic_apply(f, ElasticModuli(lam=1.0, mu=1.0), np.eye(2))
    expected = 2.0 * np.eye(2) + (2.0 / 3.0) * 2.0 * np.eye(2)
    assert np.allclose(sigma, expected, atol=1e-14)
    assert sigma[0, 0] == pytest.approx(10.0 / 3.0)


def test_compliance_inverts_elastic_both_orders():
    rng = np.random.default_rng(17)
    moduli = ElasticModuli(lam=1.7, mu=0.8)
    for chart in CHARTS:
        for _ in range(100):
            f = frame(chart, rng.uniform(-1, 1, 2))
            g = rng.normal(size=(2, 2))
            g = g + g.T
            back = compliance_apply(f, moduli, elastic_apply(f, moduli, g))
            assert np.max(np.abs(back - g)) <= 1e-12 * max(1.0, np.max(np.abs(g)))
            s = rng.normal(size=(2, 2))
            s = s + s.T
            fwd = elastic_apply(f, moduli, compliance_apply(f, moduli, s))
            assert np.max(np.abs(fwd - s)) <= 1e-12 * max(1.0, np.max(np.abs(s)))


def test_tensor_positivity_on_random_tensors():
    rng = np.random.default_rng(23)
    moduli = ElasticModuli(lam=2.0, mu=1.0)
    for chart in CHARTS:
        f = frame(chart, rng.uniform(-0.9, 0.9, 2))
        for _ in range(50):
            g = rng.normal(size=(2, 2))
            g = g + g.T
            if np.max(np.abs(g)) < 1e-12:
                continue
            quad = np.einsum("ab,ab->", elastic_apply(f, moduli, g), g)
            assert quad > 0
            s = rng.normal(size=(2, 2))
            s = s + s.T
            quad_c = np.einsum("ab,ab->", compliance_apply(f, moduli, s), s)
            assert quad_c > 0


def test_packed_pairings_match_full_contraction():
    rng = np.random.default_rng(31)
    moduli = ElasticModuli(lam=1.3, mu=0.6, kappa=5.0 / 6.0)
    f = frame(HyperbolicParaboloid(1.0), (0.4, 0.3))
    x = rng.normal(size=(2, 2))
    x = x + x.T
    y = rng.normal(size=(2, 2))
    y = y + y.T
    pack = lambda t: np.array([t[0, 0], t[1, 1], t[0, 1]])
    full = np.einsum("ab,ab->", elastic_apply(f, moduli, x), y)
    packed = pack(y) @ elastic_pairing(f, moduli) @ pack(x)
    assert full == pytest.approx(packed, rel=1e-13)
    sig = elastic_apply(f, moduli, x)
    assert np.allclose(
        elastic_matrix(f, moduli) @ pack(x), pack(sig), atol=1e-13
    )
    full_c = np.einsum("ab,ab->", compliance_apply(f, moduli, x), y)
    packed_c = pack(y) @ compliance_pairing(f, moduli) @ pack(x)
    assert full_c == pytest.approx(packed_c, rel=1e-13)


def test_moduli_validation():
    with pytest.raises(ValueError):
        ElasticModuli(lam=1.0, mu=0.0)
    with pytest.raises(ValueError):
        ElasticModuli(lam=-0.1, mu=1.0)
    with pytest.raises(ValueError):
        ElasticModuli(lam=1.0, mu=1.0, kappa=0.0)
    assert ElasticModuli(lam=0.0, mu=2.0).kappa == 1.0
