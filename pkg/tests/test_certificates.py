"""Quadratic certificate evaluation: values, gradients, Hessians, class-K
gains, and the stacked-gradient helper."""
import numpy as np
import pytest

from clfcbf import CertificateSet, ClassKappa, QuadraticCertificate
from clfcbf.errors import DimensionMismatchError, InvalidParameterError


def fd_gradient(fn, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def test_barrier_value_gradient_hessian_hand_case():
    # h(x) = ||x - (2,0)||^2 - 1: h(3,0) = 0, grad = 2(x - c), hess = 2I.
    cbf = QuadraticCertificate.barrier(
        shape=np.eye(2), center=np.array([2.0, 0.0]), offset=-1.0
    )
    x = np.array([3.0, 0.0])
    assert cbf.value(x) == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(cbf.gradient(x), [2.0, 0.0])
    assert np.allclose(cbf.hessian(x), 2.0 * np.eye(2))


def test_clf_value_gradient_hessian_hand_case():
    # V(x) = 0.5 ||x||^2 via shape 0.5 I: V(3,0) = 4.5, grad = x, hess = I.
    clf = QuadraticCertificate.clf(shape=0.5 * np.eye(2), center=np.zeros(2))
    x = np.array([3.0, 0.0])
    assert clf.value(x) == pytest.approx(4.5)
    assert np.allclose(clf.gradient(x), x)
    assert np.allclose(clf.hessian(x), np.eye(2))


def test_gradient_matches_finite_differences_random():
    rng = np.random.default_rng(23)
    for _ in range(30):
        n = int(rng.integers(1, 5))
        B = rng.standard_normal((n, n))
        shape = 0.5 * (B + B.T)
        center = rng.standard_normal(n)
        cert = QuadraticCertificate.barrier(shape=shape, center=center, offset=-1.0)
        x = rng.standard_normal(n)
        g = cert.gradient(x)
        g_fd = fd_gradient(cert.value, x)
        assert np.allclose(g, g_fd, atol=1e-6)
        assert np.allclose(cert.hessian(x), shape + shape.T, atol=1e-12)


def test_clf_requires_positive_definite_shape():
    with pytest.raises(InvalidParameterError):
        QuadraticCertificate.clf(shape=np.diag([1.0, -1.0]), center=np.zeros(2))


def test_clf_vanishes_only_at_center():
    clf = QuadraticCertificate.clf(
        shape=np.diag([1.0, 3.0, 1.0]), center=np.array([0.5, 0.0, -1.0])
    )
    assert clf.value(np.array([0.5, 0.0, -1.0])) == pytest.approx(0.0, abs=1e-15)
    rng = np.random.default_rng(3)
    for _ in range(20):
        x = clf.center + rng.standard_normal(3)
        if np.linalg.norm(x - clf.center) > 1e-8:
            assert clf.value(x) > 0.0


def test_class_kappa_linear_gain():
    gamma = ClassKappa(0.25)
    assert gamma.value(0.0) == 0.0
    assert gamma.value(4.0) == pytest.approx(1.0)
    assert gamma.slope(4.0) == pytest.approx(0.25)
    with pytest.raises(InvalidParameterError):
        ClassKappa(0.0)
    with pytest.raises(InvalidParameterError):
        ClassKappa(-1.0)


def make_set():
    return CertificateSet(
        cbfs=(
            QuadraticCertificate.barrier(
                shape=np.eye(2), center=np.array([2.0, 0.0]), offset=-1.0
            ),
            QuadraticCertificate.barrier(
                shape=np.eye(2), center=np.array([0.0, 3.0]), offset=-1.0
            ),
        ),
        alphas=(ClassKappa(1.0), ClassKappa(2.0)),
        clf=QuadraticCertificate.clf(shape=0.5 * np.eye(2), center=np.zeros(2)),
        gamma=ClassKappa(1.0),
    )


def test_certificate_set_accessors():
    cs = make_set()
    x = np.array([3.0, 0.0])
    assert cs.clf_value(x) == pytest.approx(4.5)
    assert np.allclose(cs.clf_gradient(x), x)
    assert np.allclose(cs.clf_hessian(), np.eye(2))
    assert cs.gamma_value(4.5) == pytest.approx(4.5)
    assert cs.gamma_slope(4.5) == pytest.approx(1.0)
    h = cs.barrier_values(x)
    assert h.shape == (2,)
    assert h[0] == pytest.approx(0.0, abs=1e-14)
    assert h[1] == pytest.approx(17.0)
    assert np.allclose(cs.alpha_vector(x), [h[0], 2.0 * h[1]])
    assert np.allclose(cs.alpha_slopes(x), [1.0, 2.0])
    assert np.allclose(cs.alpha_slopes(x, indices=[2]), [2.0])


def test_stacked_gradients_order_and_subset():
    cs = make_set()
    x = np.array([3.0, 0.0])
    # Columns follow barrier indexing (1-based certificate ids).
    U_all = cs.stacked_gradients(x)
    assert U_all.shape == (2, 2)
    assert np.allclose(U_all[:, 0], cs.barrier(1).gradient(x))
    assert np.allclose(U_all[:, 1], cs.barrier(2).gradient(x))
    U_2 = cs.stacked_gradients(x, indices=[2])
    assert U_2.shape == (2, 1)
    assert np.allclose(U_2[:, 0], cs.barrier(2).gradient(x))


def test_certificate_set_requires_matching_alpha_count():
    with pytest.raises(DimensionMismatchError):
        CertificateSet(
            cbfs=(
                QuadraticCertificate.barrier(
                    shape=np.eye(2), center=np.zeros(2), offset=-1.0
                ),
            ),
            alphas=(ClassKappa(1.0), ClassKappa(1.0)),
        )


def test_clf_without_gamma_rejected():
    with pytest.raises(InvalidParameterError):
        CertificateSet(
            cbfs=(
                QuadraticCertificate.barrier(
                    shape=np.eye(2), center=np.zeros(2), offset=-1.0
                ),
            ),
            alphas=(ClassKappa(1.0),),
            clf=QuadraticCertificate.clf(shape=np.eye(2), center=np.zeros(2)),
            gamma=None,
        )
