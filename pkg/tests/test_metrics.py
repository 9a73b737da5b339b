import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_pd
from covparam.descriptor import CovarianceDescriptor
from covparam.metrics import MetricError, airm, euclid_dist, lerm, logdet_div, pairwise
from covparam.parameterization import EuclidRep, Kind, parameterize


def logm_eig(X):
    # independent oracle: scipy's general-purpose logm
    from scipy.linalg import logm
    return np.real(logm(X))


def rep(C, kind="chol"):
    return parameterize(CovarianceDescriptor(np.asarray(C, float), np.zeros(len(C)), 2),
                        kind, fuse=False)


def conditioned(rng, d):
    A = rng.standard_normal((d, d))
    U, _, Vt = np.linalg.svd(A)
    return U @ np.diag(rng.uniform(0.5, 2.0, d)) @ Vt


class TestAirm:
    def test_self(self, rng):
        X = random_pd(rng, 6)
        assert airm(X, X) == pytest.approx(0.0, abs=1e-10)

    def test_diagonal(self):
        assert airm(np.diag([4.0, 1.0]), np.eye(2)) == pytest.approx(np.log(4.0), rel=1e-12)

    def test_matches_matrix_root_form(self, rng):
        X, Y = random_pd(rng, 5), random_pd(rng, 5)
        w, V = np.linalg.eigh(X)
        Xm = (V / np.sqrt(w)) @ V.T
        expected = np.linalg.norm(logm_eig(Xm @ Y @ Xm))
        assert airm(X, Y) == pytest.approx(expected, rel=1e-9)

    def test_affine_invariance(self, rng):
        for _ in range(20):
            X, Y = random_pd(rng, 5), random_pd(rng, 5)
            A = conditioned(rng, 5)
            assert airm(A @ X @ A.T, A @ Y @ A.T) == pytest.approx(airm(X, Y), abs=1e-8)

    def test_symmetric(self, rng):
        X, Y = random_pd(rng, 4), random_pd(rng, 4)
        assert airm(X, Y) == pytest.approx(airm(Y, X), abs=1e-10)


class TestLerm:
    def test_self(self, rng):
        X = random_pd(rng, 6)
        assert lerm(X, X) == 0.0

    def test_diagonal(self):
        assert lerm(np.diag([np.e ** 2, 1.0]), np.eye(2)) == pytest.approx(2.0, rel=1e-12)

    def test_against_logm(self, rng):
        X, Y = random_pd(rng, 5), random_pd(rng, 5)
        expected = np.linalg.norm(logm_eig(X) - logm_eig(Y))
        assert lerm(X, Y) == pytest.approx(expected, rel=1e-9)

    def test_symmetric(self, rng):
        X, Y = random_pd(rng, 4), random_pd(rng, 4)
        assert lerm(X, Y) == pytest.approx(lerm(Y, X), abs=1e-10)


class TestLogDet:
    def test_self(self, rng):
        X = random_pd(rng, 6)
        assert logdet_div(X, X) == pytest.approx(0.0, abs=1e-10)

    def test_scalar_reduction(self):
        expected = 3 * (2.0 - np.log(2.0) - 1.0)
        assert logdet_div(2 * np.eye(3), np.eye(3)) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.9206, abs=1e-4)

    def test_eigen_oracle_and_asymmetry(self, rng):
        X, Y = random_pd(rng, 5), random_pd(rng, 5)
        t = np.linalg.eigvals(X @ np.linalg.inv(Y)).real
        expected = np.sum(t - np.log(t) - 1)
        assert logdet_div(X, Y) == pytest.approx(expected, abs=1e-8)
        assert logdet_div(X, Y) >= 0
        assert abs(logdet_div(X, Y) - logdet_div(Y, X)) > 1e-6


class TestEuclid:
    def test_self(self, rng):
        a = rep(random_pd(rng, 4))
        assert euclid_dist(a, a) == 0.0

    def test_chol_hand(self):
        assert euclid_dist(rep(np.eye(2)), rep(4 * np.eye(2))) == pytest.approx(np.sqrt(2), rel=1e-15)

    def test_mismatch(self, rng):
        C = random_pd(rng, 3)
        with pytest.raises(MetricError):
            euclid_dist(rep(C, "chol"), rep(C, "sphere"))
        a = EuclidRep(Kind.CHOL, 3, np.zeros(9), True, 1.0)
        b = EuclidRep(Kind.CHOL, 3, np.zeros(9), True, 2.0)
        with pytest.raises(MetricError):
            euclid_dist(a, b)


@pytest.mark.parametrize("fn", [airm, lerm, logdet_div])
def test_rejects_bad_input(fn):
    with pytest.raises(MetricError):
        fn(np.eye(3), np.eye(2))
    with pytest.raises(MetricError):
        fn(np.diag([1.0, -1.0]), np.eye(2))
    with pytest.raises(MetricError):
        fn(np.array([[1.0, 0.5], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(MetricError):
        fn(np.eye(2), np.diag([1.0, 0.0]))


def test_lerm_rejects_tiny_eigenvalue():
    with pytest.raises(MetricError):
        lerm(np.diag([1.0, 1e-14]), np.eye(2))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 7))
def test_triangle_inequality(seed, d):
    rng = np.random.default_rng(seed)
    X, Y, Z = (random_pd(rng, d) for _ in range(3))
    assert lerm(X, Z) <= lerm(X, Y) + lerm(Y, Z) + 1e-10
    for kind in ("chol", "sphere"):
        a, b, c = rep(X, kind), rep(Y, kind), rep(Z, kind)
        assert euclid_dist(a, c) <= euclid_dist(a, b) + euclid_dist(b, c) + 1e-10
        assert euclid_dist(a, b) == pytest.approx(euclid_dist(b, a), abs=1e-10)


def test_pairwise(rng):
    mats = [random_pd(rng, 3) for _ in range(4)]
    for metric in ("airm", "lerm", "logdet"):
        D = pairwise(mats, mats, metric)
        assert D.shape == (4, 4)
        np.testing.assert_allclose(np.diag(D), 0.0, atol=1e-10)
    D = pairwise(mats, mats, "lerm")
    assert D[1, 2] == pytest.approx(lerm(mats[1], mats[2]), rel=1e-12)
