import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from covparam.sparse import (
    CodeMode, SparseError, assign_atoms, build_supervision, classify, classify_batch,
    elastic_net_encode, lcksvd_train, omp,
)
from oracles import best_subset, coherence, elastic_net_oracle, incoherent_instance


def en_objective(D, s, x, t1, t2):
    return np.sum((s - D @ x) ** 2) + t1 * np.abs(x).sum() + t2 / 2 * x @ x


def unit_columns(rng, n, K):
    D = rng.standard_normal((n, K))
    return D / np.linalg.norm(D, axis=0)


def two_blobs(rng, d=10, n=40, spread=0.3):
    centres = 3 * rng.standard_normal((d, 2))
    S = np.hstack([centres[:, [c]] + spread * rng.standard_normal((d, n)) for c in range(2)])
    return S, np.repeat([0, 1], n)


class TestOmp:
    def test_single_atom(self, rng):
        D = unit_columns(rng, 8, 16)
        for T in (1, 2, 5):
            code = omp(D, 3 * D[:, 7], T)
            assert code.nnz == 1
            assert code.coeffs[7] == pytest.approx(3.0, rel=1e-12)
            assert code.residual_norms[-1] == pytest.approx(0.0, abs=1e-12)
            assert code.mode is CodeMode.HARD

    def test_orthogonal_input(self):
        D = np.eye(4)[:, :2]
        code = omp(D, np.array([0.0, 0.0, 1.0, 0.0]), 2)
        assert code.nnz == 0

    def test_zero_input(self, rng):
        assert omp(unit_columns(rng, 5, 6), np.zeros(5), 3).nnz == 0

    def test_errors(self, rng):
        D = unit_columns(rng, 5, 6)
        with pytest.raises(SparseError):
            omp(D, np.ones(5), 0)
        with pytest.raises(SparseError):
            omp(D, np.ones(5), 7)

    def test_tie_break_lowest_index(self):
        D = np.array([[1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        assert omp(D, np.array([2.0, 0.0]), 1).support == (0,)

    @pytest.mark.parametrize("seed", range(10))
    def test_recovers_sparse_support(self, seed):
        D, s, support = incoherent_instance(seed)
        code = omp(D, s, 3)
        assert set(code.support) == support == best_subset(D, s, 3)[0]
        assert code.residual_norms[-1] < 1e-8

    def test_random_gaussian_instance(self):
        rng = np.random.default_rng(3)
        D = unit_columns(rng, 20, 40)
        x0 = np.zeros(40)
        x0[[4, 17, 33]] = [1.5, -1.2, 1.8]
        code = omp(D, D @ x0, 3)
        assert set(code.support) == best_subset(D, D @ x0, 3)[0] == {4, 17, 33}

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), T=st.integers(1, 3), K=st.integers(4, 12))
    def test_properties(self, seed, T, K):
        rng = np.random.default_rng(seed)
        D = unit_columns(rng, 10, K)
        s = rng.standard_normal(10)
        code = omp(D, s, T)
        assert code.nnz <= T
        r = s - D @ code.coeffs
        # least-squares optimality on the chosen support
        assert np.all(np.abs(D[:, list(code.support)].T @ r) <= 1e-10 * max(1, np.linalg.norm(s)))
        assert np.all(np.diff(code.residual_norms) <= 1e-12)
        assert np.linalg.norm(r) ** 2 >= best_subset(D, s, T)[1] - 1e-10

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_exhaustive_when_incoherent(self, seed):
        rng = np.random.default_rng(seed)
        K, T = 12, 3
        Qm, _ = np.linalg.qr(rng.standard_normal((20, K)))
        D = Qm + 0.03 * rng.standard_normal((20, K))
        D /= np.linalg.norm(D, axis=0)
        assert coherence(D) < 0.3
        x = np.zeros(K)
        x[rng.choice(K, T, replace=False)] = rng.uniform(1, 2, T)
        s = D @ x
        r = s - D @ omp(D, s, T).coeffs
        assert r @ r == pytest.approx(best_subset(D, s, T)[1], abs=1e-10)


class TestElasticNet:
    def test_large_t1_kills_everything(self, rng):
        D = unit_columns(rng, 6, 9)
        s = rng.standard_normal(6)
        t1 = 2.0 * np.abs(D.T @ s).max() * 1.01
        assert elastic_net_encode(D, s, t1, 0.1).nnz == 0

    def test_orthogonal_design(self, rng):
        s = rng.standard_normal(8)
        t1 = 0.7
        x = elastic_net_encode(np.eye(8), s, t1, 0.0).coeffs
        expected = np.sign(s) * np.maximum(np.abs(s) - t1 / 2, 0.0)
        np.testing.assert_allclose(x, expected, rtol=0, atol=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_against_sign_pattern_oracle(self, seed):
        rng = np.random.default_rng(seed)
        D = unit_columns(rng, 4, 6)
        s = rng.standard_normal(4)
        t1, t2 = 0.3, 0.05
        code = elastic_net_encode(D, s, t1, t2)
        best, _ = elastic_net_oracle(D, s, t1, t2)
        assert en_objective(D, s, code.coeffs, t1, t2) == pytest.approx(best, abs=1e-6)
        assert code.kkt < 1e-8

    def test_objective_not_worse_than_zero(self, rng):
        D = unit_columns(rng, 10, 30)
        s = rng.standard_normal(10)
        x = elastic_net_encode(D, s).coeffs
        assert en_objective(D, s, x, 0.1, 0.01) <= s @ s

    def test_kkt_conditions(self, rng):
        D = unit_columns(rng, 10, 25)
        s = rng.standard_normal(10)
        t1, t2 = 0.2, 0.01
        x = elastic_net_encode(D, s, t1, t2).coeffs
        g = -2 * D.T @ (s - D @ x) + t2 * x
        nz = x != 0
        assert np.all(np.abs(g[nz] + t1 * np.sign(x[nz])) < 1e-8)
        assert np.all(np.abs(g[~nz]) <= t1 + 1e-8)

    def test_bad_parameters(self, rng):
        D = unit_columns(rng, 3, 4)
        with pytest.raises(SparseError):
            elastic_net_encode(D, np.ones(3), 0.0, 0.0)
        with pytest.raises(SparseError):
            elastic_net_encode(D, np.ones(3), -1.0, 0.1)

    def test_iteration_cap(self, rng):
        D = unit_columns(rng, 10, 40)
        with pytest.raises(SparseError):
            elastic_net_encode(D, rng.standard_normal(10), 1e-3, 0.0, max_iter=1)


class TestSupervision:
    def test_single_class(self):
        Q, H = build_supervision([0, 0, 0], [0, 0], 1)
        np.testing.assert_array_equal(Q, np.ones((2, 3)))
        np.testing.assert_array_equal(H, np.ones((1, 3)))

    def test_two_classes(self):
        Q, H = build_supervision([0, 1], assign_atoms(4, 2), 2)
        np.testing.assert_array_equal(Q, [[1, 0], [1, 0], [0, 1], [0, 1]])
        np.testing.assert_array_equal(H, [[1, 0], [0, 1]])

    def test_column_sums(self, rng):
        labels = rng.integers(0, 4, 30)
        _, H = build_supervision(labels, assign_atoms(9, 4), 4)
        np.testing.assert_array_equal(H.sum(axis=0), 1.0)

    def test_atom_assignment(self):
        np.testing.assert_array_equal(assign_atoms(7, 3), [0, 0, 0, 1, 1, 2, 2])
        with pytest.raises(SparseError):
            assign_atoms(2, 3)

    def test_label_range(self):
        with pytest.raises(SparseError):
            build_supervision([0, 3], [0, 1], 2)


class TestLcksvd:
    def test_plain_ksvd_monotone(self, rng):
        S = rng.standard_normal((8, 60))
        model = lcksvd_train(S, rng.integers(0, 2, 60), 16, 0.0, 0.0, 3, 15, seed=1)
        tr = model.objective_trace
        assert np.all(np.diff(tr) <= 1e-9)
        # with alpha = beta = 0 the trace is the reconstruction error
        X = np.array([omp(model.D, S[:, i], 3).coeffs for i in range(60)]).T
        assert np.linalg.norm(S - model.D @ X) ** 2 <= tr[0] + 1e-9

    def test_separable_classes(self, rng):
        S, y = two_blobs(rng)
        model = lcksvd_train(S, y, 20, 4.0, 4.0, 3, 20, seed=0)
        assert np.mean(classify_batch(model, S) == y) == 1.0
        np.testing.assert_allclose(np.linalg.norm(model.D, axis=0), 1.0, atol=1e-10)

    def test_objective_decreases(self, rng):
        S = rng.standard_normal((6, 50))
        y = rng.integers(0, 3, 50)
        model = lcksvd_train(S, y, 12, 1.0, 1.0, 2, 30, seed=2)
        tr = model.objective_trace
        assert tr.size == 30 and tr[-1] <= tr[0]
        assert np.all(np.diff(tr) <= 1e-9)

    def test_deterministic(self, rng):
        S, y = two_blobs(rng, n=12)
        a = lcksvd_train(S, y, 10, 25.0, 25.0, 1, 10, seed=7)
        b = lcksvd_train(S, y, 10, 25.0, 25.0, 1, 10, seed=7)
        for name in ("D", "A", "W", "objective_trace"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_preconditions(self, rng):
        S, y = two_blobs(rng, d=10, n=5)
        with pytest.raises(SparseError):
            lcksvd_train(S, y, 8, 1.0, 1.0, 1)
        with pytest.raises(SparseError):
            lcksvd_train(S, np.zeros(10, int), 12, 1.0, 1.0, 1, n_classes=2)
        with pytest.warns(UserWarning):
            lcksvd_train(S, y, 12, 1.0, 1.0, 1, 2)


class TestClassify:
    def test_zero_vector(self, rng):
        S, y = two_blobs(rng)
        model = lcksvd_train(S, y, 20, 4.0, 4.0, 3, 5, seed=0)
        label, scores = classify(model, np.zeros(10))
        assert label == 0
        np.testing.assert_array_equal(scores, 0.0)

    def test_scaling_max_row(self, rng):
        S, y = two_blobs(rng)
        model = lcksvd_train(S, y, 20, 4.0, 4.0, 3, 5, seed=0)
        s = S[:, 3]
        label, scores = classify(model, s)
        if scores[label] > 0:
            model.W[label] *= 3.0
            assert classify(model, s)[0] == label

    def test_batch_agrees(self, rng):
        S, y = two_blobs(rng)
        model = lcksvd_train(S, y, 20, 4.0, 4.0, 3, 5, seed=0)
        single = [classify(model, S[:, i])[0] for i in range(S.shape[1])]
        np.testing.assert_array_equal(classify_batch(model, S), single)
