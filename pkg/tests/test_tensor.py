"""CP decomposition, Tucker core fit, core consistency, and embeddings."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fitforge.errors import NotFoundError, UndefinedSimilarityError
from fitforge.routes import kmeans_fit, route_signature
from fitforge.tensor import (
    CONTEXT_FEATURES,
    CPFactors,
    build_context_tensor,
    core_consistency,
    cosine_similarity,
    cp_als,
    embedding_lookup,
    khatri_rao,
    mode_product,
    rank_sweep,
    tucker_core,
    unfold,
)

from conftest import make_record


def rank_r_tensor(shape, rank, seed):
    """Exact rank-r tensor built by an explicit outer-product sum."""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(shape[0], rank))
    b = rng.normal(size=(shape[1], rank))
    c = rng.normal(size=(shape[2], rank))
    tensor = np.zeros(shape)
    for r in range(rank):
        for i in range(shape[0]):
            for j in range(shape[1]):
                for k in range(shape[2]):
                    tensor[i, j, k] += a[i, r] * b[j, r] * c[k, r]
    return tensor, (a, b, c)


class TestKhatriRao:
    def test_all_ones(self):
        out = khatri_rao(np.ones((1, 3)), np.ones((1, 3)))
        np.testing.assert_array_equal(out, np.ones((1, 3)))

    def test_hand_kronecker(self):
        m = np.array([[1.0], [2.0]])
        n = np.array([[3.0], [4.0]])
        np.testing.assert_array_equal(khatri_rao(m, n)[:, 0], [3.0, 4.0, 6.0, 8.0])

    def test_column_mismatch(self):
        with pytest.raises(ValueError):
            khatri_rao(np.ones((2, 2)), np.ones((3, 3)))

    @settings(max_examples=25, deadline=None)
    @given(
        j=st.integers(1, 5), k=st.integers(1, 5), r=st.integers(1, 4),
        seed=st.integers(0, 2**31),
    )
    def test_matches_numpy_kron_per_column(self, j, k, r, seed):
        rng = np.random.default_rng(seed)
        m, n = rng.normal(size=(j, r)), rng.normal(size=(k, r))
        out = khatri_rao(m, n)
        for col in range(r):
            np.testing.assert_allclose(out[:, col], np.kron(m[:, col], n[:, col]), atol=1e-12)

    def test_unfolding_identity(self):
        # unfold(X, 0) == A @ khatri_rao(B, C).T for a CP-structured tensor
        tensor, (a, b, c) = rank_r_tensor((3, 4, 2), 2, seed=5)
        np.testing.assert_allclose(unfold(tensor, 0), a @ khatri_rao(b, c).T, atol=1e-12)
        np.testing.assert_allclose(unfold(tensor, 1), b @ khatri_rao(a, c).T, atol=1e-12)
        np.testing.assert_allclose(unfold(tensor, 2), c @ khatri_rao(a, b).T, atol=1e-12)


class TestCpAls:
    def test_rank1_all_ones(self):
        tensor = np.ones((3, 4, 5))
        factors = cp_als(tensor, rank=1, seed=0)
        assert factors.fit_history[-1] < 1e-10
        assert factors.lam[0] == pytest.approx(np.sqrt(3 * 4 * 5))

    def test_exact_rank2_recovery(self):
        tensor, _ = rank_r_tensor((6, 5, 4), 2, seed=0)
        factors = cp_als(tensor, rank=2, max_sweeps=500, tol=1e-12, seed=1)
        assert factors.fit_history[-1] < 1e-8

    def test_fit_history_non_increasing(self):
        rng = np.random.default_rng(7)
        tensor = rng.normal(size=(5, 6, 4))
        factors = cp_als(tensor, rank=3, max_sweeps=60, tol=0.0, seed=2)
        fits = factors.fit_history
        assert all(fits[i + 1] <= fits[i] + 1e-10 for i in range(len(fits) - 1))

    def test_unit_norm_columns_and_nonnegative_lam(self):
        rng = np.random.default_rng(8)
        tensor = rng.normal(size=(4, 5, 3))
        factors = cp_als(tensor, rank=2, max_sweeps=40, seed=3)
        for mat in (factors.A, factors.B, factors.C):
            np.testing.assert_allclose(np.linalg.norm(mat, axis=0), 1.0, atol=1e-12)
        assert np.all(factors.lam >= 0)

    def test_reconstruction_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(9)
        tensor = rng.normal(size=(4, 5, 5))
        factors = cp_als(tensor, rank=3, max_sweeps=30, seed=4)
        fast = factors.reconstruct()
        slow = np.zeros_like(tensor)
        for r in range(3):
            for i in range(4):
                for j in range(5):
                    for k in range(5):
                        slow[i, j, k] += factors.lam[r] * factors.A[i, r] * factors.B[j, r] * factors.C[k, r]
        np.testing.assert_allclose(fast, slow, atol=1e-10)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            cp_als(np.ones((2, 2, 2)), rank=0)
        bad = np.ones((2, 2, 2))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            cp_als(bad, rank=1)


class TestTuckerCore:
    def test_exact_factors_give_superdiagonal_lam(self):
        tensor, _ = rank_r_tensor((6, 5, 4), 2, seed=3)
        factors = cp_als(tensor, rank=2, max_sweeps=400, tol=1e-13, seed=1)
        core = tucker_core(tensor, factors.A, factors.B, factors.C)
        ideal = np.zeros((2, 2, 2))
        ideal[np.arange(2), np.arange(2), np.arange(2)] = factors.lam
        np.testing.assert_allclose(core.values, ideal, atol=1e-6)
        assert core.residual < 1e-8

    def test_rank1_core_is_normal_equation_solution(self):
        rng = np.random.default_rng(4)
        tensor = rng.normal(size=(2, 2, 2))
        a, b, c = rng.normal(size=(2, 1)), rng.normal(size=(2, 1)), rng.normal(size=(2, 1))
        core = tucker_core(tensor, a, b, c)
        outer = np.einsum("ir,jr,kr->ijk", a, b, c)[:, :, :]
        expected = float((tensor * outer).sum() / (outer**2).sum())
        assert core.values[0, 0, 0] == pytest.approx(expected, rel=1e-10)

    def test_dimension_mismatch(self):
        tensor = np.ones((3, 4, 5))
        with pytest.raises(ValueError):
            tucker_core(tensor, np.ones((2, 1)), np.ones((4, 1)), np.ones((5, 1)))

    @settings(max_examples=20, deadline=None)
    @given(
        i=st.integers(2, 5), j=st.integers(2, 5), k=st.integers(2, 5),
        r=st.integers(1, 3), seed=st.integers(0, 2**31),
    )
    def test_matches_dense_least_squares(self, i, j, k, r, seed):
        # explicit design-matrix solve of vec(X) ~ (C x B x A) vec(G)
        rng = np.random.default_rng(seed)
        tensor = rng.normal(size=(i, j, k))
        a, b, c = rng.normal(size=(i, r)), rng.normal(size=(j, r)), rng.normal(size=(k, r))
        core = tucker_core(tensor, a, b, c)
        design = np.kron(np.kron(c, b), a)
        vec_g, *_ = np.linalg.lstsq(design, tensor.reshape(-1, order="F"), rcond=None)
        np.testing.assert_allclose(core.values.reshape(-1, order="F"), vec_g, atol=1e-8)

    def test_rank_deficient_solved_by_pseudoinverse(self):
        rng = np.random.default_rng(11)
        tensor = rng.normal(size=(3, 3, 3))
        a = np.zeros((3, 2))
        a[:, 0] = rng.normal(size=3)  # second column identically zero
        b, c = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        core = tucker_core(tensor, a, b, c)
        design = np.kron(np.kron(c, b), a)
        vec_g, *_ = np.linalg.lstsq(design, tensor.reshape(-1, order="F"), rcond=None)
        np.testing.assert_allclose(core.values.reshape(-1, order="F"), vec_g, atol=1e-8)


class TestCoreConsistency:
    def test_exact_superdiagonal_scores_100(self):
        core = np.zeros((3, 3, 3))
        core[np.arange(3), np.arange(3), np.arange(3)] = 1.0
        assert core_consistency(core, 3) == pytest.approx(100.0)

    def test_all_zero_core_scores_zero(self):
        assert core_consistency(np.zeros((4, 4, 4)), 4) == pytest.approx(0.0)

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(12)
        for rank in (2, 3, 5):
            core = rng.normal(size=(rank, rank, rank))
            total = 0.0
            for l in range(rank):
                for m in range(rank):
                    for n in range(rank):
                        ref = 1.0 if l == m == n else 0.0
                        total += (core[l, m, n] - ref) ** 2
            expected = 100.0 * (1.0 - total / rank)
            assert core_consistency(core, rank) == pytest.approx(expected, rel=1e-12)
            assert core_consistency(core, rank) <= 100.0


class TestRankSweep:
    def test_selects_true_rank(self):
        tensor, _ = rank_r_tensor((6, 5, 4), 2, seed=0)
        report = rank_sweep(tensor, [2, 3, 4], seed=1)
        by_rank = {rank: cc for rank, cc, _ in report.entries}
        assert by_rank[2] >= 99.0
        assert by_rank[3] < by_rank[2]
        assert by_rank[4] < by_rank[2]
        assert report.selected_rank == 2

    def test_single_rank(self):
        tensor, _ = rank_r_tensor((4, 4, 3), 2, seed=2)
        report = rank_sweep(tensor, [3], seed=0)
        assert report.selected_rank == 3

    def test_tie_prefers_smaller_rank(self):
        report_entries = [(2, 100.0, 0.0), (3, 100.0, 0.0)]
        best = min(report_entries, key=lambda e: (-e[1], e[0]))[0]
        assert best == 2


class TestContextTensor:
    def _cluster_model(self, records):
        sigs = np.stack([route_signature(r, 8) for r in records])
        return kmeans_fit(sigs, k=min(3, np.unique(sigs, axis=0).shape[0]), seed=0)

    def test_single_workout_cell_is_raw_feature_vector(self):
        record = make_record(distance=[0.0, 1.0, 2.0, 3.0, 4.0])
        model = self._cluster_model([record])
        tensor = build_context_tensor([record], model, 8)
        assert tensor.populated.sum() == 1
        cluster = int(tensor.populated[0].nonzero()[0][0])
        cell = tensor.raw_values[0, cluster]
        # hand-derived: gender male=1; run one-hot; count 1; duration
        # = 4 x (1 km / 10 km/h) = 0.4 h; total 4 km; speed 10; HR 140
        np.testing.assert_allclose(cell, [1.0, 1.0, 0.0, 0.0, 1.0, 0.4, 4.0, 10.0, 140.0])

    def test_mean_of_two_workouts(self):
        rec_a = make_record(workout_id="a", distance=np.linspace(0, 4.0, 5))
        rec_b = make_record(workout_id="b", distance=np.linspace(0, 6.0, 5))
        model = self._cluster_model([rec_a, rec_b])
        # both records share one route geometry -> one populated cell
        tensor = build_context_tensor([rec_a, rec_b], model, 8)
        assert tensor.populated.sum() == 1
        cluster = int(tensor.populated[0].nonzero()[0][0])
        cell = tensor.raw_values[0, cluster]
        distance_col = list(CONTEXT_FEATURES).index("avg_distance_km")
        assert cell[distance_col] == pytest.approx(5.0)  # mean of 4 and 6 km

    def test_unpopulated_cells_zero(self, small_synth_records):
        records = small_synth_records
        model = self._cluster_model(records)
        tensor = build_context_tensor(records, model, 8)
        empty = ~tensor.populated
        assert np.all(tensor.values[empty] == 0.0)

    def test_unknown_user_raises(self, small_synth_records):
        records = small_synth_records
        model = self._cluster_model(records)
        tensor = build_context_tensor(records, model, 8)
        with pytest.raises(NotFoundError):
            tensor.user_row("nobody")


class TestEmbeddings:
    def _factors(self):
        rng = np.random.default_rng(0)
        return CPFactors(A=rng.normal(size=(4, 3)), B=rng.normal(size=(5, 3)), C=rng.normal(size=(9, 3)), lam=np.ones(3), rank=3)

    def test_user_lookup_returns_row(self):
        factors = self._factors()
        vec = embedding_lookup(factors, ["ua", "ub", "uc", "ud"], user_id="ua")
        np.testing.assert_array_equal(vec, factors.A[0])

    def test_unknown_user(self):
        with pytest.raises(NotFoundError):
            embedding_lookup(self._factors(), ["ua"], user_id="nope")

    def test_cluster_lookup_shape(self):
        factors = self._factors()
        vec = embedding_lookup(factors, ["ua"], cluster_id=4)
        assert vec.shape == (3,)
        np.testing.assert_array_equal(vec, factors.B[4])

    def test_unknown_cluster(self):
        with pytest.raises(NotFoundError):
            embedding_lookup(self._factors(), ["ua"], cluster_id=7)


class TestCosineSimilarity:
    def test_self_similarity(self):
        v = np.array([0.3, -1.2, 4.0])
        assert cosine_similarity(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == pytest.approx(0.0)

    def test_hand_values(self):
        assert cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
        assert cosine_similarity([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(-1.0)

    def test_zero_vector_undefined(self):
        with pytest.raises(UndefinedSimilarityError):
            cosine_similarity([0.0, 0.0], [1.0, 2.0])

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31),
        alpha=st.floats(min_value=1e-3, max_value=1e3),
        beta=st.floats(min_value=1e-3, max_value=1e3),
    )
    def test_scale_invariance(self, seed, alpha, beta):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=4) + 1e-3
        b = rng.normal(size=4) + 1e-3
        base = cosine_similarity(a, b)
        assert cosine_similarity(alpha * a, beta * b) == pytest.approx(base, abs=1e-9)


def test_mode_product_shape_and_values():
    tensor = np.arange(24, dtype=float).reshape(2, 3, 4)
    mat = np.ones((5, 3))
    out = mode_product(tensor, mat, 1)
    assert out.shape == (2, 5, 4)
    np.testing.assert_allclose(out[:, 0, :], tensor.sum(axis=1))
