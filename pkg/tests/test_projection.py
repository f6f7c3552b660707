import csv

import numpy as np
import pytest

from encmap import (
    DistanceMatrix,
    ParameterError,
    ShapeError,
    fit_pca,
    apply_pca,
    pairwise_distances,
    transform_pca,
    tsne,
    write_layout_csv,
)
from helpers import make_feature


def _random_distances(rng, m, dim=6):
    vectors = [make_feature(rng.normal(size=dim), f"v{i}") for i in range(m)]
    return pairwise_distances(vectors)


def _two_cluster_distances():
    rng = np.random.default_rng(100)
    vectors = []
    for g, center in enumerate((0.0, 20.0)):
        for i in range(4):
            vals = np.full(3, center) + rng.normal(size=3) * 0.05
            vectors.append(make_feature(vals, f"g{g}p{i}"))
    return pairwise_distances(vectors)


class TestTsne:
    def test_too_few_points_rejected(self):
        d = DistanceMatrix(
            ids=("a", "b", "c"),
            values=np.array([[0.0, 1, 2], [1, 0.0, 1], [2, 1, 0.0]], dtype=float),
        )
        with pytest.raises(ParameterError):
            tsne(d, perplexity=1.5)

    @pytest.mark.parametrize("perp", [1.0, 0.5, 4.0, 10.0])
    def test_perplexity_bounds_rejected(self, perp):
        rng = np.random.default_rng(51)
        d = _random_distances(rng, 5)
        with pytest.raises(ParameterError):
            tsne(d, perplexity=perp, iterations=10)

    def test_bad_iteration_and_rate_rejected(self):
        rng = np.random.default_rng(52)
        d = _random_distances(rng, 6)
        with pytest.raises(ParameterError):
            tsne(d, perplexity=2.0, iterations=0)
        with pytest.raises(ParameterError):
            tsne(d, perplexity=2.0, learning_rate=0.0)

    def test_same_seed_is_bit_identical(self):
        rng = np.random.default_rng(53)
        d = _random_distances(rng, 10)
        a = tsne(d, perplexity=3.0, iterations=120, seed=9)
        b = tsne(d, perplexity=3.0, iterations=120, seed=9)
        assert np.array_equal(a.coords, b.coords)
        assert a.kl_divergence == b.kl_divergence

    def test_different_seed_changes_layout(self):
        rng = np.random.default_rng(54)
        d = _random_distances(rng, 10)
        a = tsne(d, perplexity=3.0, iterations=120, seed=0)
        b = tsne(d, perplexity=3.0, iterations=120, seed=1)
        assert not np.array_equal(a.coords, b.coords)

    def test_separates_two_tight_clusters(self):
        layout = tsne(_two_cluster_distances(), perplexity=2.5, iterations=500, seed=0)
        pos = {eid: layout.coords[k] for k, eid in enumerate(layout.ids)}
        group_a = [pos[f"g0p{i}"] for i in range(4)]
        group_b = [pos[f"g1p{i}"] for i in range(4)]
        intra = max(
            max(np.linalg.norm(a - b) for a in group_a for b in group_a),
            max(np.linalg.norm(a - b) for a in group_b for b in group_b),
        )
        inter = min(np.linalg.norm(a - b) for a in group_a for b in group_b)
        assert inter > intra

    def test_achieved_perplexity_close_to_requested(self):
        rng = np.random.default_rng(55)
        d = _random_distances(rng, 20)
        layout = tsne(d, perplexity=8.0, iterations=5, seed=0)
        np.testing.assert_allclose(layout.achieved_perplexity, 8.0, atol=1e-4)

    def test_kl_history_bookkeeping(self):
        rng = np.random.default_rng(56)
        d = _random_distances(rng, 12)
        layout = tsne(d, perplexity=3.5, iterations=80, seed=2)
        assert layout.kl_history.shape == (80,)
        assert np.all(np.isfinite(layout.kl_history))
        assert layout.kl_divergence == layout.kl_history[-1]
        assert layout.kl_divergence >= 0.0

    def test_kl_tail_settles_at_default_iterations(self):
        rng = np.random.default_rng(57)
        d = _random_distances(rng, 16)
        layout = tsne(d, perplexity=4.0, seed=1)
        tail = layout.kl_history[-50:]
        assert np.max(np.diff(tail)) <= 1e-3

    def test_layout_is_centered(self):
        rng = np.random.default_rng(58)
        d = _random_distances(rng, 10)
        layout = tsne(d, perplexity=3.0, iterations=60, seed=4)
        np.testing.assert_allclose(layout.coords.mean(axis=0), 0.0, atol=1e-9)

    def test_params_recorded(self):
        rng = np.random.default_rng(59)
        d = _random_distances(rng, 8)
        layout = tsne(d, perplexity=2.5, iterations=40, learning_rate=150.0, seed=7)
        assert layout.params.perplexity == 2.5
        assert layout.params.iterations == 40
        assert layout.params.learning_rate == 150.0
        assert layout.params.seed == 7
        assert layout.params.distance_metric == "l1"


class TestLayoutCsv:
    def test_values_round_trip_through_text(self, tmp_path):
        rng = np.random.default_rng(60)
        d = _random_distances(rng, 8)
        layout = tsne(d, perplexity=2.5, iterations=30, seed=0)
        path = tmp_path / "layout.csv"
        write_layout_csv(layout, path)
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == ["id", "x", "y"]
        assert len(rows) == 9
        for k, row in enumerate(rows[1:]):
            assert row[0] == layout.ids[k]
            assert float(row[1]) == layout.coords[k, 0]
            assert float(row[2]) == layout.coords[k, 1]


class TestPca:
    def test_recovers_planted_subspace(self):
        rng = np.random.default_rng(61)
        basis = np.linalg.qr(rng.normal(size=(10, 2)))[0].T
        weights = rng.normal(size=(40, 2)) * np.array([5.0, 2.0])
        x = weights @ basis + 3.0
        model = fit_pca(x, 2)
        span = model.components @ basis.T
        s = np.linalg.svd(span, compute_uv=False)
        np.testing.assert_allclose(s, 1.0, atol=1e-10)

    def test_matches_covariance_eigendecomposition(self):
        rng = np.random.default_rng(62)
        x = rng.normal(size=(30, 7))
        model = fit_pca(x, 4)
        centered = x - x.mean(axis=0)
        cov = centered.T @ centered / (x.shape[0] - 1)
        evals = np.sort(np.linalg.eigvalsh(cov))[::-1]
        np.testing.assert_allclose(model.explained_variance, evals[:4], atol=1e-10)

    def test_components_are_orthonormal(self):
        rng = np.random.default_rng(63)
        model = fit_pca(rng.normal(size=(25, 6)), 5)
        np.testing.assert_allclose(
            model.components @ model.components.T, np.eye(5), atol=1e-10
        )
        assert np.all(np.diff(model.explained_variance) <= 1e-12)

    def test_mean_projects_to_origin(self):
        rng = np.random.default_rng(64)
        x = rng.normal(size=(20, 5))
        model = fit_pca(x, 3)
        np.testing.assert_allclose(apply_pca(model, model.mean), 0.0, atol=1e-12)

    def test_apply_matches_direct_formula(self):
        rng = np.random.default_rng(65)
        x = rng.normal(size=(20, 5))
        model = fit_pca(x, 3)
        v = rng.normal(size=5)
        expected = (v - model.mean) @ model.components.T
        np.testing.assert_allclose(apply_pca(model, v), expected, atol=1e-12)

    def test_transform_matches_rowwise_apply(self):
        rng = np.random.default_rng(66)
        x = rng.normal(size=(15, 6))
        model = fit_pca(x, 2)
        batch = rng.normal(size=(4, 6))
        out = transform_pca(model, batch)
        for i in range(4):
            np.testing.assert_allclose(out[i], apply_pca(model, batch[i]), atol=1e-14)

    def test_accepts_feature_vectors(self):
        rng = np.random.default_rng(67)
        vectors = [make_feature(rng.normal(size=6), f"v{i}") for i in range(12)]
        model = fit_pca(vectors, 3)
        assert model.components.shape == (3, 6)
        out = apply_pca(model, vectors[0])
        assert out.shape == (3,)

    def test_k_bounds_rejected(self):
        rng = np.random.default_rng(68)
        x = rng.normal(size=(10, 4))
        with pytest.raises(ParameterError):
            fit_pca(x, 0)
        with pytest.raises(ParameterError):
            fit_pca(x, 5)

    def test_dimension_mismatch_rejected(self):
        rng = np.random.default_rng(69)
        model = fit_pca(rng.normal(size=(10, 4)), 2)
        with pytest.raises(ShapeError):
            apply_pca(model, np.zeros(5))
        with pytest.raises(ShapeError):
            transform_pca(model, np.zeros((3, 5)))

    def test_near_constant_direction_has_near_zero_variance(self):
        rng = np.random.default_rng(70)
        x = np.column_stack([rng.normal(size=30), np.full(30, 2.0)])
        model = fit_pca(x, 2)
        assert model.explained_variance[1] == pytest.approx(0.0, abs=1e-20)
